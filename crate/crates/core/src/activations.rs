//! Pointwise nonlinearities, their first-order antiderivative anti-aliased
//! (ADAA) forms, and the oversampling wrapper.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::filters::{self, FilterDesignSpec};
use crate::signal::AudioBuffer;

/// Below this |u| the sinc family is evaluated by Taylor series.
const SINC_SERIES_LIMIT: f64 = 1e-4;

/// Unnormalised sinc, `sin(u)/u` with `sinc(0) = 1`.
pub fn sinc(u: f64) -> f64 {
    if u.abs() < SINC_SERIES_LIMIT {
        let u2 = u * u;
        1.0 - u2 / 6.0 * (1.0 - u2 / 20.0 * (1.0 - u2 / 42.0))
    } else {
        u.sin() / u
    }
}

/// `d/du sinc(u) = (cos u − sinc u)/u`, with the removable singularity at 0
/// taken from the series `−u/3 + u³/30 − u⁵/840 + u⁷/45360`.
pub fn sinc_derivative(u: f64) -> f64 {
    if u.abs() < SINC_SERIES_LIMIT {
        let u2 = u * u;
        -u / 3.0 + u * u2 / 30.0 - u * u2 * u2 / 840.0 + u * u2 * u2 * u2 / 45_360.0
    } else {
        (u.cos() - u.sin() / u) / u
    }
}

/// SnakeBeta: `x + sin²(αx)/β`.
pub fn snakebeta(x: f64, alpha: f64, beta: f64) -> f64 {
    let s = (alpha * x).sin();
    x + s * s / beta
}

/// Antiderivative of [`snakebeta`] with zero integration constant.
pub fn snakebeta_antiderivative(x: f64, alpha: f64, beta: f64) -> f64 {
    x * x / 2.0 + x / (2.0 * beta) - (2.0 * alpha * x).sin() / (4.0 * alpha * beta)
}

/// Closed-form ADAA SnakeBeta. No division by `x_t − x_prev` occurs, so
/// equal consecutive samples need no special case.
pub fn adaa_snakebeta(x_t: f64, x_prev: f64, alpha: f64, beta: f64) -> f64 {
    let sum = alpha * (x_t + x_prev);
    let diff = alpha * (x_t - x_prev);
    1.0 / (2.0 * beta) + (x_t + x_prev) / 2.0 - sum.cos() * sinc(diff) / (2.0 * beta)
}

/// Partial derivatives `(∂y/∂x_t, ∂y/∂x_prev)` of [`adaa_snakebeta`]. Both
/// lie in `[(β−α)/(2β), (β+α)/(2β)]`.
pub fn adaa_snakebeta_grad(x_t: f64, x_prev: f64, alpha: f64, beta: f64) -> (f64, f64) {
    let sum = alpha * (x_t + x_prev);
    let diff = alpha * (x_t - x_prev);
    let k = alpha / (2.0 * beta);
    let (s, c) = sum.sin_cos();
    let common = 0.5 + k * s * sinc(diff);
    let odd = k * c * sinc_derivative(diff);
    (common - odd, common + odd)
}

/// Fourier magnitude of `relu(sin ωt)` at `k·ω`.
pub fn relu_sine_fourier(k: usize) -> f64 {
    match k {
        0 => 1.0 / PI,
        1 => 0.5,
        k if k % 2 == 1 => 0.0,
        k => {
            let m = (k / 2) as f64;
            2.0 / (PI * (2.0 * m - 1.0) * (2.0 * m + 1.0))
        }
    }
}

/// A memoryless nonlinearity with a known antiderivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Nonlinearity {
    Identity,
    LeakyRelu { slope: f64 },
    Elu { a: f64 },
    SnakeBeta { alpha: f64, beta: f64 },
}

impl Nonlinearity {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Nonlinearity::Identity => x,
            Nonlinearity::LeakyRelu { slope } => {
                if x >= 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Nonlinearity::Elu { a } => {
                if x >= 0.0 {
                    x
                } else {
                    a * x.exp_m1()
                }
            }
            Nonlinearity::SnakeBeta { alpha, beta } => snakebeta(x, alpha, beta),
        }
    }

    /// First antiderivative, zero at the origin.
    pub fn antiderivative(&self, x: f64) -> f64 {
        match *self {
            Nonlinearity::Identity => x * x / 2.0,
            Nonlinearity::LeakyRelu { slope } => {
                if x >= 0.0 {
                    x * x / 2.0
                } else {
                    slope * x * x / 2.0
                }
            }
            Nonlinearity::Elu { a } => {
                if x >= 0.0 {
                    x * x / 2.0
                } else {
                    a * (x.exp_m1() - x)
                }
            }
            Nonlinearity::SnakeBeta { alpha, beta } => snakebeta_antiderivative(x, alpha, beta),
        }
    }

    pub fn adaa_pair(self) -> Result<AdaaPair<impl Fn(f64) -> f64, impl Fn(f64) -> f64>> {
        AdaaPair::new(move |x| self.eval(x), move |x| self.antiderivative(x))
    }
}

/// A function together with its first antiderivative.
#[derive(Clone)]
pub struct AdaaPair<F, AF> {
    f: F,
    antiderivative: AF,
}

/// Grid on which [`AdaaPair::new`] checks `F' = f`.
const VERIFY_GRID: (f64, f64, usize) = (-3.0, 3.0, 97);

impl<F, AF> AdaaPair<F, AF>
where
    F: Fn(f64) -> f64,
    AF: Fn(f64) -> f64,
{
    /// Registers `(f, F)` after checking numerically that `dF/dx ≈ f`.
    pub fn new(f: F, antiderivative: AF) -> Result<Self> {
        let (lo, hi, n) = VERIFY_GRID;
        let h = 1e-5;
        for i in 0..n {
            let x = lo + (hi - lo) * i as f64 / (n - 1) as f64 + 1e-3;
            let numeric = (antiderivative(x + h) - antiderivative(x - h)) / (2.0 * h);
            let exact = f(x);
            if (numeric - exact).abs() > 1e-6 * exact.abs().max(1.0) {
                return Err(Error::invalid(format!(
                    "antiderivative mismatch at x={x}: dF/dx={numeric}, f={exact}"
                )));
            }
        }
        Ok(Self { f, antiderivative })
    }

    pub fn f(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn antiderivative(&self, x: f64) -> f64 {
        (self.antiderivative)(x)
    }
}

/// First-order ADAA with midpoint fallback when `|x_t − x_prev| < tol`.
pub fn adaa_generic<F, AF>(pair: &AdaaPair<F, AF>, x_t: f64, x_prev: f64, tol: f64) -> f64
where
    F: Fn(f64) -> f64,
    AF: Fn(f64) -> f64,
{
    let d = x_t - x_prev;
    if d.abs() < tol {
        pair.f(0.5 * (x_t + x_prev))
    } else {
        (pair.antiderivative(x_t) - pair.antiderivative(x_prev)) / d
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActivationKind {
    Identity,
    LeakyRelu { slope: f64 },
    Elu { a: f64 },
    SnakeBeta,
    AdaaSnakeBeta,
    /// Divided-difference ADAA of a base nonlinearity.
    AdaaGeneric(BaseActivation),
}

/// Nonlinearities usable under [`ActivationKind::AdaaGeneric`]. SnakeBeta
/// takes α, β from the enclosing spec.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaseActivation {
    Identity,
    LeakyRelu { slope: f64 },
    Elu { a: f64 },
    SnakeBeta,
}

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.1;
pub const DEFAULT_ELU_A: f64 = 1.0;
pub const DEFAULT_ADAA_TOL: f64 = 1e-5;
pub const ALLOWED_OVERSAMPLING: [usize; 4] = [1, 2, 4, 8];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivationSpec {
    pub kind: ActivationKind,
    pub alpha: f64,
    pub beta: f64,
    pub oversample_factor: usize,
    /// Midpoint-fallback threshold for generic ADAA.
    pub adaa_tol: f64,
}

impl ActivationSpec {
    pub fn new(kind: ActivationKind, oversample_factor: usize) -> Self {
        Self {
            kind,
            alpha: 1.0,
            beta: 1.0,
            oversample_factor,
            adaa_tol: DEFAULT_ADAA_TOL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid(format!("beta must be positive, got {}", self.beta)));
        }
        if !ALLOWED_OVERSAMPLING.contains(&self.oversample_factor) {
            return Err(Error::invalid(format!(
                "oversample factor {} not in {ALLOWED_OVERSAMPLING:?}",
                self.oversample_factor
            )));
        }
        if !(self.adaa_tol > 0.0) {
            return Err(Error::invalid("adaa_tol must be positive"));
        }
        Ok(())
    }

    fn base(&self, b: BaseActivation) -> Nonlinearity {
        match b {
            BaseActivation::Identity => Nonlinearity::Identity,
            BaseActivation::LeakyRelu { slope } => Nonlinearity::LeakyRelu { slope },
            BaseActivation::Elu { a } => Nonlinearity::Elu { a },
            BaseActivation::SnakeBeta => Nonlinearity::SnakeBeta {
                alpha: self.alpha,
                beta: self.beta,
            },
        }
    }
}

/// Memory carried between samples by ADAA variants.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AdaaState {
    pub prev_sample: f64,
}

/// Sample-by-sample application at the native rate. Feeding a signal in
/// blocks gives the same output as feeding it whole.
#[derive(Debug, Clone)]
pub struct ActivationStream {
    kind: ActivationKind,
    alpha: f64,
    beta: f64,
    tol: f64,
    base: Nonlinearity,
    state: AdaaState,
}

impl ActivationStream {
    pub fn new(spec: &ActivationSpec) -> Self {
        let base = match spec.kind {
            ActivationKind::Identity => Nonlinearity::Identity,
            ActivationKind::LeakyRelu { slope } => Nonlinearity::LeakyRelu { slope },
            ActivationKind::Elu { a } => Nonlinearity::Elu { a },
            ActivationKind::SnakeBeta | ActivationKind::AdaaSnakeBeta => Nonlinearity::SnakeBeta {
                alpha: spec.alpha,
                beta: spec.beta,
            },
            ActivationKind::AdaaGeneric(b) => spec.base(b),
        };
        Self {
            kind: spec.kind,
            alpha: spec.alpha,
            beta: spec.beta,
            tol: spec.adaa_tol,
            base,
            state: AdaaState::default(),
        }
    }

    pub fn state(&self) -> AdaaState {
        self.state
    }

    pub fn process_sample(&mut self, x: f64) -> f64 {
        let prev = self.state.prev_sample;
        self.state.prev_sample = x;
        match self.kind {
            ActivationKind::AdaaSnakeBeta => adaa_snakebeta(x, prev, self.alpha, self.beta),
            ActivationKind::AdaaGeneric(_) => {
                let d = x - prev;
                if d.abs() < self.tol {
                    self.base.eval(0.5 * (x + prev))
                } else {
                    (self.base.antiderivative(x) - self.base.antiderivative(prev)) / d
                }
            }
            _ => self.base.eval(x),
        }
    }

    pub fn process(&mut self, block: &[f64]) -> Vec<f64> {
        block.iter().map(|&x| self.process_sample(x)).collect()
    }
}

/// Applies `kind` at `factor`× the input rate between an anti-imaging
/// upsampler and an anti-aliasing decimator built from `filter`. Any factor
/// ≥ 1 is accepted here; [`ActivationSpec`] restricts the configurable set.
pub fn apply_oversampled(x: &AudioBuffer, spec: &ActivationSpec, factor: usize, filter: &FilterDesignSpec) -> Result<AudioBuffer> {
    let mut stream = ActivationStream::new(spec);
    if factor == 1 {
        let y = stream.process(x.samples());
        return finite(y, x.sample_rate());
    }
    let up = filters::upsample_filtered(x, factor, filter)?;
    let shaped = finite(stream.process(up.samples()), up.sample_rate())?;
    filters::downsample_filtered(&shaped, factor, filter)
}

fn finite(samples: Vec<f64>, rate: u32) -> Result<AudioBuffer> {
    AudioBuffer::new(samples, rate)
}

/// Applies the activation described by `spec`, oversampled when
/// `spec.oversample_factor > 1`. Output has the input's length and rate.
pub fn apply_activation(x: &AudioBuffer, spec: &ActivationSpec) -> Result<AudioBuffer> {
    spec.validate()?;
    let c = spec.oversample_factor;
    apply_oversampled(x, spec, c, &FilterDesignSpec::resampling(c))
}
