//! FIR design and the resampling primitives built on it.
//!
//! Every filter here is an FIR with an explicit zero-delay tap (`center`), so
//! filtering never shifts the signal in time. Convolution edges are zero
//! padded.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::signal::AudioBuffer;

/// Finite impulse response with the index of its zero-delay tap.
#[derive(Debug, Clone, PartialEq)]
pub struct FirKernel {
    taps: Vec<f64>,
    center: usize,
    dc_gain: f64,
}

impl FirKernel {
    pub fn new(taps: Vec<f64>, center: usize) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::invalid("kernel needs at least one tap"));
        }
        if center >= taps.len() {
            return Err(Error::invalid(format!(
                "center {center} outside kernel of {} taps",
                taps.len()
            )));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::Numeric("non-finite filter tap".into()));
        }
        let dc_gain = taps.iter().sum();
        Ok(Self {
            taps,
            center,
            dc_gain,
        })
    }

    pub fn identity() -> Self {
        Self {
            taps: vec![1.0],
            center: 0,
            dc_gain: 1.0,
        }
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn center(&self) -> usize {
        self.center
    }

    pub fn dc_gain(&self) -> f64 {
        self.dc_gain
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// True when taps mirror about `center` within `tol`.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        let n = self.taps.len();
        if 2 * self.center + 1 != n {
            return false;
        }
        (0..n / 2).all(|i| (self.taps[i] - self.taps[n - 1 - i]).abs() <= tol)
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            taps: self.taps.iter().map(|t| t * gain).collect(),
            center: self.center,
            dc_gain: self.dc_gain * gain,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    LowPass,
    HighPass,
}

/// Kaiser-window design request. Frequencies are fractions of Nyquist.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterDesignSpec {
    /// Centre of the transition band, in (0, 1).
    pub cutoff: f64,
    /// Full transition width.
    pub transition_width: f64,
    pub stopband_atten_db: f64,
    pub kind: FilterKind,
}

/// Stopband attenuation used by every benchmark filter.
pub const BENCH_STOPBAND_DB: f64 = 100.0;
/// Transition width of benchmark filters, as a fraction of the base-rate Nyquist.
pub const BENCH_TRANSITION: f64 = 0.05;

impl FilterDesignSpec {
    pub fn lowpass(cutoff: f64, transition_width: f64, stopband_atten_db: f64) -> Self {
        Self {
            cutoff,
            transition_width,
            stopband_atten_db,
            kind: FilterKind::LowPass,
        }
    }

    pub fn highpass(cutoff: f64, transition_width: f64, stopband_atten_db: f64) -> Self {
        Self {
            kind: FilterKind::HighPass,
            ..Self::lowpass(cutoff, transition_width, stopband_atten_db)
        }
    }

    /// Anti-imaging / anti-aliasing low-pass for an integer rate change by
    /// `factor`, expressed at the high rate: cutoff 1/L and a transition of
    /// 5 % of the base-rate Nyquist.
    pub fn resampling(factor: usize) -> Self {
        let l = factor.max(1) as f64;
        Self::lowpass(1.0 / l, BENCH_TRANSITION / l, BENCH_STOPBAND_DB)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cutoff > 0.0 && self.cutoff < 1.0) {
            return Err(Error::invalid(format!("cutoff {} outside (0, 1)", self.cutoff)));
        }
        if !(self.transition_width > 0.0) {
            return Err(Error::invalid(format!(
                "transition width {} must be positive",
                self.transition_width
            )));
        }
        let half = self.transition_width / 2.0;
        if self.cutoff - half <= 0.0 || self.cutoff + half >= 1.0 {
            return Err(Error::invalid("transition band does not fit inside (0, 1)"));
        }
        if !(self.stopband_atten_db > 0.0) {
            return Err(Error::invalid("stopband attenuation must be positive"));
        }
        Ok(())
    }
}

/// Zeroth-order modified Bessel function of the first kind (power series).
pub fn bessel_i0(x: f64) -> f64 {
    let half_sq = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        term *= half_sq / (k * k);
        sum += term;
        if term < sum * 1e-17 {
            return sum;
        }
        k += 1.0;
    }
}

/// Kaiser's empirical shape parameter for a given attenuation.
pub fn kaiser_beta(atten_db: f64) -> f64 {
    if atten_db > 50.0 {
        0.1102 * (atten_db - 8.7)
    } else if atten_db >= 21.0 {
        0.5842 * (atten_db - 21.0).powf(0.4) + 0.07886 * (atten_db - 21.0)
    } else {
        0.0
    }
}

/// Odd tap count from Kaiser's length estimate.
pub fn kaiser_num_taps(atten_db: f64, transition_width: f64) -> usize {
    let delta_omega = PI * transition_width;
    let order = ((atten_db - 7.95) / (2.285 * delta_omega)).ceil().max(2.0) as usize;
    let taps = order + 1;
    if taps.is_multiple_of(2) {
        taps + 1
    } else {
        taps
    }
}

pub fn kaiser_window(len: usize, beta: f64) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let denom = bessel_i0(beta);
    let m = (len - 1) as f64;
    (0..len)
        .map(|n| {
            let r = 2.0 * n as f64 / m - 1.0;
            bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / denom
        })
        .collect()
}

/// Kaiser-windowed sinc. Low-pass kernels are normalised to unit DC gain;
/// high-pass kernels are the spectral inversion of the matching low-pass.
pub fn design_fir(spec: &FilterDesignSpec) -> Result<FirKernel> {
    spec.validate()?;
    let len = kaiser_num_taps(spec.stopband_atten_db, spec.transition_width);
    let center = len / 2;
    let window = kaiser_window(len, kaiser_beta(spec.stopband_atten_db));
    let mut taps: Vec<f64> = window
        .iter()
        .enumerate()
        .map(|(n, w)| {
            let t = n as f64 - center as f64;
            let ideal = if t == 0.0 {
                spec.cutoff
            } else {
                (PI * spec.cutoff * t).sin() / (PI * t)
            };
            ideal * w
        })
        .collect();
    // Exact mirror so the kernel is linear phase to the last bit.
    for i in 0..center {
        taps[len - 1 - i] = taps[i];
    }
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);

    if spec.kind == FilterKind::HighPass {
        taps.iter_mut().for_each(|t| *t = -*t);
        taps[center] += 1.0;
    }
    FirKernel::new(taps, center)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for i in 0..chunks {
        let j = 4 * i;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut tail = 0.0;
    for j in 4 * chunks..n {
        tail += a[j] * b[j];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Zero-delay filtering of raw samples: `y[n] = Σ_k h[k]·x[n + k − center]`.
pub(crate) fn filter_samples(x: &[f64], h: &FirKernel) -> Vec<f64> {
    let len = x.len() as isize;
    let k_len = h.taps.len() as isize;
    let c = h.center as isize;
    (0..len)
        .map(|n| {
            let start = n - c;
            let k_lo = (-start).max(0);
            let k_hi = (len - start).min(k_len);
            if k_lo >= k_hi {
                return 0.0;
            }
            let xs = &x[(start + k_lo) as usize..(start + k_hi) as usize];
            dot(&h.taps[k_lo as usize..k_hi as usize], xs)
        })
        .collect()
}

/// Same-length FIR filtering aligned on the kernel's zero-delay tap.
pub fn convolve(x: &AudioBuffer, h: &FirKernel) -> AudioBuffer {
    AudioBuffer::from_parts(filter_samples(x.samples(), h), x.sample_rate())
}

fn check_factor(factor: usize) -> Result<()> {
    if factor == 0 {
        return Err(Error::invalid("rate factor must be at least 1"));
    }
    Ok(())
}

fn scaled_rate(rate: u32, factor: usize) -> Result<u32> {
    u32::try_from(rate as u64 * factor as u64)
        .map_err(|_| Error::invalid("sample rate overflow after upsampling"))
}

/// Inserts `factor − 1` zeros after every sample.
pub fn zero_interlace(x: &AudioBuffer, factor: usize) -> Result<AudioBuffer> {
    check_factor(factor)?;
    let mut out = vec![0.0; x.len() * factor];
    for (i, &s) in x.samples().iter().enumerate() {
        out[i * factor] = s;
    }
    Ok(AudioBuffer::from_parts(out, scaled_rate(x.sample_rate(), factor)?))
}

/// Polyphase evaluation of `factor · (zero_interlace(x) ⊛ h)`.
pub(crate) fn upsample_with_kernel(x: &[f64], factor: usize, h: &FirKernel, gain: f64) -> Vec<f64> {
    let l = factor as isize;
    let c = h.center as isize;
    let k_len = h.taps.len() as isize;
    let len = x.len() as isize;

    // phases[p]: taps hit by outputs j ≡ p (mod L), and the offset r of the first one.
    let phases: Vec<(isize, Vec<f64>)> = (0..l)
        .map(|p| {
            let r = (c - p).rem_euclid(l);
            let sub = (r..k_len)
                .step_by(factor)
                .map(|k| h.taps[k as usize] * gain)
                .collect();
            (r, sub)
        })
        .collect();

    let mut out = vec![0.0; x.len() * factor];
    for (j, y) in out.iter_mut().enumerate() {
        let j = j as isize;
        let (r, sub) = &phases[(j % l) as usize];
        let m0 = (j - c + r).div_euclid(l);
        let sub_len = sub.len() as isize;
        let i_lo = (-m0).max(0);
        let i_hi = (len - m0).min(sub_len);
        if i_lo >= i_hi {
            continue;
        }
        *y = dot(
            &sub[i_lo as usize..i_hi as usize],
            &x[(m0 + i_lo) as usize..(m0 + i_hi) as usize],
        );
    }
    out
}

/// Zero-interlace by `factor`, then low-pass with gain `factor`.
pub fn upsample_filtered(x: &AudioBuffer, factor: usize, spec: &FilterDesignSpec) -> Result<AudioBuffer> {
    check_factor(factor)?;
    if factor == 1 {
        return Ok(x.clone());
    }
    let h = design_fir(spec)?;
    let rate = scaled_rate(x.sample_rate(), factor)?;
    Ok(AudioBuffer::from_parts(
        upsample_with_kernel(x.samples(), factor, &h, factor as f64),
        rate,
    ))
}

/// `y[m] = Σ_k h[k]·x[mL + k − center]`, i.e. filter then keep every L-th sample.
pub(crate) fn downsample_with_kernel(x: &[f64], factor: usize, h: &FirKernel) -> Vec<f64> {
    let len = x.len() as isize;
    let k_len = h.taps.len() as isize;
    let c = h.center as isize;
    let out_len = x.len().div_ceil(factor);
    (0..out_len as isize)
        .map(|m| {
            let start = m * factor as isize - c;
            let k_lo = (-start).max(0);
            let k_hi = (len - start).min(k_len);
            if k_lo >= k_hi {
                return 0.0;
            }
            dot(
                &h.taps[k_lo as usize..k_hi as usize],
                &x[(start + k_lo) as usize..(start + k_hi) as usize],
            )
        })
        .collect()
}

/// Low-pass then decimate by `factor`.
pub fn downsample_filtered(x: &AudioBuffer, factor: usize, spec: &FilterDesignSpec) -> Result<AudioBuffer> {
    check_factor(factor)?;
    if x.len() < factor {
        return Err(Error::TooShort {
            needed: factor,
            got: x.len(),
        });
    }
    if !x.sample_rate().is_multiple_of(factor as u32) {
        return Err(Error::invalid(format!(
            "sample rate {} not divisible by {factor}",
            x.sample_rate()
        )));
    }
    if factor == 1 {
        return Ok(x.clone());
    }
    let h = design_fir(spec)?;
    Ok(AudioBuffer::from_parts(
        downsample_with_kernel(x.samples(), factor, &h),
        x.sample_rate() / factor as u32,
    ))
}

/// `H(ω) = Σ h[n]·e^{−iωn}` on `n_points` uniform samples of ω ∈ [0, π].
/// The first element of each pair is ω/π.
pub fn frequency_response(h: &FirKernel, n_points: usize) -> Result<Vec<(f64, Complex64)>> {
    if n_points < 2 {
        return Err(Error::invalid("frequency response needs at least 2 points"));
    }
    Ok((0..n_points)
        .map(|i| {
            let norm = i as f64 / (n_points - 1) as f64;
            let omega = PI * norm;
            let (re, im) = h
                .taps
                .iter()
                .enumerate()
                .fold((0.0, 0.0), |(re, im), (n, &t)| {
                    let (s, c) = (omega * n as f64).sin_cos();
                    (re + t * c, im - t * s)
                });
            (norm, Complex64::new(re, im))
        })
        .collect())
}

/// Magnitude floor for dB conversion of exact zeros.
pub const RESPONSE_FLOOR_DB: f64 = -300.0;

pub fn magnitude_db(h: Complex64) -> f64 {
    let m = h.norm();
    if m > 0.0 {
        (20.0 * m.log10()).max(RESPONSE_FLOOR_DB)
    } else {
        RESPONSE_FLOOR_DB
    }
}

/// CSV with header `omega_normalized,magnitude_db,phase_rad`.
pub fn response_csv(points: &[(f64, Complex64)]) -> String {
    let mut s = String::from("omega_normalized,magnitude_db,phase_rad\n");
    for (w, h) in points {
        let _ = writeln!(s, "{:.6},{:.6},{:.6}", w, magnitude_db(*h), h.arg());
    }
    s
}

/// Kernels equivalent to interpolation by zero-interlacing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterpKind {
    /// Triangle `1 − |t/N|` on |t| ≤ N.
    Linear,
    /// Box of ones on |t| ≤ N.
    Nearest,
    /// Causal sample-and-hold box of width N (ones on t ∈ (−N, 0]).
    NearestHold,
}

pub fn interp_kernel(kind: InterpKind, half_len: usize) -> Result<FirKernel> {
    if half_len == 0 {
        return Err(Error::invalid("interpolation kernel needs N >= 1"));
    }
    let n = half_len as f64;
    match kind {
        InterpKind::Linear => {
            let taps = (0..=2 * half_len)
                .map(|i| 1.0 - (i as f64 - n).abs() / n)
                .collect();
            FirKernel::new(taps, half_len)
        }
        InterpKind::Nearest => FirKernel::new(vec![1.0; 2 * half_len + 1], half_len),
        InterpKind::NearestHold => FirKernel::new(vec![1.0; half_len], half_len - 1),
    }
}
