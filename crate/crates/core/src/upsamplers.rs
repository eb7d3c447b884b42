//! Upsampling layers: transposed convolution, interpolation, and resampling
//! with an optional high-band noise prior.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::filters::{self, FilterDesignSpec, FirKernel, InterpKind};
use crate::metrics::{self, AHR_FLOOR_DB};
use crate::signal::AudioBuffer;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpsamplerKind {
    ConvTranspose,
    LinearInterp,
    NearestInterp,
    AntiAliasedResample,
}

impl UpsamplerKind {
    pub const ALL: [UpsamplerKind; 4] = [
        UpsamplerKind::ConvTranspose,
        UpsamplerKind::LinearInterp,
        UpsamplerKind::NearestInterp,
        UpsamplerKind::AntiAliasedResample,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpsamplerSpec {
    pub kind: UpsamplerKind,
    pub factor: usize,
    /// Transposed-convolution kernel length.
    pub kernel_size: usize,
    pub seed: u64,
    pub noise_prior: bool,
    pub filter: FilterDesignSpec,
}

/// Taps of the seeded convolution that shapes the noise prior.
pub const NOISE_KERNEL_SIZE: usize = 7;

// Independent random streams drawn from one seed.
const STREAM_CONV_TRANSPOSE: u64 = 1;
const STREAM_NOISE_KERNEL: u64 = 2;
const STREAM_MIX_GAINS: u64 = 3;

/// Counter-based generator for `(seed, stream)`; streams never overlap.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl UpsamplerSpec {
    pub fn new(kind: UpsamplerKind, factor: usize) -> Self {
        Self {
            kind,
            factor,
            kernel_size: 2 * factor,
            seed: 0,
            noise_prior: false,
            filter: FilterDesignSpec::resampling(factor),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.factor < 2 {
            return Err(Error::invalid(format!("upsampling factor {} < 2", self.factor)));
        }
        if self.kind == UpsamplerKind::ConvTranspose && self.kernel_size < self.factor {
            return Err(Error::invalid(format!(
                "kernel size {} shorter than stride {}",
                self.kernel_size, self.factor
            )));
        }
        if self.kind == UpsamplerKind::AntiAliasedResample {
            self.filter.validate()?;
        }
        Ok(())
    }
}

/// Kernel and bias of a mono transposed convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvTransposeWeights {
    pub kernel: Vec<f64>,
    pub bias: f64,
}

impl ConvTransposeWeights {
    /// Uniform in ±1/√K for both kernel and bias.
    pub fn from_seed(seed: u64, kernel_size: usize) -> Self {
        let bound = 1.0 / (kernel_size as f64).sqrt();
        let mut rng = seeded_rng(seed, STREAM_CONV_TRANSPOSE);
        let kernel = (0..kernel_size)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        let bias = rng.random_range(-bound..bound);
        Self { kernel, bias }
    }
}

/// Stride-`factor` transposed convolution, padded by `(K − L)/2` so the
/// output is exactly `factor` times longer.
pub fn conv_transpose_with(x: &AudioBuffer, factor: usize, weights: &ConvTransposeWeights) -> Result<AudioBuffer> {
    let k_len = weights.kernel.len();
    if factor == 0 || k_len < factor {
        return Err(Error::invalid("transposed convolution needs kernel length >= stride >= 1"));
    }
    let offset = ((k_len - factor) / 2) as isize;
    let out_len = x.len() * factor;
    let mut out = vec![weights.bias; out_len];
    for (m, &xm) in x.samples().iter().enumerate() {
        let base = (m * factor) as isize - offset;
        for (k, &w) in weights.kernel.iter().enumerate() {
            let j = base + k as isize;
            if j >= 0 && (j as usize) < out_len {
                out[j as usize] += xm * w;
            }
        }
    }
    let rate = x.sample_rate() as u64 * factor as u64;
    AudioBuffer::new(out, u32::try_from(rate).map_err(|_| Error::invalid("sample rate overflow"))?)
}

pub fn conv_transpose_1d(x: &AudioBuffer, spec: &UpsamplerSpec) -> Result<AudioBuffer> {
    if spec.kind != UpsamplerKind::ConvTranspose {
        return Err(Error::invalid("conv_transpose_1d needs a ConvTranspose spec"));
    }
    spec.validate()?;
    let weights = ConvTransposeWeights::from_seed(spec.seed, spec.kernel_size);
    conv_transpose_with(x, spec.factor, &weights)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterpMode {
    Linear,
    Nearest,
}

/// Zero-interlace then apply the interpolation-equivalent kernel with
/// `N = factor`: piecewise linear, or sample-and-hold for nearest.
pub fn interp_upsample(x: &AudioBuffer, mode: InterpMode, factor: usize) -> Result<AudioBuffer> {
    if factor < 2 {
        return Err(Error::invalid(format!("upsampling factor {factor} < 2")));
    }
    let kernel = match mode {
        InterpMode::Linear => filters::interp_kernel(InterpKind::Linear, factor)?,
        InterpMode::Nearest => filters::interp_kernel(InterpKind::NearestHold, factor)?,
    };
    let stuffed = filters::zero_interlace(x, factor)?;
    Ok(filters::convolve(&stuffed, &kernel))
}

/// Resampling layer: `upsample_filtered` on the main path, plus (when
/// enabled) a seeded, high-passed image of `prior_source` mixed in with
/// seeded unit-mean gains.
pub fn aa_resample_upsample(x: &AudioBuffer, prior_source: &AudioBuffer, spec: &UpsamplerSpec) -> Result<AudioBuffer> {
    if spec.kind != UpsamplerKind::AntiAliasedResample {
        return Err(Error::invalid("aa_resample_upsample needs an AntiAliasedResample spec"));
    }
    spec.validate()?;
    let main = filters::upsample_filtered(x, spec.factor, &spec.filter)?;
    if !spec.noise_prior {
        return Ok(main);
    }
    if prior_source.len() != x.len() || prior_source.sample_rate() != x.sample_rate() {
        return Err(Error::invalid("prior source must match the input length and rate"));
    }
    let prior = noise_prior(prior_source, spec)?;
    let mut rng = seeded_rng(spec.seed, STREAM_MIX_GAINS);
    let g_main: f64 = rng.random_range(0.5..1.5);
    let g_prior: f64 = rng.random_range(0.5..1.5);
    let mixed = main
        .samples()
        .iter()
        .zip(prior.samples())
        .map(|(m, p)| g_main * m + g_prior * p)
        .collect();
    AudioBuffer::new(mixed, main.sample_rate())
}

/// High-band prior: zero-interlace, seeded short convolution, then the
/// high-pass complementary to the main-path low-pass.
pub fn noise_prior(prior_source: &AudioBuffer, spec: &UpsamplerSpec) -> Result<AudioBuffer> {
    let stuffed = filters::zero_interlace(prior_source, spec.factor)?;
    let bound = 1.0 / (NOISE_KERNEL_SIZE as f64).sqrt();
    let mut rng = seeded_rng(spec.seed, STREAM_NOISE_KERNEL);
    let taps = (0..NOISE_KERNEL_SIZE)
        .map(|_| rng.random_range(-bound..bound))
        .collect();
    let shaped = filters::convolve(&stuffed, &FirKernel::new(taps, NOISE_KERNEL_SIZE / 2)?);
    let hp = filters::design_fir(&FilterDesignSpec::highpass(
        1.0 / spec.factor as f64,
        spec.filter.transition_width,
        spec.filter.stopband_atten_db,
    ))?;
    Ok(filters::convolve(&shaped, &hp))
}

/// Dispatches on `spec.kind`. `prior_source` is only read by the resampling
/// layer with the prior enabled.
pub fn upsample(x: &AudioBuffer, prior_source: &AudioBuffer, spec: &UpsamplerSpec) -> Result<AudioBuffer> {
    spec.validate()?;
    match spec.kind {
        UpsamplerKind::ConvTranspose => conv_transpose_1d(x, spec),
        UpsamplerKind::LinearInterp => interp_upsample(x, InterpMode::Linear, spec.factor),
        UpsamplerKind::NearestInterp => interp_upsample(x, InterpMode::Nearest, spec.factor),
        UpsamplerKind::AntiAliasedResample => aa_resample_upsample(x, prior_source, spec),
    }
}

/// Mirror images `|n·F_in ± k·f0|` (n = 1..L−1) of the partials `k·f0`
/// (k ≤ k_max, below the input Nyquist), limited to `(0, L·F_in/2]`. Images
/// within `tolerance` of a baseband harmonic are dropped.
pub fn image_frequencies(f0: f64, factor: usize, input_rate: u32, k_max: usize, tolerance: f64) -> Vec<f64> {
    let fs_in = input_rate as f64;
    let in_nyquist = fs_in / 2.0;
    let out_nyquist = factor as f64 * in_nyquist;
    let partials: Vec<f64> = (1..=k_max)
        .map(|k| k as f64 * f0)
        .take_while(|&f| f < in_nyquist)
        .collect();
    let mut images: Vec<f64> = (1..factor)
        .flat_map(|n| {
            let line = n as f64 * fs_in;
            partials
                .iter()
                .flat_map(move |&p| [(line - p).abs(), line + p])
        })
        .filter(|&f| f > 0.0 && f <= out_nyquist)
        .filter(|&f| partials.iter().all(|h| (f - h).abs() >= tolerance))
        .collect();
    images.sort_by(f64::total_cmp);
    images.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    images
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TonalProbeResult {
    /// Energy on the stride lines n·F_in (n = 1..L−1) relative to total, dB.
    pub stride_line_db: f64,
    pub dc_input_bias: f64,
}

/// Measures stride-line energy of a layer output produced from a constant
/// input of value `dc_input_bias`.
pub fn tonal_probe(output: &AudioBuffer, input_rate: u32, factor: usize, dc_input_bias: f64) -> Result<TonalProbeResult> {
    let s = metrics::estimate_spectrum(output)?;
    let hw = s.band_half_width();
    let lines: f64 = (1..factor)
        .map(|n| metrics::band_energy(&s, n as f64 * input_rate as f64, hw))
        .sum();
    let total = s.total_power();
    let stride_line_db = if total > 0.0 && lines > 0.0 {
        (10.0 * (lines / total).log10()).max(AHR_FLOOR_DB)
    } else {
        AHR_FLOOR_DB
    };
    Ok(TonalProbeResult {
        stride_line_db,
        dc_input_bias,
    })
}

/// Samples of constant input fed to a layer by [`probe_layer`].
pub const PROBE_LEN: usize = 32_768;

/// Runs `spec` on a constant input (also used as its own prior source) and
/// probes the output for stride-line tones.
pub fn probe_layer(spec: &UpsamplerSpec, dc_input_bias: f64, input_rate: u32) -> Result<TonalProbeResult> {
    let x = AudioBuffer::new(vec![dc_input_bias; PROBE_LEN], input_rate)?;
    let y = upsample(&x, &x, spec)?;
    tonal_probe(&y, input_rate, spec.factor, dc_input_bias)
}
