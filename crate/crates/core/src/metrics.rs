//! Spectral analysis and the aliasing-to-harmonic ratio (AHR).
//!
//! Spectra are single long-frame FFTs of the edge-trimmed signal, zero-padded
//! to at least four times the frame length. The default analysis window is a
//! Kaiser window (β = 16): its sidelobes sit far enough down that harmonic
//! leakage does not masquerade as aliasing a few hertz away. AHR compares the
//! energy in narrow bands around alias (or image) frequencies with the energy
//! in bands around the legitimate harmonics; bands span the window main lobe,
//! six analysis bins on each side, where one analysis bin is
//! `sample_rate / frame_len`.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::signal::{AudioBuffer, MAX_PARTIAL_ORDER};
use crate::upsamplers::image_frequencies;

/// Samples discarded at each end before analysis.
pub const EDGE_DISCARD: usize = 8192;
/// Shortest frame accepted by [`estimate_spectrum`].
pub const MIN_FRAME: usize = 1024;
/// Lower clamp for AHR values.
pub const AHR_FLOOR_DB: f64 = -120.0;
/// Band half-width in analysis bins; covers the main lobe of
/// [`ANALYSIS_WINDOW`].
pub const BAND_HALF_WIDTH_BINS: f64 = 6.0;
/// Window used by [`estimate_spectrum`].
pub const ANALYSIS_WINDOW: Window = Window::Kaiser { beta: 16.0 };

/// Length of the analysed frame for a signal of `len` samples.
pub fn analysis_len(len: usize) -> usize {
    if len >= 2 * EDGE_DISCARD + MIN_FRAME {
        len - 2 * EDGE_DISCARD
    } else {
        len
    }
}

/// Resolution of the analysis frame (before zero padding), Hz.
pub fn analysis_bin_width(len: usize, sample_rate: u32) -> f64 {
    sample_rate as f64 / analysis_len(len).max(1) as f64
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn forward_fft(len: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(len))
}

fn hann(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let m = (len - 1) as f64;
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / m).cos())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Window {
    Hann,
    Kaiser { beta: f64 },
}

impl Window {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::Hann => hann(len),
            Window::Kaiser { beta } => crate::filters::kaiser_window(len, beta),
        }
    }

    /// Main-lobe half-width in analysis bins.
    pub fn main_lobe_bins(self) -> f64 {
        match self {
            Window::Hann => 2.0,
            Window::Kaiser { beta } => (1.0 + (beta / PI).powi(2)).sqrt(),
        }
    }
}

/// One-sided power spectrum, normalised so the bins sum to the
/// window-weighted mean square of the frame.
#[derive(Debug, Clone)]
pub struct SpectrumEstimate {
    pub powers: Vec<f64>,
    pub fft_size: usize,
    pub frame_len: usize,
    pub sample_rate: u32,
    pub window: Window,
}

impl SpectrumEstimate {
    /// Spacing of the zero-padded FFT bins, Hz.
    pub fn bin_hz(&self) -> f64 {
        self.sample_rate as f64 / self.fft_size as f64
    }

    /// Resolution of the underlying frame, Hz.
    pub fn analysis_bin_hz(&self) -> f64 {
        self.sample_rate as f64 / self.frame_len as f64
    }

    pub fn bin_freqs(&self) -> impl Iterator<Item = f64> + '_ {
        let hz = self.bin_hz();
        (0..self.powers.len()).map(move |i| i as f64 * hz)
    }

    pub fn nyquist(&self) -> f64 {
        self.sample_rate as f64 / 2.0
    }

    pub fn total_power(&self) -> f64 {
        self.powers.iter().sum()
    }

    /// Default band half-width for harmonic / alias bookkeeping.
    pub fn band_half_width(&self) -> f64 {
        BAND_HALF_WIDTH_BINS * self.analysis_bin_hz()
    }

    fn bin_range(&self, lo_hz: f64, hi_hz: f64) -> Option<(usize, usize)> {
        let hz = self.bin_hz();
        let last = self.powers.len() - 1;
        let lo = (lo_hz / hz).ceil().max(0.0);
        let hi = (hi_hz / hz).floor();
        if hi < 0.0 || lo > last as f64 || lo > hi {
            return None;
        }
        Some((lo as usize, (hi as usize).min(last)))
    }
}

/// Windowed FFT of `x` after trimming [`EDGE_DISCARD`] samples per edge
/// (when the signal is long enough to afford it).
pub fn estimate_spectrum(x: &AudioBuffer) -> Result<SpectrumEstimate> {
    let trim = if x.len() >= 2 * EDGE_DISCARD + MIN_FRAME {
        EDGE_DISCARD
    } else {
        0
    };
    estimate_spectrum_with(x, trim, ANALYSIS_WINDOW)
}

pub fn estimate_spectrum_trimmed(x: &AudioBuffer, trim: usize) -> Result<SpectrumEstimate> {
    estimate_spectrum_with(x, trim, ANALYSIS_WINDOW)
}

pub fn estimate_spectrum_with(x: &AudioBuffer, trim: usize, window_kind: Window) -> Result<SpectrumEstimate> {
    let frame_len = x.len().saturating_sub(2 * trim);
    if frame_len < MIN_FRAME {
        return Err(Error::TooShort {
            needed: MIN_FRAME + 2 * trim,
            got: x.len(),
        });
    }
    let frame = &x.samples()[trim..trim + frame_len];
    let window = window_kind.coefficients(frame_len);
    let fft_size = (4 * frame_len).next_power_of_two();

    let mut buf = vec![Complex64::new(0.0, 0.0); fft_size];
    for ((b, s), w) in buf.iter_mut().zip(frame).zip(&window) {
        b.re = s * w;
    }
    forward_fft(fft_size).process(&mut buf);

    let w_energy: f64 = window.iter().map(|w| w * w).sum();
    let norm = 1.0 / (fft_size as f64 * w_energy);
    let half = fft_size / 2;
    let powers = (0..=half)
        .map(|k| {
            let p = buf[k].norm_sqr() * norm;
            if k == 0 || k == half {
                p
            } else {
                2.0 * p
            }
        })
        .collect();
    Ok(SpectrumEstimate {
        powers,
        fft_size,
        frame_len,
        sample_rate: x.sample_rate(),
        window: window_kind,
    })
}

/// Sum of bin powers within `[center − half_width, center + half_width]`.
pub fn band_energy(s: &SpectrumEstimate, center: f64, half_width: f64) -> f64 {
    match s.bin_range(center - half_width, center + half_width) {
        Some((lo, hi)) => s.powers[lo..=hi].iter().sum(),
        None => 0.0,
    }
}

/// Reflects `freq` into `[0, sample_rate / 2]`.
pub fn fold_frequency(freq: f64, sample_rate: f64) -> f64 {
    let r = freq.rem_euclid(sample_rate);
    if r > sample_rate / 2.0 {
        sample_rate - r
    } else {
        r
    }
}

/// Which band bookkeeping the AHR uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AhrContext {
    /// Nonlinearity at the output rate: alias lines are folded harmonics.
    Activation { k_max: usize },
    /// Upsampling layer: alias lines are spectral images of the input partials.
    Upsampler {
        factor: usize,
        input_rate: u32,
        k_max: usize,
    },
}

impl AhrContext {
    pub fn activation() -> Self {
        AhrContext::Activation {
            k_max: MAX_PARTIAL_ORDER,
        }
    }

    pub fn upsampler(factor: usize, input_rate: u32, k_max: usize) -> Self {
        AhrContext::Upsampler {
            factor,
            input_rate,
            k_max,
        }
    }
}

/// AHR plus the band bookkeeping behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct AhrBreakdown {
    pub ahr_db: f64,
    pub harmonic_energy: f64,
    pub alias_energy: f64,
    pub harmonic_bands: Vec<f64>,
    pub alias_bands: Vec<f64>,
    pub half_width_hz: f64,
}

fn too_close(f: f64, others: &[f64], min_gap: f64) -> bool {
    others.iter().any(|h| (f - h).abs() < min_gap)
}

/// Harmonic and alias band centres for `f0` under `context`, given the
/// output sample rate and band half-width. The two sets are disjoint:
/// alias centres closer than one band width to a harmonic or to DC are
/// dropped, and duplicates are merged.
pub fn ahr_bands(f0: f64, context: &AhrContext, sample_rate: u32, half_width: f64) -> (Vec<f64>, Vec<f64>) {
    let band_width = 2.0 * half_width;
    let fs = sample_rate as f64;
    let (harmonics, mut aliases) = match *context {
        AhrContext::Activation { k_max } => {
            let nyquist = fs / 2.0;
            let harmonics: Vec<f64> = (1..)
                .map(|k| k as f64 * f0)
                .take_while(|&f| f < nyquist)
                .collect();
            let aliases = (1..=k_max)
                .map(|k| k as f64 * f0)
                .filter(|&f| f >= nyquist)
                .map(|f| fold_frequency(f, fs))
                .collect();
            (harmonics, aliases)
        }
        AhrContext::Upsampler {
            factor,
            input_rate,
            k_max,
        } => {
            let in_nyquist = input_rate as f64 / 2.0;
            let harmonics: Vec<f64> = (1..=k_max)
                .map(|k| k as f64 * f0)
                .take_while(|&f| f < in_nyquist)
                .collect();
            let images = image_frequencies(f0, factor, input_rate, k_max, band_width);
            (harmonics, images)
        }
    };
    aliases.retain(|&a| a >= band_width && !too_close(a, &harmonics, band_width));
    aliases.sort_by(f64::total_cmp);
    aliases.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    (harmonics, aliases)
}

/// Energy in the union of bands, each bin counted once. Bins flagged in
/// `exclude` are skipped.
fn union_energy(s: &SpectrumEstimate, centers: &[f64], half_width: f64, exclude: Option<&[bool]>) -> (f64, Vec<bool>) {
    let mut mask = vec![false; s.powers.len()];
    for &c in centers {
        if let Some((lo, hi)) = s.bin_range(c - half_width, c + half_width) {
            mask[lo..=hi].iter_mut().for_each(|m| *m = true);
        }
    }
    if let Some(ex) = exclude {
        for (m, &e) in mask.iter_mut().zip(ex) {
            *m &= !e;
        }
    }
    let e = s
        .powers
        .iter()
        .zip(&mask)
        .filter(|(_, &m)| m)
        .map(|(p, _)| p)
        .sum();
    (e, mask)
}

/// AHR of an already-estimated spectrum.
pub fn ahr_from_spectrum(s: &SpectrumEstimate, f0: f64, context: &AhrContext) -> Result<AhrBreakdown> {
    if !(f0 > 0.0) {
        return Err(Error::invalid("fundamental must be positive"));
    }
    if let AhrContext::Upsampler {
        factor, input_rate, ..
    } = *context
    {
        if input_rate as u64 * factor as u64 != s.sample_rate as u64 {
            return Err(Error::invalid(format!(
                "output rate {} is not {factor} x {input_rate}",
                s.sample_rate
            )));
        }
    }
    let half_width = s.band_half_width();
    let (harmonics, aliases) = ahr_bands(f0, context, s.sample_rate, half_width);
    if harmonics.is_empty() {
        return Err(Error::invalid(format!("no harmonic of {f0} Hz lies below Nyquist")));
    }
    let (harmonic_energy, harmonic_mask) = union_energy(s, &harmonics, half_width, None);
    let (alias_energy, _) = union_energy(s, &aliases, half_width, Some(&harmonic_mask));
    if !(harmonic_energy > 0.0) {
        return Err(Error::Numeric("zero harmonic energy".into()));
    }
    let ratio = alias_energy / harmonic_energy;
    let ahr_db = if ratio > 0.0 {
        (10.0 * ratio.log10()).max(AHR_FLOOR_DB)
    } else {
        AHR_FLOOR_DB
    };
    Ok(AhrBreakdown {
        ahr_db,
        harmonic_energy,
        alias_energy,
        harmonic_bands: harmonics,
        alias_bands: aliases,
        half_width_hz: half_width,
    })
}

pub fn ahr_breakdown(output: &AudioBuffer, f0: f64, context: &AhrContext) -> Result<AhrBreakdown> {
    ahr_from_spectrum(&estimate_spectrum(output)?, f0, context)
}

/// Aliasing-to-harmonic ratio in dB, clamped at [`AHR_FLOOR_DB`].
pub fn ahr(output: &AudioBuffer, f0: f64, context: &AhrContext) -> Result<f64> {
    Ok(ahr_breakdown(output, f0, context)?.ahr_db)
}

/// Per-signal and aggregate AHR of one module over the benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct AhrReport {
    pub module_name: String,
    pub config_hash: String,
    pub per_signal: Vec<(crate::signal::Waveform, f64, f64)>,
    pub harmonic_band_count: usize,
    pub alias_band_count: usize,
    pub floor_db: f64,
}

impl AhrReport {
    /// Mean of per-signal dB values for one waveform type.
    pub fn type_mean_db(&self, waveform: crate::signal::Waveform) -> Option<f64> {
        let vals: Vec<f64> = self
            .per_signal
            .iter()
            .filter(|(w, _, _)| *w == waveform)
            .map(|(_, _, v)| *v)
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// Mean of the per-type means, matching a table's "Average" column.
    pub fn overall_mean_db(&self) -> f64 {
        let means: Vec<f64> = crate::signal::Waveform::ALL
            .iter()
            .filter_map(|&w| self.type_mean_db(w))
            .collect();
        means.iter().sum::<f64>() / means.len().max(1) as f64
    }
}

/// Magnitude STFT, stored frame-major, in dB relative to a full-scale sine.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    pub frame: usize,
    pub hop: usize,
    pub sample_rate: u32,
    pub n_bins: usize,
    pub n_frames: usize,
    /// Linear power per (frame, bin), amplitude-calibrated.
    pub power: Vec<f64>,
    /// Input length, for locating frames that overrun the signal.
    pub signal_len: usize,
}

/// Shape parameter of the spectrogram's Kaiser window; sidelobes sit below
/// -110 dB so that -100 dB detail is not masked by leakage.
pub const SPECTROGRAM_KAISER_BETA: f64 = 16.0;
/// dB range mapped onto the 8-bit image.
pub const SPECTROGRAM_DB_RANGE: (f64, f64) = (-100.0, 0.0);

pub fn stft_frame_count(len: usize, frame: usize, hop: usize) -> usize {
    if len <= frame {
        1
    } else {
        (len - frame).div_ceil(hop) + 1
    }
}

pub fn spectrogram(x: &AudioBuffer, frame: usize, hop: usize) -> Result<Spectrogram> {
    if frame < 2 || hop == 0 || frame < hop {
        return Err(Error::invalid(format!("bad STFT geometry frame={frame} hop={hop}")));
    }
    let window = crate::filters::kaiser_window(frame, SPECTROGRAM_KAISER_BETA);
    let w_sum: f64 = window.iter().sum();
    let scale = (2.0 / w_sum).powi(2);
    let n_bins = frame / 2 + 1;
    let n_frames = stft_frame_count(x.len(), frame, hop);
    let fft = forward_fft(frame);
    let mut power = Vec::with_capacity(n_bins * n_frames);
    let mut buf = vec![Complex64::new(0.0, 0.0); frame];
    for f in 0..n_frames {
        let start = f * hop;
        for (i, b) in buf.iter_mut().enumerate() {
            let s = x.samples().get(start + i).copied().unwrap_or(0.0);
            *b = Complex64::new(s * window[i], 0.0);
        }
        fft.process(&mut buf);
        power.extend(buf[..n_bins].iter().map(|c| c.norm_sqr() * scale));
    }
    Ok(Spectrogram {
        frame,
        hop,
        sample_rate: x.sample_rate(),
        n_bins,
        n_frames,
        power,
        signal_len: x.len(),
    })
}

impl Spectrogram {
    pub fn bin_hz(&self) -> f64 {
        self.sample_rate as f64 / self.frame as f64
    }

    pub fn power_at(&self, frame: usize, bin: usize) -> f64 {
        self.power[frame * self.n_bins + bin]
    }

    pub fn db_at(&self, frame: usize, bin: usize) -> f64 {
        let p = self.power_at(frame, bin);
        if p > 0.0 {
            10.0 * p.log10()
        } else {
            f64::NEG_INFINITY
        }
    }

    /// CSV: one row per frequency bin, one column per frame.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("freq_hz");
        for f in 0..self.n_frames {
            let _ = write!(s, ",t{:.6}", (f * self.hop) as f64 / self.sample_rate as f64);
        }
        s.push('\n');
        for b in 0..self.n_bins {
            let _ = write!(s, "{:.3}", b as f64 * self.bin_hz());
            for f in 0..self.n_frames {
                let _ = write!(s, ",{:.2}", self.db_at(f, b).max(-200.0));
            }
            s.push('\n');
        }
        s
    }

    /// Binary 8-bit PGM, time on x, frequency rising upwards.
    pub fn to_pgm(&self) -> Vec<u8> {
        let (lo, hi) = SPECTROGRAM_DB_RANGE;
        let mut out = format!("P5\n{} {}\n255\n", self.n_frames, self.n_bins).into_bytes();
        for b in (0..self.n_bins).rev() {
            for f in 0..self.n_frames {
                let db = self.db_at(f, b);
                let v = if db.is_finite() {
                    ((db - lo) / (hi - lo)).clamp(0.0, 1.0) * 255.0
                } else {
                    0.0
                };
                out.push(v.round() as u8);
            }
        }
        out
    }

    /// Frames that lie entirely inside the signal.
    pub fn interior_frames(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_frames).filter(|f| f * self.hop + self.frame <= self.signal_len)
    }
}

/// Writes `<stem>.csv` and `<stem>.pgm`.
pub fn spectrogram_export(x: &AudioBuffer, frame: usize, hop: usize, stem: impl AsRef<Path>) -> Result<Spectrogram> {
    let spec = spectrogram(x, frame, hop)?;
    let stem = stem.as_ref();
    write_atomic(&stem.with_extension("csv"), spec.to_csv().as_bytes())?;
    write_atomic(&stem.with_extension("pgm"), &spec.to_pgm())?;
    Ok(spec)
}

/// Bins each side of a ridge treated as ridge (covers the Kaiser main lobe).
pub const RIDGE_MARGIN_BINS: f64 = 8.0;

/// Marks the bins of `frame` lying on the ridge, on one of its
/// below-Nyquist harmonics, or next to DC. `ridge(t)` gives the instantaneous
/// frequency at time `t`.
fn ridge_mask(spec: &Spectrogram, frame: usize, ridge: &impl Fn(f64) -> f64) -> Vec<bool> {
    let rate = spec.sample_rate as f64;
    let nyquist = rate / 2.0;
    let bin_hz = spec.bin_hz();
    let margin = RIDGE_MARGIN_BINS * bin_hz;
    let t0 = (frame * spec.hop) as f64 / rate;
    let t1 = t0 + spec.frame as f64 / rate;
    let (fa, fb) = (ridge(t0), ridge(t1));
    let (f_lo, f_hi) = (fa.min(fb), fa.max(fb));
    let mut on: Vec<bool> = (0..spec.n_bins).map(|b| b as f64 * bin_hz <= margin).collect();
    let mut k = 1.0;
    while k * f_lo < nyquist {
        let b_lo = ((k * f_lo - margin) / bin_hz).ceil().max(0.0) as usize;
        let b_hi = ((((k * f_hi + margin) / bin_hz).floor()) as usize).min(spec.n_bins - 1);
        if b_lo <= b_hi {
            on[b_lo..=b_hi].iter_mut().for_each(|m| *m = true);
        }
        k += 1.0;
    }
    on
}

/// Off-ridge content of a sweep spectrogram over interior frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffRidge {
    /// Off-ridge energy relative to total energy, dB.
    pub energy_db: f64,
    /// Loudest off-ridge cell on the calibrated dB scale.
    pub peak_db: f64,
}

/// Level reported when nothing lies off the ridge.
pub const OFF_RIDGE_FLOOR_DB: f64 = -200.0;

/// Energy and peak level off the sweep ridge and its harmonics, over
/// interior frames.
pub fn off_ridge(spec: &Spectrogram, ridge: impl Fn(f64) -> f64) -> OffRidge {
    let (mut off, mut total, mut peak) = (0.0, 0.0, 0.0f64);
    for f in spec.interior_frames() {
        let on = ridge_mask(spec, f, &ridge);
        for (b, &is_on) in on.iter().enumerate() {
            let p = spec.power_at(f, b);
            total += p;
            if !is_on {
                off += p;
                peak = peak.max(p);
            }
        }
    }
    let db = |v: f64| {
        if v > 0.0 {
            (10.0 * v.log10()).max(OFF_RIDGE_FLOOR_DB)
        } else {
            OFF_RIDGE_FLOOR_DB
        }
    };
    OffRidge {
        energy_db: if total > 0.0 { db(off / total) } else { OFF_RIDGE_FLOOR_DB },
        peak_db: db(peak),
    }
}

/// Off-ridge energy relative to total, dB; see [`off_ridge`].
pub fn off_ridge_energy_db(spec: &Spectrogram, ridge: impl Fn(f64) -> f64) -> f64 {
    off_ridge(spec, ridge).energy_db
}
