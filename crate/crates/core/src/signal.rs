//! Test-signal generation: band-limited additive oscillators, exponential
//! sweeps and the benchmark note grid.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics;

/// Mono signal plus its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Numeric(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    /// Builds a buffer from trusted library output. Finite samples are a
    /// caller invariant and only checked in debug builds.
    pub(crate) fn from_parts(samples: Vec<f64>, sample_rate: u32) -> Self {
        debug_assert!(sample_rate > 0);
        debug_assert!(samples.iter().all(|s| s.is_finite()));
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn silence(len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn nyquist(&self) -> f64 {
        self.sample_rate as f64 / 2.0
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self::from_parts(
            self.samples.iter().map(|s| s * gain).collect(),
            self.sample_rate,
        )
    }
}

/// Waveform families of the test-signal benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Waveform {
    Sine,
    Sawtooth,
    Triangle,
}

impl Waveform {
    pub const ALL: [Waveform; 3] = [Waveform::Sine, Waveform::Sawtooth, Waveform::Triangle];

    /// Signed amplitude of partial `k` (k ≥ 1) in the Fourier series of the
    /// unit waveform.
    pub fn partial_amplitude(self, k: usize) -> f64 {
        if k == 0 {
            return 0.0;
        }
        let kf = k as f64;
        match self {
            Waveform::Sine => {
                if k == 1 {
                    1.0
                } else {
                    0.0
                }
            }
            Waveform::Sawtooth => {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                2.0 / PI * sign / kf
            }
            Waveform::Triangle => {
                if k.is_multiple_of(2) {
                    0.0
                } else {
                    let sign = if ((k - 1) / 2).is_multiple_of(2) { 1.0 } else { -1.0 };
                    8.0 / (PI * PI) * sign / (kf * kf)
                }
            }
        }
    }

    /// Highest partial index whose amplitude stays within 120 dB of the
    /// fundamental, capped at [`MAX_PARTIAL_ORDER`].
    pub fn partial_limit(self) -> usize {
        let fundamental = self.partial_amplitude(1).abs();
        let threshold = fundamental * 1e-6;
        let mut last = 1;
        for k in 1..=MAX_PARTIAL_ORDER {
            if self.partial_amplitude(k).abs() >= threshold {
                last = k;
            }
            if self == Waveform::Sine && k > 1 {
                break;
            }
        }
        last
    }

    pub fn name(self) -> &'static str {
        match self {
            Waveform::Sine => "sine",
            Waveform::Sawtooth => "sawtooth",
            Waveform::Triangle => "triangle",
        }
    }
}

impl fmt::Display for Waveform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Waveform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sine" => Ok(Waveform::Sine),
            "sawtooth" | "saw" => Ok(Waveform::Sawtooth),
            "triangle" | "tri" => Ok(Waveform::Triangle),
            other => Err(Error::invalid(format!("unknown waveform {other:?}"))),
        }
    }
}

/// Cap on partial / harmonic order for alias and image accounting.
pub const MAX_PARTIAL_ORDER: usize = 512;

/// Peak level of every benchmark signal: -1 dBFS.
pub const BENCH_PEAK: f64 = 0.891_250_938_133_745_5;

pub const BENCH_SAMPLE_RATE: u32 = 44_100;
pub const BENCH_DURATION_S: f64 = 5.0;
pub const BENCH_LOW_MIDI: i32 = 60;
pub const BENCH_HIGH_MIDI: i32 = 107;

/// Equal-tempered frequency of a MIDI note (A4 = 69 = 440 Hz).
pub fn midi_to_freq(note: i32) -> f64 {
    440.0 * 2f64.powf((note - 69) as f64 / 12.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestSignalSpec {
    pub waveform: Waveform,
    pub f0_hz: f64,
    /// Set when the fundamental comes from the chromatic grid.
    pub midi_note: Option<i32>,
    pub duration_s: f64,
    pub sample_rate: u32,
    /// Peak scale of the generated buffer.
    pub amplitude: f64,
}

impl TestSignalSpec {
    pub fn from_midi(waveform: Waveform, note: i32, duration_s: f64, sample_rate: u32) -> Self {
        Self {
            waveform,
            f0_hz: midi_to_freq(note),
            midi_note: Some(note),
            duration_s,
            sample_rate,
            amplitude: BENCH_PEAK,
        }
    }

    pub fn from_freq(waveform: Waveform, f0_hz: f64, duration_s: f64, sample_rate: u32) -> Self {
        Self {
            waveform,
            f0_hz,
            midi_note: None,
            duration_s,
            sample_rate,
            amplitude: BENCH_PEAK,
        }
    }

    pub fn num_samples(&self) -> usize {
        (self.duration_s * self.sample_rate as f64).round() as usize
    }

    /// Same signal, regenerated at another sample rate.
    pub fn at_rate(&self, sample_rate: u32) -> Self {
        Self {
            sample_rate,
            ..self.clone()
        }
    }
}

/// Upper frequency bound for synthesized partials: Nyquist minus
/// max(50 Hz, 4 analysis bins) for a signal of `len` samples.
pub fn harmonic_cap(sample_rate: u32, len: usize) -> f64 {
    let nyquist = sample_rate as f64 / 2.0;
    let bin = metrics::analysis_bin_width(len, sample_rate);
    nyquist - f64::max(50.0, 4.0 * bin)
}

// Phasor rotation is re-anchored to an exact sin/cos this often.
const PHASOR_RESYNC: usize = 256;

/// Adds `amp * sin(2π·freq·n/rate)` to `out`.
fn add_partial(out: &mut [f64], amp: f64, freq: f64, rate: f64) {
    let step = 2.0 * PI * freq / rate;
    let (sw, cw) = step.sin_cos();
    for (chunk_idx, chunk) in out.chunks_mut(PHASOR_RESYNC).enumerate() {
        let n0 = (chunk_idx * PHASOR_RESYNC) as f64;
        let cycles = (freq * n0 / rate).fract();
        let (mut s, mut c) = (2.0 * PI * cycles).sin_cos();
        for v in chunk.iter_mut() {
            *v += amp * s;
            let s_next = s * cw + c * sw;
            c = c * cw - s * sw;
            s = s_next;
        }
    }
}

/// Exact additive synthesis of a band-limited test signal, peak-normalised to
/// `spec.amplitude`.
pub fn gen_bandlimited(spec: &TestSignalSpec) -> Result<AudioBuffer> {
    if spec.sample_rate == 0 {
        return Err(Error::invalid("sample rate must be positive"));
    }
    if !(spec.duration_s > 0.0) {
        return Err(Error::invalid("duration must be positive"));
    }
    if !(spec.amplitude > 0.0) {
        return Err(Error::invalid("amplitude must be positive"));
    }
    let nyquist = spec.sample_rate as f64 / 2.0;
    if !(spec.f0_hz > 0.0) || spec.f0_hz >= nyquist {
        return Err(Error::invalid(format!(
            "fundamental {} Hz outside (0, {nyquist}) Hz",
            spec.f0_hz
        )));
    }
    let len = spec.num_samples();
    let cap = harmonic_cap(spec.sample_rate, len);
    if spec.f0_hz >= cap {
        return Err(Error::invalid(format!(
            "fundamental {} Hz is above the harmonic cap {cap} Hz",
            spec.f0_hz
        )));
    }

    let rate = spec.sample_rate as f64;
    let mut out = vec![0.0; len];
    let mut k = 1;
    while (k as f64) * spec.f0_hz < cap {
        let amp = spec.waveform.partial_amplitude(k);
        if amp != 0.0 {
            add_partial(&mut out, amp, k as f64 * spec.f0_hz, rate);
        }
        k += 1;
    }

    let peak = out.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > 0.0 {
        let g = spec.amplitude / peak;
        out.iter_mut().for_each(|s| *s *= g);
    }
    Ok(AudioBuffer::from_parts(out, spec.sample_rate))
}

/// Unit-amplitude exponential sine sweep with continuous phase.
pub fn gen_sweep(f_start: f64, f_end: f64, duration_s: f64, sample_rate: u32) -> Result<AudioBuffer> {
    if !(duration_s > 0.0) {
        return Err(Error::invalid("sweep duration must be positive"));
    }
    if sample_rate == 0 {
        return Err(Error::invalid("sample rate must be positive"));
    }
    let nyquist = sample_rate as f64 / 2.0;
    for f in [f_start, f_end] {
        if !(f > 0.0 && f < nyquist) {
            return Err(Error::invalid(format!("sweep frequency {f} Hz outside (0, {nyquist})")));
        }
    }
    let len = (duration_s * sample_rate as f64).round() as usize;
    let rate = sample_rate as f64;
    let log_ratio = (f_end / f_start).ln();
    let samples = (0..len)
        .map(|n| {
            let t = n as f64 / rate;
            let phase = if log_ratio.abs() < 1e-12 {
                2.0 * PI * f_start * t
            } else {
                2.0 * PI * f_start * duration_s / log_ratio * ((t / duration_s * log_ratio).exp_m1())
            };
            phase.sin()
        })
        .collect();
    Ok(AudioBuffer::from_parts(samples, sample_rate))
}

/// Instantaneous frequency of [`gen_sweep`] at time `t`.
pub fn sweep_frequency_at(f_start: f64, f_end: f64, duration_s: f64, t: f64) -> f64 {
    f_start * (f_end / f_start).powf(t / duration_s)
}

/// Fundamental-frequency grid of the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoteGrid {
    /// C4..B7 (MIDI 60..=107), one segment per semitone: 48 per type.
    #[default]
    Chromatic,
    /// 48 log-uniform fundamentals spanning C4..B7 with both endpoints.
    LogUniform48,
}

impl NoteGrid {
    pub fn name(self) -> &'static str {
        match self {
            NoteGrid::Chromatic => "chromatic",
            NoteGrid::LogUniform48 => "loguniform48",
        }
    }

    /// Fundamentals in ascending order, with MIDI numbers when on the
    /// chromatic grid.
    pub fn notes(self) -> Vec<(f64, Option<i32>)> {
        match self {
            NoteGrid::Chromatic => (BENCH_LOW_MIDI..=BENCH_HIGH_MIDI)
                .map(|n| (midi_to_freq(n), Some(n)))
                .collect(),
            NoteGrid::LogUniform48 => {
                let lo = midi_to_freq(BENCH_LOW_MIDI);
                let hi = midi_to_freq(BENCH_HIGH_MIDI);
                let count = 48;
                (0..count)
                    .map(|i| {
                        let f = if i == 0 {
                            lo
                        } else if i == count - 1 {
                            hi
                        } else {
                            lo * (hi / lo).powf(i as f64 / (count - 1) as f64)
                        };
                        (f, None)
                    })
                    .collect()
            }
        }
    }
}

impl FromStr for NoteGrid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "chromatic" => Ok(NoteGrid::Chromatic),
            "loguniform48" => Ok(NoteGrid::LogUniform48),
            other => Err(Error::invalid(format!("unknown note grid {other:?}"))),
        }
    }
}

/// One segment of the test-signal benchmark.
#[derive(Debug, Clone)]
pub struct BenchmarkSignal {
    /// Position within its waveform type, ascending in f0.
    pub index: usize,
    pub spec: TestSignalSpec,
    pub buffer: AudioBuffer,
}

/// Benchmark specs sorted by (waveform, f0).
pub fn benchmark_specs(grid: NoteGrid) -> Vec<(usize, TestSignalSpec)> {
    let notes = grid.notes();
    Waveform::ALL
        .iter()
        .flat_map(|&w| {
            notes.iter().enumerate().map(move |(i, &(f0, midi))| {
                let mut spec = TestSignalSpec::from_freq(w, f0, BENCH_DURATION_S, BENCH_SAMPLE_RATE);
                spec.midi_note = midi;
                (i, spec)
            })
        })
        .collect()
}

/// Default benchmark: 3 waveforms × 48 chromatic notes, 5 s at 44.1 kHz.
pub fn build_benchmark() -> Result<Vec<BenchmarkSignal>> {
    build_benchmark_with(NoteGrid::default())
}

pub fn build_benchmark_with(grid: NoteGrid) -> Result<Vec<BenchmarkSignal>> {
    benchmark_specs(grid)
        .into_par_iter()
        .map(|(index, spec)| {
            let buffer = gen_bandlimited(&spec)?;
            Ok(BenchmarkSignal {
                index,
                spec,
                buffer,
            })
        })
        .collect()
}
