//! Benchmark orchestration: evaluates activation and upsampler
//! configurations over the test-signal set and renders deterministic CSV
//! reports, the sweep panels and filter-response tables.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::RngCore;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::activations::{apply_activation, ActivationKind, ActivationSpec, DEFAULT_ELU_A, DEFAULT_LEAKY_SLOPE};
use crate::config::{serialize_configs, ModuleSpec, NamedConfig};
use crate::error::{Error, Result};
use crate::filters::{self, FilterDesignSpec, FirKernel, InterpKind};
use crate::io::write_atomic;
use crate::metrics::{self, AhrContext, AhrReport, OffRidge, AHR_FLOOR_DB};
use crate::signal::{
    gen_bandlimited, gen_sweep, sweep_frequency_at, AudioBuffer, BenchmarkSignal, NoteGrid, TestSignalSpec, Waveform,
    BENCH_PEAK, BENCH_SAMPLE_RATE,
};
use crate::upsamplers::{self, UpsamplerKind, UpsamplerSpec};
use crate::wav;

/// Constant input level used by the tonal probe.
pub const PROBE_DC: f64 = 0.5;
/// Default number of ConvTranspose initialisations averaged per row.
pub const DEFAULT_SEEDS: usize = 10;
/// Default upsampling factor.
pub const DEFAULT_FACTOR: usize = 2;

const STREAM_RUN_SEEDS: u64 = 0x5eed;

/// `index`-th seed derived from the manifest seed. Independent of the order
/// in which runs are scheduled.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut rng = upsamplers::seeded_rng(master, STREAM_RUN_SEEDS + index);
    rng.next_u64()
}

pub fn derive_seeds(master: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|i| derive_seed(master, i)).collect()
}

/// LeakyReLU, ELU and SnakeBeta without oversampling, ADAA SnakeBeta at 2×.
pub fn default_activation_configs() -> Vec<NamedConfig> {
    vec![
        NamedConfig::activation(
            "leaky_relu",
            ActivationSpec::new(
                ActivationKind::LeakyRelu {
                    slope: DEFAULT_LEAKY_SLOPE,
                },
                1,
            ),
        ),
        NamedConfig::activation("elu", ActivationSpec::new(ActivationKind::Elu { a: DEFAULT_ELU_A }, 1)),
        NamedConfig::activation("snakebeta", ActivationSpec::new(ActivationKind::SnakeBeta, 1)),
        NamedConfig::activation("adaa_snakebeta_c2", ActivationSpec::new(ActivationKind::AdaaSnakeBeta, 2)),
    ]
}

/// Oversampling variants for the SnakeBeta / ADAA comparison.
pub fn oversampling_variant_configs() -> Vec<NamedConfig> {
    vec![
        NamedConfig::activation("snakebeta_c2", ActivationSpec::new(ActivationKind::SnakeBeta, 2)),
        NamedConfig::activation("snakebeta_c4", ActivationSpec::new(ActivationKind::SnakeBeta, 4)),
        NamedConfig::activation("adaa_snakebeta_c1", ActivationSpec::new(ActivationKind::AdaaSnakeBeta, 1)),
    ]
}

pub fn default_upsampler_configs(factor: usize) -> Vec<NamedConfig> {
    [
        ("conv_transpose", UpsamplerKind::ConvTranspose),
        ("linear_interp", UpsamplerKind::LinearInterp),
        ("nearest_interp", UpsamplerKind::NearestInterp),
        ("aa_resample", UpsamplerKind::AntiAliasedResample),
    ]
    .into_iter()
    .map(|(name, kind)| NamedConfig::upsampler(name, UpsamplerSpec::new(kind, factor)))
    .collect()
}

/// `(waveform, f0, AHR dB, harmonic bands, alias bands)` for one signal.
type SignalRow = (Waveform, f64, f64, usize, usize);

fn report_from(name: &str, hash: String, rows: Vec<SignalRow>) -> AhrReport {
    let harmonic_band_count = rows.iter().map(|r| r.3).sum();
    let alias_band_count = rows.iter().map(|r| r.4).sum();
    AhrReport {
        module_name: name.to_string(),
        config_hash: hash,
        per_signal: rows.into_iter().map(|(w, f0, a, _, _)| (w, f0, a)).collect(),
        harmonic_band_count,
        alias_band_count,
        floor_db: AHR_FLOOR_DB,
    }
}

/// AHR of one activation over every benchmark signal.
pub fn run_activation(bench: &[BenchmarkSignal], config: &NamedConfig) -> Result<AhrReport> {
    let ModuleSpec::Activation(spec) = &config.spec else {
        return Err(Error::invalid(format!("{} is not an activation config", config.name)));
    };
    spec.validate()?;
    let ctx = AhrContext::activation();
    let rows = bench
        .par_iter()
        .map(|s| {
            let y = apply_activation(&s.buffer, spec)?;
            let b = metrics::ahr_breakdown(&y, s.spec.f0_hz, &ctx)?;
            Ok((s.spec.waveform, s.spec.f0_hz, b.ahr_db, b.harmonic_bands.len(), b.alias_bands.len()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(report_from(&config.name, config.config_hash(), rows))
}

pub fn run_activations(bench: &[BenchmarkSignal], configs: &[NamedConfig]) -> Result<Vec<AhrReport>> {
    configs.iter().map(|c| run_activation(bench, c)).collect()
}

/// Benchmark notes regenerated additively at `BENCH_SAMPLE_RATE / factor`,
/// used as upsampler inputs.
pub fn upsampler_inputs(specs: &[(usize, TestSignalSpec)], factor: usize) -> Result<Vec<BenchmarkSignal>> {
    if factor == 0 || !BENCH_SAMPLE_RATE.is_multiple_of(factor as u32) {
        return Err(Error::invalid(format!(
            "{BENCH_SAMPLE_RATE} Hz is not divisible by factor {factor}"
        )));
    }
    let rate = BENCH_SAMPLE_RATE / factor as u32;
    specs
        .par_iter()
        .map(|(index, spec)| {
            let spec = spec.at_rate(rate);
            let buffer = gen_bandlimited(&spec)?;
            Ok(BenchmarkSignal { index: *index, spec, buffer })
        })
        .collect()
}

/// One upsampler row: per-signal AHR averaged over seeds plus side columns.
#[derive(Debug, Clone, PartialEq)]
pub struct UpsamplerResult {
    pub report: AhrReport,
    pub seeds: Vec<u64>,
    /// Overall mean AHR for each seed, in `seeds` order.
    pub seed_means_db: Vec<f64>,
    /// Stride-line level of the layer on a constant input, averaged over seeds.
    pub tonal_probe_db: f64,
    /// Overall mean AHR with the noise prior enabled (resampling layer only).
    pub prior_on_mean_db: Option<f64>,
}

impl UpsamplerResult {
    /// Population standard deviation of the per-seed means.
    pub fn seed_std_db(&self) -> f64 {
        let n = self.seed_means_db.len() as f64;
        if n < 2.0 {
            return 0.0;
        }
        let mean = self.seed_means_db.iter().sum::<f64>() / n;
        (self.seed_means_db.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
    }
}

fn upsampler_pass(inputs: &[BenchmarkSignal], spec: &UpsamplerSpec) -> Result<Vec<SignalRow>> {
    inputs
        .par_iter()
        .map(|s| {
            let y = upsamplers::upsample(&s.buffer, &s.buffer, spec)?;
            let ctx = AhrContext::upsampler(spec.factor, s.buffer.sample_rate(), s.spec.waveform.partial_limit());
            let b = metrics::ahr_breakdown(&y, s.spec.f0_hz, &ctx)?;
            Ok((s.spec.waveform, s.spec.f0_hz, b.ahr_db, b.harmonic_bands.len(), b.alias_bands.len()))
        })
        .collect()
}

fn overall_mean(name: &str, rows: &[SignalRow]) -> f64 {
    report_from(name, String::new(), rows.to_vec()).overall_mean_db()
}

/// Evaluates one upsampler over `inputs`. ConvTranspose is run once per
/// seed; the resampling layer takes `seeds[0]` for its prior and is also
/// measured with the prior enabled. Inputs double as the prior source.
pub fn run_upsampler(inputs: &[BenchmarkSignal], config: &NamedConfig, seeds: &[u64]) -> Result<UpsamplerResult> {
    let ModuleSpec::Upsampler(base) = &config.spec else {
        return Err(Error::invalid(format!("{} is not an upsampler config", config.name)));
    };
    base.validate()?;
    if seeds.is_empty() {
        return Err(Error::invalid("at least one seed is required"));
    }
    let input_rate = inputs
        .first()
        .map(|s| s.buffer.sample_rate())
        .ok_or_else(|| Error::invalid("no benchmark inputs"))?;
    let stochastic = base.kind == UpsamplerKind::ConvTranspose;
    let run_seeds: Vec<u64> = if stochastic { seeds.to_vec() } else { vec![seeds[0]] };

    let mut passes = Vec::with_capacity(run_seeds.len());
    let mut probes = Vec::with_capacity(run_seeds.len());
    for &seed in &run_seeds {
        let spec = UpsamplerSpec { seed, ..*base };
        passes.push(upsampler_pass(inputs, &spec)?);
        probes.push(upsamplers::probe_layer(&spec, PROBE_DC, input_rate)?.stride_line_db);
    }
    let seed_means_db = passes.iter().map(|p| overall_mean(&config.name, p)).collect();
    let n = passes.len() as f64;
    let rows = (0..passes[0].len())
        .map(|i| {
            let (w, f0, _, h, a) = passes[0][i];
            let mean = passes.iter().map(|p| p[i].2).sum::<f64>() / n;
            (w, f0, mean, h, a)
        })
        .collect();
    let prior_on_mean_db = if base.kind == UpsamplerKind::AntiAliasedResample {
        let spec = UpsamplerSpec {
            seed: run_seeds[0],
            noise_prior: true,
            ..*base
        };
        Some(overall_mean(&config.name, &upsampler_pass(inputs, &spec)?))
    } else {
        None
    };
    Ok(UpsamplerResult {
        report: report_from(&config.name, config.config_hash(), rows),
        seeds: run_seeds,
        seed_means_db,
        tonal_probe_db: probes.iter().sum::<f64>() / n,
        prior_on_mean_db,
    })
}

pub fn run_upsamplers(inputs: &[BenchmarkSignal], configs: &[NamedConfig], seeds: &[u64]) -> Result<Vec<UpsamplerResult>> {
    configs.iter().map(|c| run_upsampler(inputs, c, seeds)).collect()
}

/// `module_name,config_hash,waveform,f0_hz,ahr_db`, one row per signal.
pub fn per_signal_csv(reports: &[AhrReport]) -> String {
    let mut s = String::from("module_name,config_hash,waveform,f0_hz,ahr_db\n");
    for r in reports {
        for (w, f0, a) in &r.per_signal {
            let _ = writeln!(s, "{},{},{},{:.4},{:.4}", r.module_name, r.config_hash, w, f0, a);
        }
    }
    s
}

fn summary_cells(r: &AhrReport) -> String {
    let cells: Vec<String> = Waveform::ALL
        .iter()
        .map(|&w| format!("{:.2}", r.type_mean_db(w).unwrap_or(f64::NAN)))
        .collect();
    format!("{},{},{:.2}", r.module_name, cells.join(","), r.overall_mean_db())
}

/// Per-type and overall mean AHR, one row per module.
pub fn summary_csv(reports: &[AhrReport]) -> String {
    let mut s = String::from("module,sine,sawtooth,triangle,average\n");
    for r in reports {
        let _ = writeln!(s, "{}", summary_cells(r));
    }
    s
}

/// Upsampler summary with tonal-probe, seed-spread and prior-on columns.
pub fn upsampler_summary_csv(results: &[UpsamplerResult]) -> String {
    let mut s = String::from("module,sine,sawtooth,triangle,average,tonal_probe_db,seed_std_db,prior_on_average\n");
    for r in results {
        let prior = r.prior_on_mean_db.map_or_else(|| "NA".to_string(), |v| format!("{v:.2}"));
        let _ = writeln!(
            s,
            "{},{:.2},{:.4},{}",
            summary_cells(&r.report),
            r.tonal_probe_db,
            r.seed_std_db(),
            prior
        );
    }
    s
}

/// SHA-256 over the little-endian sample bytes and rate of each buffer.
pub fn content_hash<'a>(buffers: impl IntoIterator<Item = &'a AudioBuffer>) -> String {
    let mut h = Sha256::new();
    for b in buffers {
        h.update(b.sample_rate().to_le_bytes());
        h.update((b.len() as u64).to_le_bytes());
        for v in b.samples() {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Everything needed to reproduce a run. Contains no timestamps, so equal
/// manifests serialise to equal bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub configs: Vec<NamedConfig>,
    pub note_grid: NoteGrid,
    pub master_seed: u64,
    pub seeds: Vec<u64>,
    pub factor: Option<usize>,
    pub output_dir: PathBuf,
    pub tool_version: String,
    pub input_hash: String,
}

impl RunManifest {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "command = {}", self.command);
        let _ = writeln!(s, "tool_version = {}", self.tool_version);
        let _ = writeln!(s, "note_grid = {}", self.note_grid.name());
        let _ = writeln!(s, "master_seed = {}", self.master_seed);
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let _ = writeln!(s, "seeds = {}", seeds.join(" "));
        if let Some(f) = self.factor {
            let _ = writeln!(s, "factor = {f}");
        }
        let _ = writeln!(s, "output_dir = {}", self.output_dir.display());
        let _ = writeln!(s, "input_sha256 = {}", self.input_hash);
        let _ = writeln!(
            s,
            "ahr_definition = single-frame Kaiser(beta=16) spectrum after trimming {} samples per edge; bands of +/-{} analysis bins; \
             mean of per-signal dB per type, average = mean of type means; floor {} dB",
            metrics::EDGE_DISCARD,
            metrics::BAND_HALF_WIDTH_BINS,
            AHR_FLOOR_DB
        );
        s.push('\n');
        s.push_str(&serialize_configs(&self.configs));
        s
    }
}

pub fn tool_version() -> String {
    format!("aliasfree {}", env!("CARGO_PKG_VERSION"))
}

/// `bench.csv` header and rows; `path` is relative to the benchmark dir.
pub fn bench_metadata_csv(bench: &[BenchmarkSignal], names: &[String]) -> String {
    let mut s = String::from("type,index,f0_hz,midi_note,duration_s,sample_rate,path\n");
    for (b, name) in bench.iter().zip(names) {
        let midi = b.spec.midi_note.map_or_else(String::new, |m| m.to_string());
        let _ = writeln!(
            s,
            "{},{},{:.6},{},{},{},{}",
            b.spec.waveform, b.index, b.spec.f0_hz, midi, b.spec.duration_s, b.spec.sample_rate, name
        );
    }
    s
}

pub fn wav_name(signal: &BenchmarkSignal) -> String {
    format!("{}_{:02}.wav", signal.spec.waveform, signal.index)
}

/// Writes every benchmark signal as float WAV plus `bench.csv`.
pub fn write_benchmark(bench: &[BenchmarkSignal], dir: &Path) -> Result<Vec<PathBuf>> {
    let names: Vec<String> = bench.iter().map(wav_name).collect();
    let mut paths: Vec<PathBuf> = bench
        .par_iter()
        .zip(&names)
        .map(|(b, name)| {
            let path = dir.join(name);
            wav::wav_write(&b.buffer, &path)?;
            Ok(path)
        })
        .collect::<Result<_>>()?;
    let meta = dir.join("bench.csv");
    write_atomic(&meta, bench_metadata_csv(bench, &names).as_bytes())?;
    paths.push(meta);
    Ok(paths)
}

/// Parses `bench.csv` in `dir` into `(index, spec, relative path)` rows.
pub fn read_benchmark_metadata(dir: &Path) -> Result<Vec<(usize, TestSignalSpec, String)>> {
    let meta_path = dir.join("bench.csv");
    let text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.starts_with("type,index,f0_hz") => {}
        _ => return Err(Error::Metadata(format!("{}: missing header", meta_path.display()))),
    }
    let rows = lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let bad = |what: &str| Error::Metadata(format!("{} line {}: {what}", meta_path.display(), i + 1));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(bad("expected 7 fields"));
            }
            let waveform: Waveform = f[0].parse().map_err(|_| bad("unknown waveform"))?;
            let index: usize = f[1].parse().map_err(|_| bad("bad index"))?;
            let f0: f64 = f[2].parse().map_err(|_| bad("bad f0"))?;
            let midi = if f[3].is_empty() {
                None
            } else {
                Some(f[3].parse().map_err(|_| bad("bad midi note"))?)
            };
            let duration: f64 = f[4].parse().map_err(|_| bad("bad duration"))?;
            let rate: u32 = f[5].parse().map_err(|_| bad("bad sample rate"))?;
            let mut spec = TestSignalSpec::from_freq(waveform, f0, duration, rate);
            spec.midi_note = midi;
            Ok((index, spec, f[6].to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    if rows.is_empty() {
        return Err(Error::Metadata(format!("{}: no signals", meta_path.display())));
    }
    Ok(rows)
}

/// Reads a benchmark directory written by [`write_benchmark`].
pub fn read_benchmark(dir: &Path) -> Result<Vec<BenchmarkSignal>> {
    read_benchmark_metadata(dir)?
        .into_par_iter()
        .map(|(index, spec, name)| {
            let buffer = wav::wav_read(dir.join(&name))?;
            if buffer.sample_rate() != spec.sample_rate {
                return Err(Error::Metadata(format!("{name}: sample rate disagrees with bench.csv")));
            }
            Ok(BenchmarkSignal { index, spec, buffer })
        })
        .collect()
}

/// Sweep study settings.
pub const SWEEP_START_HZ: f64 = 20.0;
pub const SWEEP_END_HZ: f64 = 20_000.0;
pub const SWEEP_DURATION_S: f64 = 4.0;
pub const SWEEP_FRAME: usize = 1024;
pub const SWEEP_HOP: usize = 256;

/// No activation, SnakeBeta at 1×/2×/4× and ADAA SnakeBeta at 1×/2×.
pub fn default_sweep_panels() -> Vec<NamedConfig> {
    let panel = |name: &str, kind, c| NamedConfig::activation(name, ActivationSpec::new(kind, c));
    vec![
        panel("no_activation", ActivationKind::Identity, 1),
        panel("snakebeta_o1", ActivationKind::SnakeBeta, 1),
        panel("snakebeta_o2", ActivationKind::SnakeBeta, 2),
        panel("snakebeta_o4", ActivationKind::SnakeBeta, 4),
        panel("adaa_snakebeta_o1", ActivationKind::AdaaSnakeBeta, 1),
        panel("adaa_snakebeta_o2", ActivationKind::AdaaSnakeBeta, 2),
    ]
}

/// The sweep fed to every panel, at the benchmark peak level.
pub fn sweep_input() -> Result<AudioBuffer> {
    Ok(gen_sweep(SWEEP_START_HZ, SWEEP_END_HZ, SWEEP_DURATION_S, BENCH_SAMPLE_RATE)?.scaled(BENCH_PEAK))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPanel {
    pub name: String,
    pub off_ridge: OffRidge,
}

/// Applies each panel's activation to the sweep. When `out_dir` is given,
/// writes `<name>.csv` / `<name>.pgm` per panel.
pub fn run_sweep(panels: &[NamedConfig], out_dir: Option<&Path>) -> Result<Vec<SweepPanel>> {
    let x = sweep_input()?;
    let ridge = |t: f64| sweep_frequency_at(SWEEP_START_HZ, SWEEP_END_HZ, SWEEP_DURATION_S, t.min(SWEEP_DURATION_S));
    panels
        .par_iter()
        .map(|p| {
            let ModuleSpec::Activation(spec) = &p.spec else {
                return Err(Error::invalid(format!("sweep panel {} is not an activation", p.name)));
            };
            let y = apply_activation(&x, spec)?;
            let sg = match out_dir {
                Some(dir) => metrics::spectrogram_export(&y, SWEEP_FRAME, SWEEP_HOP, dir.join(&p.name))?,
                None => metrics::spectrogram(&y, SWEEP_FRAME, SWEEP_HOP)?,
            };
            Ok(SweepPanel {
                name: p.name.clone(),
                off_ridge: metrics::off_ridge(&sg, ridge),
            })
        })
        .collect()
}

pub fn sweep_summary_csv(panels: &[SweepPanel]) -> String {
    let mut s = String::from("panel,off_ridge_energy_db,off_ridge_peak_db\n");
    for p in panels {
        let _ = writeln!(s, "{},{:.2},{:.2}", p.name, p.off_ridge.energy_db, p.off_ridge.peak_db);
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResponseKind {
    Linear,
    Nearest,
    Designed,
}

impl std::str::FromStr for ResponseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ResponseKind::Linear),
            "nearest" => Ok(ResponseKind::Nearest),
            "designed" => Ok(ResponseKind::Designed),
            other => Err(Error::invalid(format!("unknown response kind {other:?}"))),
        }
    }
}

/// Points on `[0, π]` in the response tables.
pub const RESPONSE_POINTS: usize = 4096;

/// Kernel whose response is tabulated: an interpolation kernel of
/// half-length `n`, or the resampling low-pass for factor `n`.
pub fn response_kernel(kind: ResponseKind, n: usize) -> Result<FirKernel> {
    match kind {
        ResponseKind::Linear => filters::interp_kernel(InterpKind::Linear, n),
        ResponseKind::Nearest => filters::interp_kernel(InterpKind::Nearest, n),
        ResponseKind::Designed => filters::design_fir(&FilterDesignSpec::resampling(n.max(1))),
    }
}

/// Ideal brick-wall response with cutoff `1/n` and passband gain equal to
/// the kernel's DC gain: `omega_normalized,magnitude_db`.
pub fn ideal_response_csv(n: usize, dc_gain: f64, points: usize) -> String {
    let cutoff = 1.0 / n.max(1) as f64;
    let pass_db = filters::magnitude_db(dc_gain.into());
    let mut s = String::from("omega_normalized,magnitude_db\n");
    for i in 0..points {
        let w = i as f64 / (points - 1) as f64;
        let db = if w <= cutoff { pass_db } else { filters::RESPONSE_FLOOR_DB };
        let _ = writeln!(s, "{w:.6},{db:.6}");
    }
    s
}
