//! `aliasbench`: build the test-signal benchmark, measure aliasing of
//! activation and upsampling modules, export sweep spectrograms and filter
//! responses.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use aliasfree::bench::{self, ResponseKind, RunManifest};
use aliasfree::config::{parse_configs, ModuleSpec, NamedConfig};
use aliasfree::filters;
use aliasfree::signal::{build_benchmark_with, NoteGrid};
use aliasfree::{write_atomic, Error};
use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "aliasbench", version, about = "Aliasing benchmark for activations and upsamplers")]
struct Cli {
    /// Output path: a directory for gen-bench and sweep, a CSV file otherwise.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Manifest seed from which every random draw is derived.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the benchmark WAVs and bench.csv.
    GenBench {
        #[arg(long, default_value = "chromatic")]
        note_grid: NoteGrid,
    },
    /// Measure AHR of activation configurations.
    RunActivations {
        /// Benchmark directory from gen-bench.
        #[arg(long)]
        bench: PathBuf,
        /// Config file; defaults to the built-in set.
        #[arg(long)]
        configs: Option<PathBuf>,
    },
    /// Measure AHR of upsampling layers on the benchmark notes.
    RunUpsamplers {
        #[arg(long)]
        bench: PathBuf,
        #[arg(long, default_value_t = bench::DEFAULT_FACTOR)]
        factor: usize,
        /// ConvTranspose initialisations to average.
        #[arg(long, default_value_t = bench::DEFAULT_SEEDS)]
        seeds: usize,
        /// Config file; defaults to the four built-in layers.
        #[arg(long)]
        configs: Option<PathBuf>,
    },
    /// Export spectrograms of a sine sweep through activation panels.
    Sweep {
        /// Activation config file; defaults to the six built-in panels.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Tabulate the frequency response of an interpolation kernel or the
    /// designed resampling filter.
    FilterResponse {
        #[arg(long)]
        kind: ResponseKind,
        /// Kernel half-length N, or the resampling factor for `designed`.
        #[arg(long = "n", visible_alias = "N", default_value_t = 2)]
        n: usize,
    },
}

/// Exit status for each failure class.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::InvalidParameter(_) => 2,
        Error::Io { .. } | Error::Wav { .. } | Error::UnsupportedWav { .. } | Error::Metadata(_) => 3,
        Error::Numeric(_) | Error::TooShort { .. } => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn out_path(cli: &Cli, default: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

/// `dir/stem.csv` → `dir/stem_<suffix>`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}_{suffix}"))
}

fn load_configs(path: &Path) -> Result<Vec<NamedConfig>, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    parse_configs(&text)
}

fn require_kind(configs: &[NamedConfig], activation: bool) -> Result<(), Error> {
    match configs
        .iter()
        .find(|c| matches!(c.spec, ModuleSpec::Activation(_)) != activation)
    {
        Some(c) => Err(Error::Config {
            line: 0,
            message: format!(
                "{} is not an {} config",
                c.name,
                if activation { "activation" } else { "upsampler" }
            ),
        }),
        None => Ok(()),
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    let started = Instant::now();
    match &cli.command {
        Command::GenBench { note_grid } => {
            let dir = out_path(cli, "bench");
            let signals = build_benchmark_with(*note_grid)?;
            let files = bench::write_benchmark(&signals, &dir)?;
            eprintln!(
                "wrote {} WAV files and bench.csv to {} ({:.1}s)",
                files.len() - 1,
                dir.display(),
                started.elapsed().as_secs_f64()
            );
        }
        Command::RunActivations { bench: dir, configs } => {
            let out = out_path(cli, "activations.csv");
            let (main, variants) = match configs {
                Some(p) => {
                    let c = load_configs(p)?;
                    require_kind(&c, true)?;
                    (c, Vec::new())
                }
                None => (bench::default_activation_configs(), bench::oversampling_variant_configs()),
            };
            let signals = bench::read_benchmark(dir)?;
            let reports = bench::run_activations(&signals, &main)?;
            write_atomic(&out, bench::summary_csv(&reports).as_bytes())?;
            let mut all = reports;
            if !variants.is_empty() {
                let extra = bench::run_activations(&signals, &variants)?;
                write_atomic(&sibling(&out, "oversampling.csv"), bench::summary_csv(&extra).as_bytes())?;
                all.extend(extra);
            }
            write_atomic(&sibling(&out, "per_signal.csv"), bench::per_signal_csv(&all).as_bytes())?;
            let manifest = RunManifest {
                command: "run-activations".into(),
                configs: main.into_iter().chain(variants).collect(),
                note_grid: grid_of(&signals),
                master_seed: cli.seed,
                seeds: Vec::new(),
                factor: None,
                output_dir: out.parent().map(Path::to_path_buf).unwrap_or_default(),
                tool_version: bench::tool_version(),
                input_hash: bench::content_hash(signals.iter().map(|s| &s.buffer)),
            };
            write_atomic(&sibling(&out, "manifest.txt"), manifest.to_text().as_bytes())?;
            print!("{}", bench::summary_csv(&all));
            eprintln!("done in {:.1}s", started.elapsed().as_secs_f64());
        }
        Command::RunUpsamplers {
            bench: dir,
            factor,
            seeds,
            configs,
        } => {
            let out = out_path(cli, "upsamplers.csv");
            let configs = match configs {
                Some(p) => {
                    let c = load_configs(p)?;
                    require_kind(&c, false)?;
                    c
                }
                None => bench::default_upsampler_configs(*factor),
            };
            if *seeds == 0 {
                return Err(Error::InvalidParameter("--seeds must be at least 1".into()));
            }
            let meta = bench::read_benchmark_metadata(dir)?;
            let specs: Vec<_> = meta.iter().map(|(i, s, _)| (*i, s.clone())).collect();
            let factors: Vec<usize> = configs
                .iter()
                .filter_map(|c| match &c.spec {
                    ModuleSpec::Upsampler(u) => Some(u.factor),
                    ModuleSpec::Activation(_) => None,
                })
                .collect();
            if factors.iter().any(|f| f != factor) {
                return Err(Error::Config {
                    line: 0,
                    message: format!("every upsampler config must use --factor {factor}"),
                });
            }
            let inputs = bench::upsampler_inputs(&specs, *factor)?;
            let seed_list = bench::derive_seeds(cli.seed, *seeds);
            let results = bench::run_upsamplers(&inputs, &configs, &seed_list)?;
            let summary = bench::upsampler_summary_csv(&results);
            write_atomic(&out, summary.as_bytes())?;
            let reports: Vec<_> = results.iter().map(|r| r.report.clone()).collect();
            write_atomic(&sibling(&out, "per_signal.csv"), bench::per_signal_csv(&reports).as_bytes())?;
            let manifest = RunManifest {
                command: "run-upsamplers".into(),
                configs,
                note_grid: grid_of(&inputs),
                master_seed: cli.seed,
                seeds: seed_list,
                factor: Some(*factor),
                output_dir: out.parent().map(Path::to_path_buf).unwrap_or_default(),
                tool_version: bench::tool_version(),
                input_hash: bench::content_hash(inputs.iter().map(|s| &s.buffer)),
            };
            write_atomic(&sibling(&out, "manifest.txt"), manifest.to_text().as_bytes())?;
            print!("{summary}");
            eprintln!("done in {:.1}s", started.elapsed().as_secs_f64());
        }
        Command::Sweep { config } => {
            let dir = out_path(cli, "sweep");
            let panels = match config {
                Some(p) => {
                    let c = load_configs(p)?;
                    require_kind(&c, true)?;
                    c
                }
                None => bench::default_sweep_panels(),
            };
            let results = bench::run_sweep(&panels, Some(&dir))?;
            let summary = bench::sweep_summary_csv(&results);
            write_atomic(&dir.join("sweep_summary.csv"), summary.as_bytes())?;
            print!("{summary}");
        }
        Command::FilterResponse { kind, n } => {
            let out = out_path(cli, "response.csv");
            let kernel = bench::response_kernel(*kind, *n)?;
            let points = filters::frequency_response(&kernel, bench::RESPONSE_POINTS)?;
            write_atomic(&out, filters::response_csv(&points).as_bytes())?;
            let ideal = bench::ideal_response_csv(*n, kernel.dc_gain(), bench::RESPONSE_POINTS);
            write_atomic(&sibling(&out, "ideal.csv"), ideal.as_bytes())?;
            eprintln!("wrote {} ({} taps)", out.display(), kernel.len());
        }
    }
    Ok(())
}

/// Chromatic when every signal carries a MIDI note.
fn grid_of(signals: &[aliasfree::signal::BenchmarkSignal]) -> NoteGrid {
    if signals.iter().all(|s| s.spec.midi_note.is_some()) {
        NoteGrid::Chromatic
    } else {
        NoteGrid::LogUniform48
    }
}
