//! `tptomo`: simulate, estimate and benchmark trace-preserving channel estimators.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tptomo_bench::{
    default_grid, estimate_dataset, run_comparison_with, run_minimal_study_with, run_single, ComparisonConfig,
    KrausRank, MinimalStudyConfig, DEFAULT_N_LIST,
};
use tptomo_core::channel::{amplitude_damping_chi, chi_from_json, ChiMatrix};
use tptomo_core::estimators::{Method, SolverConfig};
use tptomo_core::experiment::{minimal_qubit_setting, setting_from_json, simulate_counts, Dataset, ExperimentSetting};

#[derive(Parser)]
#[command(name = "tptomo", version, about = "Trace-preserving quantum channel estimation benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct Common {
    /// Master seed; every report is a pure function of inputs and seed.
    #[arg(long, default_value_t = 20240601)]
    seed: u64,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Inversion vs maximum likelihood on random qubit channels.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Number of random channels.
        #[arg(long, default_value_t = 100)]
        channels: usize,
        /// Comma-separated trial counts per pair.
        #[arg(long = "N", value_delimiter = ',', default_values_t = DEFAULT_N_LIST.to_vec())]
        n: Vec<u64>,
        /// Kraus rank of the random channels; omit to draw it uniformly per channel.
        #[arg(long)]
        kraus_rank: Option<usize>,
    },
    /// Best ML error per (M, L) cell at a fixed total trial budget.
    MinimalStudy {
        #[command(flatten)]
        common: Common,
        /// Total trial budget N_T.
        #[arg(long, default_value_t = 3600)]
        nt: u64,
        /// Comma-separated cells, e.g. 3x4,4x5.
        #[arg(long, value_delimiter = ',', value_parser = parse_cell)]
        grid: Option<Vec<(usize, usize)>>,
        /// Random settings per cell.
        #[arg(long, default_value_t = 20)]
        settings: usize,
        /// Repetitions per setting.
        #[arg(long, default_value_t = 20)]
        reps: usize,
        /// Repetitions averaged into the estimate at the best minimal setting (0 to skip).
        #[arg(long, default_value_t = 50)]
        average_reps: usize,
        /// Channel JSON file or builtin:amplitude-damping.
        #[arg(long, default_value = "builtin:amplitude-damping")]
        channel: String,
    },
    /// Estimate a channel from simulated or recorded data.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: SettingInput,
        /// True channel (file or builtin:amplitude-damping); required unless --data is given.
        #[arg(long)]
        channel: Option<String>,
        /// Recorded counts CSV (j,k,count,N); skips simulation.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Trials per pair when simulating.
        #[arg(long = "N", default_value_t = 300)]
        n: u64,
        /// inversion | ml_binomial | ml_gaussian.
        #[arg(long, default_value = "ml_binomial")]
        method: Method,
    },
    /// Simulate binomial counts for a channel and setting.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: SettingInput,
        #[arg(long, default_value = "builtin:amplitude-damping")]
        channel: String,
        #[arg(long = "N", default_value_t = 300)]
        n: u64,
    },
}

#[derive(Args)]
struct SettingInput {
    /// Setting JSON file.
    #[arg(long, conflicts_with = "minimal")]
    setting: Option<PathBuf>,
    /// Use the minimal qubit setting (default when no file is given).
    #[arg(long)]
    minimal: bool,
}

fn parse_cell(s: &str) -> Result<(usize, usize), String> {
    let (m, l) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected MxL, got {s:?}"))?;
    let m = m.trim().parse().map_err(|e| format!("bad M in {s:?}: {e}"))?;
    let l = l.trim().parse().map_err(|e| format!("bad L in {s:?}: {e}"))?;
    Ok((m, l))
}

type CliResult<T> = Result<T, String>;

fn load_channel(spec: &str) -> CliResult<ChiMatrix> {
    match spec {
        "builtin:amplitude-damping" => Ok(amplitude_damping_chi()),
        path if path.starts_with("builtin:") => Err(format!("unknown builtin channel {path:?}")),
        path => {
            let text = fs::read_to_string(path).map_err(|e| format!("reading {path}: {e}"))?;
            let chi = chi_from_json(&text).map_err(|e| format!("channel {path}: {e}"))?;
            if !chi.is_psd(tptomo_core::linalg::PSD_TOL) || !tptomo_core::channel::check_tp(&chi, 1e-8) {
                return Err(format!("channel {path} is not TP and PSD"));
            }
            Ok(chi)
        }
    }
}

fn load_setting(input: &SettingInput) -> CliResult<ExperimentSetting> {
    match &input.setting {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| format!("reading {}: {e}", path.display()))?;
            setting_from_json(&text).map_err(|e| format!("setting {}: {e}", path.display()))
        }
        None => Ok(minimal_qubit_setting()),
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> CliResult<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| format!("writing {}: {e}", path.display()))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    let err = |e: tptomo_core::Error| e.to_string();
    match cli.command {
        Command::Compare {
            common,
            channels,
            n,
            kraus_rank,
        } => {
            let mut cfg = ComparisonConfig::new(channels, n, common.seed);
            if let Some(r) = kraus_rank {
                cfg.kraus_rank = KrausRank::Fixed(r);
            }
            let report = run_comparison_with(&cfg).map_err(err)?;
            fs::create_dir_all(&common.out).map_err(|e| e.to_string())?;
            match common.format {
                Format::Csv => {
                    write(&common.out, "compare_runs.csv", &report.runs_csv())?;
                    write(&common.out, "compare_aggregate.csv", &report.aggregate_csv())?;
                }
                Format::Json => write(&common.out, "compare.json", &report.to_json().map_err(err)?)?,
            }
            print!("{}", report.aggregate_csv());
        }
        Command::MinimalStudy {
            common,
            nt,
            grid,
            settings,
            reps,
            average_reps,
            channel,
        } => {
            let chi = load_channel(&channel)?;
            let mut cfg = MinimalStudyConfig::new(nt, grid.unwrap_or_else(default_grid), settings, reps, common.seed);
            cfg.average_reps = average_reps;
            let report = run_minimal_study_with(&chi, &cfg).map_err(err)?;
            fs::create_dir_all(&common.out).map_err(|e| e.to_string())?;
            match common.format {
                Format::Csv => {
                    write(&common.out, "minimal_study_settings.csv", &report.settings_csv())?;
                    write(&common.out, "minimal_study_aggregate.csv", &report.aggregate_csv())?;
                    if report.averaged.is_some() {
                        write(&common.out, "minimal_study_average.csv", &report.averaged_csv())?;
                    }
                }
                Format::Json => write(&common.out, "minimal_study.json", &report.to_json().map_err(err)?)?,
            }
            print!("{}", report.aggregate_csv());
        }
        Command::Estimate {
            common,
            input,
            channel,
            data,
            n,
            method,
        } => {
            let setting = load_setting(&input)?;
            let truth = channel.as_deref().map(load_channel).transpose()?;
            let solver = SolverConfig::default();
            let single = match (data, truth) {
                (Some(path), truth) => {
                    let text = fs::read_to_string(&path).map_err(|e| format!("reading {}: {e}", path.display()))?;
                    let dataset = Dataset::from_csv(&text).map_err(err)?;
                    estimate_dataset(&setting, dataset, method, truth.as_ref(), &solver).map_err(err)?
                }
                (None, Some(chi)) => run_single(&chi, &setting, n, method, common.seed, &solver).map_err(err)?,
                (None, None) => return Err("estimate needs --channel or --data".into()),
            };
            fs::create_dir_all(&common.out).map_err(|e| e.to_string())?;
            // The estimate is JSON in either format; CSV mode adds the counts used.
            write(&common.out, "result.json", &single.result.to_json().map_err(err)?)?;
            write(&common.out, "summary.txt", &single.summary())?;
            if common.format == Format::Csv {
                write(&common.out, "dataset.csv", &single.dataset.to_csv())?;
            }
            print!("{}", single.summary());
        }
        Command::Simulate {
            common,
            input,
            channel,
            n,
        } => {
            let chi = load_channel(&channel)?;
            let setting = load_setting(&input)?;
            if n == 0 {
                return Err("N must be positive".into());
            }
            let data = simulate_counts(&chi, &setting, n, common.seed).map_err(err)?;
            fs::create_dir_all(&common.out).map_err(|e| e.to_string())?;
            match common.format {
                Format::Csv => write(&common.out, "dataset.csv", &data.to_csv())?,
                Format::Json => {
                    let json = serde_json::json!({
                        "M": data.num_projectors(),
                        "L": data.num_states(),
                        "N": data.repetitions(),
                        "counts": data.counts(),
                    });
                    write(&common.out, "dataset.json", &serde_json::to_string_pretty(&json).map_err(|e| e.to_string())?)?;
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
