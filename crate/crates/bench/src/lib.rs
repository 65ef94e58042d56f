//! Monte Carlo harness comparing direct inversion with barrier-method
//! maximum likelihood, plus the minimal-versus-rich setting study.
//!
//! Every report is a pure function of its inputs and seed: each run draws
//! from a seed derived from `(seed, stream, index)`, runs execute in
//! parallel, and results are collected in run-index order.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use tptomo_core::channel::{random_cptp, split_matrix, ChiMatrix};
use tptomo_core::estimators::{estimate_inversion, estimate_ml, CostKind, EstimationResult, Method, SolverConfig};
use tptomo_core::experiment::{
    check_identifiable, frequencies, minimal_qubit_setting, random_setting, simulate_counts, Dataset,
    ExperimentSetting, DEFAULT_MAX_ATTEMPTS,
};
use tptomo_core::linalg::{frobenius_norm, CMatrix};
use tptomo_core::{Error, Result};

/// Name of the error norm, written into report metadata.
pub const ERROR_NORM: &str = "frobenius";

/// Default `N` list for the comparison study.
pub const DEFAULT_N_LIST: [u64; 4] = [100, 1_000, 10_000, 100_000];

/// Default `(M, L)` grid for the minimal study.
pub fn default_grid() -> Vec<(usize, usize)> {
    let mut grid = Vec::new();
    for m in 3..=5 {
        for l in 4..=6 {
            grid.push((m, l));
        }
    }
    grid
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for run `index` of stream `stream`, independent of scheduling.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    mix(mix(mix(seed) ^ stream) ^ index)
}

// Streams used by the studies.
const STREAM_CHANNEL: u64 = 1;
const STREAM_COUNTS: u64 = 2;
const STREAM_RANK: u64 = 3;
const STREAM_SETTING: u64 = 4;
const STREAM_REP: u64 = 5;
const STREAM_AVERAGE: u64 = 6;

/// `‖χ̂ − χ‖_F / ‖χ‖_F`.
pub fn relative_error(chi_hat: &ChiMatrix, chi_true: &ChiMatrix) -> Result<f64> {
    relative_error_matrix(chi_hat.matrix(), chi_true.matrix())
}

/// [`relative_error`] on raw matrices.
pub fn relative_error_matrix(chi_hat: &CMatrix, chi_true: &CMatrix) -> Result<f64> {
    if chi_hat.shape() != chi_true.shape() {
        return Err(Error::DimensionMismatch {
            expected: format!("{:?}", chi_true.shape()),
            got: format!("{:?}", chi_hat.shape()),
        });
    }
    let denom = frobenius_norm(chi_true);
    if denom == 0.0 {
        return Err(Error::Invalid("relative error against a zero matrix".into()));
    }
    Ok(frobenius_norm(&(chi_hat - chi_true)) / denom)
}

/// Kraus rank of the random channels in the comparison study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KrausRank {
    /// The same rank for every channel.
    Fixed(usize),
    /// Rank drawn uniformly from `1..=d²` per channel.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonConfig {
    pub channel_count: usize,
    pub n_list: Vec<u64>,
    pub seed: u64,
    pub kraus_rank: KrausRank,
    pub solver: SolverConfig,
}

impl ComparisonConfig {
    pub fn new(channel_count: usize, n_list: Vec<u64>, seed: u64) -> Self {
        Self {
            channel_count,
            n_list,
            seed,
            kraus_rank: KrausRank::Uniform,
            solver: SolverConfig::default(),
        }
    }
}

/// One channel at one `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRun {
    pub n: u64,
    pub channel_index: usize,
    pub e_in: f64,
    pub e_ml: f64,
    pub in_psd: bool,
}

/// Means over all channels at one `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub n: u64,
    pub mu_in: f64,
    pub mu_ml: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub channel_count: usize,
    pub seed: u64,
    pub norm: String,
    pub kraus_rank: KrausRank,
    pub records: Vec<ComparisonRecord>,
    pub runs: Vec<ComparisonRun>,
}

impl ComparisonReport {
    /// `N,channel_index,e_in,e_ml,in_psd`, ordered by `N` then channel.
    pub fn runs_csv(&self) -> String {
        let mut out = String::from("N,channel_index,e_in,e_ml,in_psd\n");
        for r in &self.runs {
            let _ = writeln!(out, "{},{},{:e},{:e},{}", r.n, r.channel_index, r.e_in, r.e_ml, r.in_psd);
        }
        out
    }

    /// `N,mu_in,mu_ml,failures`.
    pub fn aggregate_csv(&self) -> String {
        let mut out = String::from("N,mu_in,mu_ml,failures\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{:e},{:e},{}", r.n, r.mu_in, r.mu_ml, r.failures);
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Record for a given `N`, if present.
    pub fn record(&self, n: u64) -> Option<&ComparisonRecord> {
        self.records.iter().find(|r| r.n == n)
    }
}

/// Comparison with the default configuration (uniform Kraus rank).
pub fn run_comparison(channel_count: usize, n_list: &[u64], seed: u64) -> Result<ComparisonReport> {
    run_comparison_with(&ComparisonConfig::new(channel_count, n_list.to_vec(), seed))
}

/// IN vs ML on `channel_count` random qubit channels under the minimal setting.
pub fn run_comparison_with(cfg: &ComparisonConfig) -> Result<ComparisonReport> {
    cfg.solver.validate()?;
    if cfg.channel_count == 0 {
        return Err(Error::InvalidConfig("channel_count must be positive".into()));
    }
    if cfg.n_list.iter().any(|&n| n == 0) {
        return Err(Error::InvalidConfig("every N must be positive".into()));
    }
    let setting = minimal_qubit_setting();
    let d = setting.dim();
    let channels: Vec<ChiMatrix> = (0..cfg.channel_count)
        .map(|i| {
            let rank = match cfg.kraus_rank {
                KrausRank::Fixed(r) => r,
                KrausRank::Uniform => 1 + (derive_seed(cfg.seed, STREAM_RANK, i as u64) % (d * d) as u64) as usize,
            };
            random_cptp(d, rank, derive_seed(cfg.seed, STREAM_CHANNEL, i as u64)).map(|(_, chi)| chi)
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, usize)> = (0..cfg.n_list.len())
        .flat_map(|ni| (0..cfg.channel_count).map(move |ci| (ni, ci)))
        .collect();
    let runs: Vec<ComparisonRun> = jobs
        .par_iter()
        .map(|&(ni, ci)| {
            let n = cfg.n_list[ni];
            let chi = &channels[ci];
            let run_index = (ni * cfg.channel_count + ci) as u64;
            let data = simulate_counts(chi, &setting, n, derive_seed(cfg.seed, STREAM_COUNTS, run_index))?;
            let inv = estimate_inversion(&setting, &frequencies(&data, false))?;
            let ml = estimate_ml(&setting, &data, &CostKind::Binomial, &cfg.solver)?;
            Ok(ComparisonRun {
                n,
                channel_index: ci,
                e_in: relative_error(&inv.chi_hat, chi)?,
                e_ml: relative_error(&ml.chi_hat, chi)?,
                in_psd: inv.psd,
            })
        })
        .collect::<Result<_>>()?;

    let records = cfg
        .n_list
        .iter()
        .enumerate()
        .map(|(ni, &n)| {
            let block = &runs[ni * cfg.channel_count..(ni + 1) * cfg.channel_count];
            let count = block.len() as f64;
            ComparisonRecord {
                n,
                mu_in: block.iter().map(|r| r.e_in).sum::<f64>() / count,
                mu_ml: block.iter().map(|r| r.e_ml).sum::<f64>() / count,
                failures: block.iter().filter(|r| !r.in_psd).count(),
            }
        })
        .collect();

    Ok(ComparisonReport {
        channel_count: cfg.channel_count,
        seed: cfg.seed,
        norm: ERROR_NORM.into(),
        kraus_rank: cfg.kraus_rank,
        records,
        runs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimalStudyConfig {
    pub n_total: u64,
    pub grid: Vec<(usize, usize)>,
    pub settings_per_cell: usize,
    pub reps: usize,
    pub seed: u64,
    /// Repetitions averaged into χ̄_ML at the best minimal setting; 0 skips it.
    pub average_reps: usize,
    pub solver: SolverConfig,
}

impl MinimalStudyConfig {
    pub fn new(n_total: u64, grid: Vec<(usize, usize)>, settings_per_cell: usize, reps: usize, seed: u64) -> Self {
        Self {
            n_total,
            grid,
            settings_per_cell,
            reps,
            seed,
            average_reps: 50,
            solver: SolverConfig::default(),
        }
    }
}

/// Mean ML error of one sampled setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingRecord {
    pub m: usize,
    pub l: usize,
    pub n: u64,
    pub setting_index: usize,
    pub mu_m: f64,
}

/// Best setting of one `(M, L)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub m: usize,
    pub l: usize,
    pub n: u64,
    pub mu_bar: f64,
    pub best_setting: usize,
}

/// χ̄_ML averaged over repeated experiments at one fixed setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedEstimate {
    pub m: usize,
    pub l: usize,
    pub setting_index: usize,
    pub reps: usize,
    pub chi_re: Vec<Vec<f64>>,
    pub chi_im: Vec<Vec<f64>>,
    pub max_abs_imag: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimalStudyReport {
    pub n_total: u64,
    pub settings_per_cell: usize,
    pub reps: usize,
    pub seed: u64,
    pub norm: String,
    pub cells: Vec<CellRecord>,
    pub settings: Vec<SettingRecord>,
    pub averaged: Option<AveragedEstimate>,
}

impl MinimalStudyReport {
    /// `M,L,N,setting_index,mu_m`.
    pub fn settings_csv(&self) -> String {
        let mut out = String::from("M,L,N,setting_index,mu_m\n");
        for s in &self.settings {
            let _ = writeln!(out, "{},{},{},{},{:e}", s.m, s.l, s.n, s.setting_index, s.mu_m);
        }
        out
    }

    /// `M,L,mu_bar`.
    pub fn aggregate_csv(&self) -> String {
        let mut out = String::from("M,L,mu_bar\n");
        for c in &self.cells {
            let _ = writeln!(out, "{},{},{:e}", c.m, c.l, c.mu_bar);
        }
        out
    }

    /// `row,col,re,im` of the averaged estimate (header only if absent).
    pub fn averaged_csv(&self) -> String {
        let mut out = String::from("row,col,re,im\n");
        if let Some(a) = &self.averaged {
            for (r, (re, im)) in a.chi_re.iter().zip(&a.chi_im).enumerate() {
                for c in 0..re.len() {
                    let _ = writeln!(out, "{},{},{:e},{:e}", r, c, re[c], im[c]);
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn cell(&self, m: usize, l: usize) -> Option<&CellRecord> {
        self.cells.iter().find(|c| c.m == m && c.l == l)
    }

    /// Smallest `μ̄_{M,L}` over the grid.
    pub fn grid_minimum(&self) -> f64 {
        self.cells.iter().map(|c| c.mu_bar).fold(f64::INFINITY, f64::min)
    }
}

/// Per-pair trial count `floor(N_T / (L·M))`.
pub fn trials_per_pair(n_total: u64, m: usize, l: usize) -> u64 {
    n_total / (m * l) as u64
}

fn cell_stream(m: usize, l: usize) -> u64 {
    ((m as u64) << 32) | l as u64
}

fn cell_setting(d: usize, m: usize, l: usize, seed: u64, index: usize) -> Result<ExperimentSetting> {
    let setting_seed = derive_seed(seed, STREAM_SETTING ^ (cell_stream(m, l) << 8), index as u64);
    let setting = random_setting(d, m, l, setting_seed, DEFAULT_MAX_ATTEMPTS)?;
    debug_assert!(check_identifiable(&setting).identifiable);
    Ok(setting)
}

fn rep_seed(seed: u64, m: usize, l: usize, index: usize, rep: usize) -> u64 {
    derive_seed(derive_seed(seed, STREAM_REP ^ (cell_stream(m, l) << 8), index as u64), STREAM_REP, rep as u64)
}

/// Minimal study with the default configuration (50-rep averaged estimate).
pub fn run_minimal_study(
    chi_true: &ChiMatrix,
    n_total: u64,
    grid: &[(usize, usize)],
    settings_per_cell: usize,
    reps: usize,
    seed: u64,
) -> Result<MinimalStudyReport> {
    let cfg = MinimalStudyConfig::new(n_total, grid.to_vec(), settings_per_cell, reps, seed);
    run_minimal_study_with(chi_true, &cfg)
}

/// Best mean ML error per `(M, L)` cell at a fixed total trial budget.
pub fn run_minimal_study_with(chi_true: &ChiMatrix, cfg: &MinimalStudyConfig) -> Result<MinimalStudyReport> {
    cfg.solver.validate()?;
    let d = chi_true.dim();
    if !chi_true.is_psd(tptomo_core::linalg::PSD_TOL) || !tptomo_core::channel::check_tp(chi_true, 1e-8) {
        return Err(Error::Invalid("true channel must be TP and PSD".into()));
    }
    if cfg.settings_per_cell == 0 || cfg.reps == 0 || cfg.grid.is_empty() {
        return Err(Error::InvalidConfig("grid, settings and reps must be non-empty".into()));
    }
    for &(m, l) in &cfg.grid {
        if m < d * d - 1 || l < d * d {
            return Err(Error::InvalidConfig(format!("cell {m}x{l} is below the minimal {}x{}", d * d - 1, d * d)));
        }
        if trials_per_pair(cfg.n_total, m, l) == 0 {
            return Err(Error::InvalidConfig(format!("N_T = {} leaves no trials for cell {m}x{l}", cfg.n_total)));
        }
    }

    // Sample every setting first; each one is identifiable by construction.
    let setting_jobs: Vec<(usize, usize)> = (0..cfg.grid.len())
        .flat_map(|ci| (0..cfg.settings_per_cell).map(move |si| (ci, si)))
        .collect();
    let settings: Vec<ExperimentSetting> = setting_jobs
        .par_iter()
        .map(|&(ci, si)| {
            let (m, l) = cfg.grid[ci];
            cell_setting(d, m, l, cfg.seed, si)
        })
        .collect::<Result<_>>()?;

    let rep_jobs: Vec<(usize, usize)> = (0..setting_jobs.len())
        .flat_map(|ji| (0..cfg.reps).map(move |r| (ji, r)))
        .collect();
    let errors: Vec<f64> = rep_jobs
        .par_iter()
        .map(|&(ji, r)| {
            let (ci, si) = setting_jobs[ji];
            let (m, l) = cfg.grid[ci];
            let n = trials_per_pair(cfg.n_total, m, l);
            let setting = &settings[ji];
            let data = simulate_counts(chi_true, setting, n, rep_seed(cfg.seed, m, l, si, r))?;
            let ml = estimate_ml(setting, &data, &CostKind::Binomial, &cfg.solver)?;
            relative_error(&ml.chi_hat, chi_true)
        })
        .collect::<Result<_>>()?;

    let mut setting_records = Vec::with_capacity(setting_jobs.len());
    for (ji, &(ci, si)) in setting_jobs.iter().enumerate() {
        let (m, l) = cfg.grid[ci];
        let block = &errors[ji * cfg.reps..(ji + 1) * cfg.reps];
        setting_records.push(SettingRecord {
            m,
            l,
            n: trials_per_pair(cfg.n_total, m, l),
            setting_index: si,
            mu_m: block.iter().sum::<f64>() / cfg.reps as f64,
        });
    }

    let cells: Vec<CellRecord> = cfg
        .grid
        .iter()
        .enumerate()
        .map(|(ci, &(m, l))| {
            let block = &setting_records[ci * cfg.settings_per_cell..(ci + 1) * cfg.settings_per_cell];
            // First minimum wins, so ties resolve to the lowest setting index.
            let best = block
                .iter()
                .fold(&block[0], |best, s| if s.mu_m < best.mu_m { s } else { best });
            CellRecord {
                m,
                l,
                n: trials_per_pair(cfg.n_total, m, l),
                mu_bar: best.mu_m,
                best_setting: best.setting_index,
            }
        })
        .collect();

    let minimal = (d * d - 1, d * d);
    let averaged = match cells.iter().find(|c| (c.m, c.l) == minimal) {
        Some(cell) if cfg.average_reps > 0 => {
            let setting = cell_setting(d, cell.m, cell.l, cfg.seed, cell.best_setting)?;
            Some(averaged_estimate(chi_true, &setting, cell, cfg)?)
        }
        _ => None,
    };

    Ok(MinimalStudyReport {
        n_total: cfg.n_total,
        settings_per_cell: cfg.settings_per_cell,
        reps: cfg.reps,
        seed: cfg.seed,
        norm: ERROR_NORM.into(),
        cells,
        settings: setting_records,
        averaged,
    })
}

fn averaged_estimate(
    chi_true: &ChiMatrix,
    setting: &ExperimentSetting,
    cell: &CellRecord,
    cfg: &MinimalStudyConfig,
) -> Result<AveragedEstimate> {
    let base = derive_seed(cfg.seed, STREAM_AVERAGE, cell_stream(cell.m, cell.l));
    let estimates: Vec<CMatrix> = (0..cfg.average_reps)
        .into_par_iter()
        .map(|r| {
            let data = simulate_counts(chi_true, setting, cell.n, derive_seed(base, cell.best_setting as u64, r as u64))?;
            Ok(estimate_ml(setting, &data, &CostKind::Binomial, &cfg.solver)?.chi_hat.into_matrix())
        })
        .collect::<Result<_>>()?;
    let dim = chi_true.matrix().nrows();
    let sum = estimates.iter().fold(CMatrix::zeros(dim, dim), |acc, e| acc + e);
    let mean = sum / num_complex::Complex64::new(cfg.average_reps as f64, 0.0);
    let (chi_re, chi_im) = split_matrix(&mean);
    Ok(AveragedEstimate {
        m: cell.m,
        l: cell.l,
        setting_index: cell.best_setting,
        reps: cfg.average_reps,
        max_abs_imag: mean.iter().map(|z| z.im.abs()).fold(0.0, f64::max),
        relative_error: relative_error_matrix(&mean, chi_true.matrix())?,
        chi_re,
        chi_im,
    })
}

/// Output of one simulate-and-estimate run.
#[derive(Debug, Clone)]
pub struct SingleRun {
    pub dataset: Dataset,
    pub result: EstimationResult,
    pub relative_error: Option<f64>,
}

impl SingleRun {
    /// Human-readable summary: method, PSD flag, error, solver trace.
    pub fn summary(&self) -> String {
        let r = &self.result;
        let mut out = String::new();
        let _ = writeln!(out, "method: {}", r.method);
        let _ = writeln!(out, "N: {}", self.dataset.repetitions());
        let _ = writeln!(out, "psd: {}", r.psd);
        if !r.psd {
            let _ = writeln!(
                out,
                "warning: estimate is not positive semidefinite (min eigenvalue {:e})",
                r.chi_hat.min_eigenvalue()
            );
        }
        let _ = writeln!(out, "min_eigenvalue: {:e}", r.chi_hat.min_eigenvalue());
        if let Some(e) = self.relative_error {
            let _ = writeln!(out, "relative_error ({ERROR_NORM}): {e:e}");
        }
        if !r.trace.is_empty() {
            let _ = writeln!(out, "centering steps: {}", r.trace.centering.len());
            for c in &r.trace.centering {
                let _ = writeln!(
                    out,
                    "  q = {:e}: {} Newton iterations, |grad| = {:e}, stop = {:?}",
                    c.q, c.newton_iterations, c.final_grad_norm, c.stop
                );
            }
            if let Some(k) = r.trace.reference_step_count {
                let _ = writeln!(out, "reference step count formula: {k}");
            }
        }
        out
    }
}

/// Estimate from an existing dataset; `truth` adds the relative error.
pub fn estimate_dataset(
    setting: &ExperimentSetting,
    dataset: Dataset,
    method: Method,
    truth: Option<&ChiMatrix>,
    solver: &SolverConfig,
) -> Result<SingleRun> {
    let result = match method {
        Method::Inversion => estimate_inversion(setting, &frequencies(&dataset, false))?,
        Method::MlBinomial => estimate_ml(setting, &dataset, &CostKind::Binomial, solver)?,
        Method::MlGaussian => estimate_ml(setting, &dataset, &CostKind::Gaussian(None), solver)?,
    };
    let relative_error = truth.map(|t| relative_error(&result.chi_hat, t)).transpose()?;
    Ok(SingleRun {
        dataset,
        result,
        relative_error,
    })
}

/// Simulate `N` trials per pair from `chi_true` and estimate the channel.
pub fn run_single(
    chi_true: &ChiMatrix,
    setting: &ExperimentSetting,
    n: u64,
    method: Method,
    seed: u64,
    solver: &SolverConfig,
) -> Result<SingleRun> {
    if n == 0 {
        return Err(Error::InvalidConfig("N must be positive".into()));
    }
    if !chi_true.is_psd(tptomo_core::linalg::PSD_TOL) || !tptomo_core::channel::check_tp(chi_true, 1e-8) {
        return Err(Error::Invalid("true channel must be TP and PSD".into()));
    }
    let dataset = simulate_counts(chi_true, setting, n, seed)?;
    estimate_dataset(setting, dataset, method, Some(chi_true), solver)
}
