//! Channel estimators: direct inversion and barrier-method maximum likelihood.

mod barrier;
mod cost;
mod inversion;

pub use barrier::{
    barrier_objective, barrier_solve, estimate_ml, gradient_gq, hessian_gq, newton_centering,
    BarrierProblem, CenteringOutcome,
};
pub use cost::{binomial_cost, gaussian_cost, Cost, CostKind, Covariance};
pub use inversion::estimate_inversion;

use serde::{Deserialize, Serialize};

use crate::channel::{split_matrix, ChiMatrix, ThetaVector};
use crate::error::{Error, Result};
use crate::linalg::PSD_TOL;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Armijo constant, `0 < gamma < 1/2`.
    pub gamma: f64,
    /// Gradient-norm stop for each centering step.
    pub eps_grad: f64,
    /// Initial barrier weight.
    pub q0: f64,
    /// Barrier weight multiplier per outer step.
    pub mu: f64,
    /// Target accuracy; stop once `d²/q < xi`.
    pub xi: f64,
    pub max_newton_iters: usize,
    pub max_centering_steps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            gamma: 0.1,
            eps_grad: 1e-8,
            q0: 1.0,
            mu: 10.0,
            xi: 1e-5,
            max_newton_iters: 200,
            max_centering_steps: 64,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 0.5) {
            return bad("gamma must lie in (0, 1/2)");
        }
        if !(self.mu > 1.0) {
            return bad("mu must exceed 1");
        }
        if !(self.q0 > 0.0 && self.xi > 0.0 && self.eps_grad > 0.0) {
            return bad("q0, xi and eps_grad must be positive");
        }
        if self.max_newton_iters == 0 || self.max_centering_steps == 0 {
            return bad("iteration limits must be positive");
        }
        Ok(())
    }

    /// Barrier weights `q₀ μ^k`, `k = 1..K`, with `K` the smallest index
    /// such that `d²/q_K < xi`. The start point is the `k = 0` iterate.
    pub fn q_schedule(&self, d: usize) -> Vec<f64> {
        let target = (d * d) as f64;
        let mut out = Vec::new();
        let mut q = self.q0;
        loop {
            q *= self.mu;
            out.push(q);
            if target / q < self.xi || out.len() >= self.max_centering_steps + 1 {
                break;
            }
        }
        out
    }

    /// `⌈log(d²/q₀)/log μ⌉ + 1`, reported for comparison only.
    pub fn reference_step_count(&self, d: usize) -> i64 {
        (((d * d) as f64 / self.q0).ln() / self.mu.ln()).ceil() as i64 + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Inversion,
    MlBinomial,
    MlGaussian,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Inversion => "inversion",
            Method::MlBinomial => "ml_binomial",
            Method::MlGaussian => "ml_gaussian",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inversion" | "in" => Ok(Method::Inversion),
            "ml_binomial" | "ml" => Ok(Method::MlBinomial),
            "ml_gaussian" => Ok(Method::MlGaussian),
            other => Err(Error::Invalid(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// `‖∇G_q‖ < eps_grad`.
    #[default]
    GradientNorm,
    /// Newton decrement below the floating-point resolution of `G_q`.
    NewtonDecrement,
}

/// One Newton centering run at a fixed barrier weight.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CenteringRecord {
    pub q: f64,
    pub newton_iterations: usize,
    pub final_grad_norm: f64,
    pub stop: StopReason,
    /// `G_q` at the start point and after every accepted step.
    pub objective_values: Vec<f64>,
    /// Accepted change of `G_q` per step, evaluated without cancellation.
    pub decrements: Vec<f64>,
    /// Accepted step length `t` per step.
    pub step_sizes: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverTrace {
    pub centering: Vec<CenteringRecord>,
    /// `⌈log(d²/q₀)/log μ⌉ + 1`; differs from the stop rule in general.
    pub reference_step_count: Option<i64>,
}

impl SolverTrace {
    pub fn q_schedule(&self) -> Vec<f64> {
        self.centering.iter().map(|c| c.q).collect()
    }

    pub fn total_newton_iterations(&self) -> usize {
        self.centering.iter().map(|c| c.newton_iterations).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.centering.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct EstimationResult {
    pub chi_hat: ChiMatrix,
    pub theta_hat: ThetaVector,
    pub psd: bool,
    pub method: Method,
    pub trace: SolverTrace,
}

impl EstimationResult {
    pub(crate) fn new(chi_hat: ChiMatrix, theta_hat: ThetaVector, method: Method, trace: SolverTrace) -> Self {
        let psd = chi_hat.is_psd(PSD_TOL);
        Self {
            chi_hat,
            theta_hat,
            psd,
            method,
            trace,
        }
    }

    pub fn to_file(&self) -> ResultFile {
        let (chi_re, chi_im) = split_matrix(self.chi_hat.matrix());
        ResultFile {
            d: self.chi_hat.dim(),
            method: self.method,
            psd: self.psd,
            min_eigenvalue: self.chi_hat.min_eigenvalue(),
            chi_re,
            chi_im,
            theta: self.theta_hat.coords().to_vec(),
            trace: TraceSummary {
                q_schedule: self.trace.q_schedule(),
                newton_iterations: self.trace.centering.iter().map(|c| c.newton_iterations).collect(),
                final_grad_norms: self.trace.centering.iter().map(|c| c.final_grad_norm).collect(),
                stop_reasons: self.trace.centering.iter().map(|c| c.stop).collect(),
                reference_step_count: self.trace.reference_step_count,
            },
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceSummary {
    pub q_schedule: Vec<f64>,
    pub newton_iterations: Vec<usize>,
    pub final_grad_norms: Vec<f64>,
    pub stop_reasons: Vec<StopReason>,
    pub reference_step_count: Option<i64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultFile {
    pub d: usize,
    pub method: Method,
    pub psd: bool,
    pub min_eigenvalue: f64,
    pub chi_re: Vec<Vec<f64>>,
    pub chi_im: Vec<Vec<f64>>,
    pub theta: Vec<f64>,
    pub trace: TraceSummary,
}
