//! Log-det barrier method with Newton centering and backtracking.
//!
//! For a barrier weight `q` the centering objective is
//! `G_q(θ) = q J(θ) - log det χ(θ)`, minimized over the set where χ(θ) is
//! positive definite and (for the binomial functional) every outcome
//! probability lies strictly inside `(0, 1)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use num_complex::Complex64;

use crate::channel::{ThetaVector, TpParametrization};
use crate::error::{Error, Result};
use crate::experiment::{frequencies, Dataset, ExperimentSetting};
use crate::linalg::{strict_cholesky, trace_product, CMatrix};

use super::cost::{Cost, CostKind, Covariance};
use super::{CenteringRecord, EstimationResult, Method, SolverConfig, SolverTrace, StopReason};

/// Backtracking gives up after this many halvings.
const MAX_HALVINGS: usize = 64;

/// A cost functional together with the TP parametrization of χ.
#[derive(Debug, Clone)]
pub struct BarrierProblem {
    cost: Cost,
    param: TpParametrization,
}

impl BarrierProblem {
    pub fn new(setting: &ExperimentSetting, f: &[f64], kind: &CostKind) -> Result<Self> {
        Ok(Self {
            cost: Cost::new(setting, f, kind)?,
            param: TpParametrization::new(setting.dim()),
        })
    }

    pub fn cost(&self) -> &Cost {
        &self.cost
    }

    pub fn parametrization(&self) -> &TpParametrization {
        &self.param
    }

    pub fn dim(&self) -> usize {
        self.param.dim()
    }

    pub fn num_params(&self) -> usize {
        self.param.len()
    }

    fn chi(&self, theta: &[f64]) -> CMatrix {
        self.param.chi_matrix(theta)
    }

    fn factor(&self, theta: &[f64]) -> Option<Cholesky<Complex64, Dyn>> {
        let chi = self.chi(theta);
        strict_cholesky(&chi)?;
        Cholesky::new(chi)
    }

    /// Strict interior test: χ(θ) positive definite and the cost finite.
    pub fn is_interior(&self, theta: &[f64]) -> bool {
        self.cost.admissible(&self.cost.probabilities(theta)) && self.factor(theta).is_some()
    }

    /// `G_q(θ)`, or `+∞` outside the interior.
    pub fn value(&self, theta: &[f64], q: f64) -> f64 {
        let j = self.cost.value(theta);
        if !j.is_finite() {
            return f64::INFINITY;
        }
        match self.factor(theta) {
            Some(chol) => q * j - log_det(&chol),
            None => f64::INFINITY,
        }
    }

    /// `G_q(θ + step) - G_q(θ)` without subtracting two large numbers.
    /// `None` if `θ + step` leaves the interior.
    pub fn difference(&self, theta: &[f64], step: &[f64], q: f64) -> Option<f64> {
        let moved: Vec<f64> = theta.iter().zip(step).map(|(a, b)| a + b).collect();
        if !self.is_interior(&moved) {
            return None;
        }
        let p = self.cost.probabilities(theta);
        let dp = self.cost.design().matrix() * DVector::from_column_slice(step);
        let dj = self.cost.difference(&p, dp.as_slice());

        // log det(χ + Δχ) - log det χ = Σ log(1 + λ_i(L⁻¹ Δχ L⁻†))
        let chol = self.factor(theta)?;
        let mut dchi = CMatrix::zeros(self.chi(theta).nrows(), self.chi(theta).ncols());
        for (q_l, &s) in self.param.operators().iter().zip(step) {
            if s != 0.0 {
                dchi.zip_apply(q_l, |x, y| *x += y * s);
            }
        }
        let l = chol.l();
        let x = l.solve_lower_triangular(&dchi)?;
        let m = l.solve_lower_triangular(&x.adjoint())?.adjoint();
        let m = (&m + m.adjoint()).scale(0.5);
        let mut dlogdet = 0.0;
        for lam in SymmetricEigen::new(m).eigenvalues.iter() {
            if *lam <= -1.0 {
                return None;
            }
            dlogdet += lam.ln_1p();
        }
        let dg = q * dj - dlogdet;
        dg.is_finite().then_some(dg)
    }

    pub fn gradient(&self, theta: &[f64], q: f64) -> Result<DVector<f64>> {
        let chol = self.factor(theta).ok_or(Error::Infeasible)?;
        let inv = chol.inverse();
        let mut g = self.cost.gradient(theta)? * q;
        for (gs, q_s) in g.iter_mut().zip(self.param.operators()) {
            *gs -= trace_product(&inv, q_s).re;
        }
        Ok(g)
    }

    pub fn hessian(&self, theta: &[f64], q: f64) -> Result<DMatrix<f64>> {
        let chol = self.factor(theta).ok_or(Error::Infeasible)?;
        let inv = chol.inverse();
        let mut h = self.cost.hessian(theta)? * q;
        let products: Vec<CMatrix> = self.param.operators().iter().map(|q_r| &inv * q_r).collect();
        let n = products.len();
        for r in 0..n {
            for s in r..n {
                let v = trace_product(&products[r], &products[s]).re;
                h[(r, s)] += v;
                if r != s {
                    h[(s, r)] += v;
                }
            }
        }
        Ok(h)
    }
}

fn log_det(chol: &Cholesky<Complex64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|z| z.re.ln()).sum::<f64>()
}

/// Solves `H Δ = -g` by Cholesky, retrying once with a small diagonal shift.
fn newton_direction(h: &DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    let sym = (h + h.transpose()) * 0.5;
    if let Some(chol) = Cholesky::new(sym.clone()) {
        return Some(-chol.solve(g));
    }
    let n = sym.nrows() as f64;
    let shift = 1e-10 * sym.trace() / n;
    let shifted = sym + DMatrix::identity(h.nrows(), h.ncols()) * shift;
    Cholesky::new(shifted).map(|chol| -chol.solve(g))
}

#[derive(Debug, Clone)]
pub struct CenteringOutcome {
    pub theta: Vec<f64>,
    pub record: CenteringRecord,
}

/// Newton's method with step halving for one barrier weight `q`.
///
/// A step `t Δ` is accepted once `θ + tΔ` is strictly interior and
/// `G_q(θ + tΔ) < G_q(θ) + γ t ∇Gᵀ Δ`; `t` starts at 1 and is halved.
/// Iteration stops when `‖∇G_q‖ < eps_grad`, or earlier when the Newton
/// decrement shows the remaining decrease is below double precision
/// resolution of `G_q` (large `q`, nearly singular χ).
pub fn newton_centering(
    theta_start: &[f64],
    q: f64,
    problem: &BarrierProblem,
    cfg: &SolverConfig,
) -> Result<CenteringOutcome> {
    if theta_start.len() != problem.num_params() {
        return Err(Error::ThetaLength {
            expected: problem.num_params(),
            got: theta_start.len(),
        });
    }
    if !problem.is_interior(theta_start) {
        return Err(Error::Infeasible);
    }
    let mut theta = theta_start.to_vec();
    let mut record = CenteringRecord {
        q,
        ..Default::default()
    };
    let mut value = problem.value(&theta, q);
    record.objective_values.push(value);

    for _ in 0..cfg.max_newton_iters {
        let g = problem.gradient(&theta, q)?;
        let grad_norm = g.norm();
        record.final_grad_norm = grad_norm;
        if grad_norm < cfg.eps_grad {
            return Ok(CenteringOutcome { theta, record });
        }
        let h = problem.hessian(&theta, q)?;
        let delta = newton_direction(&h, &g).ok_or(Error::LineSearchFailed { grad_norm })?;
        let slope = g.dot(&delta);
        if !(slope < 0.0) {
            return Err(Error::LineSearchFailed { grad_norm });
        }
        // λ²/2 = -slope/2 predicts the remaining decrease of G_q; once it is
        // below the resolution of G_q no step can be told apart from zero.
        if -0.5 * slope <= f64::EPSILON * value.abs().max(1.0) {
            record.stop = StopReason::NewtonDecrement;
            return Ok(CenteringOutcome { theta, record });
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let step: Vec<f64> = delta.iter().map(|d| t * d).collect();
            if let Some(dg) = problem.difference(&theta, &step, q) {
                if dg < cfg.gamma * t * slope {
                    accepted = Some((step, dg));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((step, dg)) = accepted else {
            return Err(Error::LineSearchFailed { grad_norm });
        };
        for (a, s) in theta.iter_mut().zip(&step) {
            *a += s;
        }
        value += dg;
        record.objective_values.push(value);
        record.decrements.push(dg);
        record.step_sizes.push(t);
        record.newton_iterations += 1;
    }
    let grad_norm = problem.gradient(&theta, q)?.norm();
    record.final_grad_norm = grad_norm;
    if grad_norm < cfg.eps_grad {
        return Ok(CenteringOutcome { theta, record });
    }
    Err(Error::NewtonMaxIters {
        iters: cfg.max_newton_iters,
        grad_norm,
        record: Box::new(record),
    })
}

/// Barrier method: centering at `q₀μ, q₀μ², …` with warm starts from θ = 0
/// until `d²/q < xi`.
pub fn barrier_solve(
    setting: &ExperimentSetting,
    f: &[f64],
    kind: &CostKind,
    cfg: &SolverConfig,
) -> Result<EstimationResult> {
    cfg.validate()?;
    let ident = crate::experiment::check_identifiable(setting);
    if !ident.identifiable {
        return Err(Error::NotIdentifiable {
            rank: ident.rank,
            required: ident.required,
        });
    }
    let problem = BarrierProblem::new(setting, f, kind)?;
    let d = setting.dim();
    let schedule = cfg.q_schedule(d);
    if schedule.len() > cfg.max_centering_steps {
        return Err(Error::MaxCenteringSteps(cfg.max_centering_steps));
    }
    let mut theta = vec![0.0; problem.num_params()];
    let mut trace = SolverTrace {
        centering: Vec::with_capacity(schedule.len()),
        reference_step_count: Some(cfg.reference_step_count(d)),
    };
    for q in schedule {
        let outcome = newton_centering(&theta, q, &problem, cfg)?;
        theta = outcome.theta;
        trace.centering.push(outcome.record);
    }
    let theta = ThetaVector::new(d, theta)?;
    let chi = problem.parametrization().to_chi(&theta)?;
    let method = match kind {
        CostKind::Binomial => Method::MlBinomial,
        CostKind::Gaussian(_) => Method::MlGaussian,
    };
    Ok(EstimationResult::new(chi, theta, method, trace))
}

/// Maximum-likelihood estimate from counts: clamped frequencies, then
/// [`barrier_solve`]. A Gaussian cost without covariance uses the plug-in
/// binomial variance.
pub fn estimate_ml(
    setting: &ExperimentSetting,
    dataset: &Dataset,
    kind: &CostKind,
    cfg: &SolverConfig,
) -> Result<EstimationResult> {
    let f = frequencies(dataset, true);
    match kind {
        CostKind::Gaussian(None) => {
            let cov = Covariance::plug_in_binomial(
                &f,
                dataset.num_projectors(),
                dataset.num_states(),
                dataset.repetitions(),
            );
            barrier_solve(setting, &f, &CostKind::Gaussian(Some(cov)), cfg)
        }
        _ => barrier_solve(setting, &f, kind, cfg),
    }
}

/// `G_q(θ) = q J(θ) - log det χ(θ)`; `+∞` on or beyond the boundary.
pub fn barrier_objective(theta: &[f64], q: f64, problem: &BarrierProblem) -> f64 {
    problem.value(theta, q)
}

/// Gradient of `G_q` for the binomial functional.
pub fn gradient_gq(theta: &[f64], q: f64, setting: &ExperimentSetting, f: &[f64]) -> Result<DVector<f64>> {
    BarrierProblem::new(setting, f, &CostKind::Binomial)?.gradient(theta, q)
}

/// Hessian of `G_q` for the binomial functional.
pub fn hessian_gq(theta: &[f64], q: f64, setting: &ExperimentSetting, f: &[f64]) -> Result<DMatrix<f64>> {
    BarrierProblem::new(setting, f, &CostKind::Binomial)?.hessian(theta, q)
}
