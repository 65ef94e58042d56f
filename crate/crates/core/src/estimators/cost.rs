//! Likelihood functionals of θ through the affine map `p = T θ + offset`.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{dims_err, Error, Result};
use crate::experiment::{build_t, DesignMatrix, ExperimentSetting};

/// Noise covariance for the Gaussian functional, one `M × M` block per state.
#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    /// The same Σ for every probe state.
    Shared(DMatrix<f64>),
    /// A separate Σ_k per probe state.
    PerState(Vec<DMatrix<f64>>),
}

impl Covariance {
    /// Plug-in binomial variance `max(f(1-f)/N, 1/(4N²))` on the diagonal.
    pub fn plug_in_binomial(f: &[f64], num_projectors: usize, num_states: usize, repetitions: u64) -> Self {
        let n = repetitions as f64;
        let floor = 0.25 / (n * n);
        let blocks = (0..num_states)
            .map(|k| {
                DMatrix::from_fn(num_projectors, num_projectors, |a, b| {
                    if a == b {
                        let fj = f[a * num_states + k];
                        (fj * (1.0 - fj) / n).max(floor)
                    } else {
                        0.0
                    }
                })
            })
            .collect();
        Self::PerState(blocks)
    }

    fn inverses(&self, num_projectors: usize, num_states: usize) -> Result<Vec<DMatrix<f64>>> {
        let invert = |s: &DMatrix<f64>| -> Result<DMatrix<f64>> {
            if s.shape() != (num_projectors, num_projectors) {
                return Err(dims_err(
                    format!("{num_projectors}x{num_projectors}"),
                    format!("{:?}", s.shape()),
                ));
            }
            let sym = (s + s.transpose()) * 0.5;
            Cholesky::new(sym)
                .map(|c| c.inverse())
                .ok_or(Error::SingularCovariance)
        };
        match self {
            Self::Shared(s) => Ok(vec![invert(s)?; num_states]),
            Self::PerState(v) => {
                if v.len() != num_states {
                    return Err(dims_err(num_states, v.len()));
                }
                v.iter().map(invert).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CostKind {
    Binomial,
    /// `None` selects [`Covariance::plug_in_binomial`] when the sample size is known.
    Gaussian(Option<Covariance>),
}

#[derive(Debug, Clone)]
enum Model {
    Binomial,
    Gaussian { inv_cov: Vec<DMatrix<f64>> },
}

/// A likelihood functional bound to a setting and observed frequencies.
#[derive(Debug, Clone)]
pub struct Cost {
    design: DesignMatrix,
    f: Vec<f64>,
    model: Model,
}

impl Cost {
    pub fn binomial(setting: &ExperimentSetting, f: &[f64]) -> Result<Self> {
        Self::from_design(build_t(setting), f, Model::Binomial)
    }

    pub fn gaussian(setting: &ExperimentSetting, f: &[f64], covariance: &Covariance) -> Result<Self> {
        let inv_cov = covariance.inverses(setting.num_projectors(), setting.num_states())?;
        Self::from_design(build_t(setting), f, Model::Gaussian { inv_cov })
    }

    pub fn new(setting: &ExperimentSetting, f: &[f64], kind: &CostKind) -> Result<Self> {
        match kind {
            CostKind::Binomial => Self::binomial(setting, f),
            CostKind::Gaussian(Some(cov)) => Self::gaussian(setting, f, cov),
            CostKind::Gaussian(None) => Err(Error::Invalid(
                "Gaussian cost needs a covariance; estimate_ml supplies the plug-in default".into(),
            )),
        }
    }

    fn from_design(design: DesignMatrix, f: &[f64], model: Model) -> Result<Self> {
        if f.len() != design.num_rows() {
            return Err(dims_err(design.num_rows(), f.len()));
        }
        Ok(Self {
            design,
            f: f.to_vec(),
            model,
        })
    }

    pub fn design(&self) -> &DesignMatrix {
        &self.design
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.f
    }

    pub fn is_binomial(&self) -> bool {
        matches!(self.model, Model::Binomial)
    }

    pub fn num_params(&self) -> usize {
        self.design.matrix().ncols()
    }

    pub fn probabilities(&self, theta: &[f64]) -> Vec<f64> {
        self.design.probabilities(theta)
    }

    /// Whether the cost is finite at these probabilities.
    pub fn admissible(&self, p: &[f64]) -> bool {
        match self.model {
            Model::Binomial => p.iter().all(|&x| x > 0.0 && x < 1.0),
            Model::Gaussian { .. } => true,
        }
    }

    /// Cost value; `+∞` outside the domain.
    pub fn value(&self, theta: &[f64]) -> f64 {
        let p = self.probabilities(theta);
        self.value_at(&p)
    }

    pub(crate) fn value_at(&self, p: &[f64]) -> f64 {
        if !self.admissible(p) {
            return f64::INFINITY;
        }
        match &self.model {
            Model::Binomial => -p
                .iter()
                .zip(&self.f)
                .map(|(&p, &f)| xlogy(f, p) + xlogy(1.0 - f, 1.0 - p))
                .sum::<f64>(),
            Model::Gaussian { inv_cov } => {
                let r: Vec<f64> = self.f.iter().zip(p).map(|(f, p)| f - p).collect();
                self.per_state(&r)
                    .zip(inv_cov)
                    .map(|(rk, w)| rk.dot(&(w * &rk)))
                    .sum()
            }
        }
    }

    /// `value(θ + step) - value(θ)` evaluated without cancellation.
    pub(crate) fn difference(&self, p: &[f64], dp: &[f64]) -> f64 {
        match &self.model {
            Model::Binomial => -p
                .iter()
                .zip(dp)
                .zip(&self.f)
                .map(|((&p, &dp), &f)| f * (dp / p).ln_1p() + (1.0 - f) * (-dp / (1.0 - p)).ln_1p())
                .sum::<f64>(),
            Model::Gaussian { inv_cov } => {
                // (r - dp)ᵀ W (r - dp) - rᵀ W r = dpᵀ W (dp - 2 r)
                let r: Vec<f64> = self.f.iter().zip(p).map(|(f, p)| f - p).collect();
                let shifted: Vec<f64> = dp.iter().zip(&r).map(|(d, r)| d - 2.0 * r).collect();
                self.per_state(dp)
                    .zip(self.per_state(&shifted))
                    .zip(inv_cov)
                    .map(|((a, b), w)| a.dot(&(w * b)))
                    .sum()
            }
        }
    }

    /// Lower bound `-Σ f log f + (1-f) log(1-f)` attained when `p = f`.
    pub fn entropy_bound(&self) -> f64 {
        match self.model {
            Model::Binomial => -self
                .f
                .iter()
                .map(|&f| xlogy(f, f) + xlogy(1.0 - f, 1.0 - f))
                .sum::<f64>(),
            Model::Gaussian { .. } => 0.0,
        }
    }

    /// Per-row weights `∂J/∂p` and `∂²J/∂p²` (binomial), used by gradient and Hessian.
    fn binomial_weights(&self, p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let first = p
            .iter()
            .zip(&self.f)
            .map(|(&p, &f)| (p - f) / (p * (1.0 - p)))
            .collect();
        let second = p
            .iter()
            .zip(&self.f)
            .map(|(&p, &f)| (1.0 - f) / ((1.0 - p) * (1.0 - p)) + f / (p * p))
            .collect();
        (first, second)
    }

    pub fn gradient(&self, theta: &[f64]) -> Result<DVector<f64>> {
        let p = self.probabilities(theta);
        if !self.admissible(&p) {
            return Err(Error::Infeasible);
        }
        let t = self.design.matrix();
        match &self.model {
            Model::Binomial => {
                let (w, _) = self.binomial_weights(&p);
                Ok(t.tr_mul(&DVector::from_vec(w)))
            }
            Model::Gaussian { inv_cov } => {
                let r: Vec<f64> = self.f.iter().zip(&p).map(|(f, p)| f - p).collect();
                // ∂J/∂p_jk = -2 (W_k r_k)_j
                let mut dp = vec![0.0; r.len()];
                let l = self.design.num_states();
                for (k, (rk, w)) in self.per_state(&r).zip(inv_cov).enumerate() {
                    let wr = w * rk;
                    for (j, v) in wr.iter().enumerate() {
                        dp[j * l + k] = -2.0 * v;
                    }
                }
                Ok(t.tr_mul(&DVector::from_vec(dp)))
            }
        }
    }

    pub fn hessian(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        let p = self.probabilities(theta);
        if !self.admissible(&p) {
            return Err(Error::Infeasible);
        }
        let t = self.design.matrix();
        match &self.model {
            Model::Binomial => {
                let (_, w) = self.binomial_weights(&p);
                let mut scaled = t.clone();
                for (mut row, &wi) in scaled.row_iter_mut().zip(&w) {
                    row *= wi;
                }
                Ok(t.tr_mul(&scaled))
            }
            Model::Gaussian { inv_cov } => {
                let l = self.design.num_states();
                let m = self.design.num_projectors();
                let n = t.ncols();
                let mut h = DMatrix::zeros(n, n);
                for (k, w) in inv_cov.iter().enumerate() {
                    let tk = DMatrix::from_fn(m, n, |j, s| t[(j * l + k, s)]);
                    h += (tk.transpose() * w * &tk) * 2.0;
                }
                Ok(h)
            }
        }
    }

    /// Splits a row-ordered vector into per-state vectors over `j`.
    fn per_state<'a>(&'a self, v: &'a [f64]) -> impl Iterator<Item = DVector<f64>> + 'a {
        let l = self.design.num_states();
        let m = self.design.num_projectors();
        (0..l).map(move |k| DVector::from_fn(m, |j, _| v[j * l + k]))
    }
}

fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

/// Binomial negative log-likelihood (up to a constant); `+∞` on the boundary.
pub fn binomial_cost(theta: &[f64], setting: &ExperimentSetting, f: &[f64]) -> Result<f64> {
    Ok(Cost::binomial(setting, f)?.value(theta))
}

/// `Σ_k (f_k - p_k)ᵀ Σ⁻¹ (f_k - p_k)` with a shared `M × M` covariance.
pub fn gaussian_cost(
    theta: &[f64],
    setting: &ExperimentSetting,
    f: &[f64],
    sigma: &DMatrix<f64>,
) -> Result<f64> {
    Ok(Cost::gaussian(setting, f, &Covariance::Shared(sigma.clone()))?.value(theta))
}
