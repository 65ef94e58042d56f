use crate::channel::{ThetaVector, TpParametrization};
use crate::error::{dims_err, Error, Result};
use crate::experiment::{build_t, ExperimentSetting};

use super::{EstimationResult, Method, SolverTrace};

/// Least-squares inversion `θ = T^# (f - offset)`. The estimate is trace
/// preserving by construction but need not be positive.
pub fn estimate_inversion(setting: &ExperimentSetting, f: &[f64]) -> Result<EstimationResult> {
    let t = build_t(setting);
    if f.len() != t.num_rows() {
        return Err(dims_err(t.num_rows(), f.len()));
    }
    let rank = t.rank();
    let required = t.matrix().ncols();
    if rank != required {
        return Err(Error::NotIdentifiable { rank, required });
    }
    let residual: Vec<f64> = f.iter().zip(t.offsets()).map(|(f, o)| f - o).collect();
    let theta = ThetaVector::new(setting.dim(), t.pseudo_solve(&residual))?;
    let chi = TpParametrization::new(setting.dim()).to_chi(&theta)?;
    Ok(EstimationResult::new(chi, theta, Method::Inversion, SolverTrace::default()))
}
