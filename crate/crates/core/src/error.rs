use thiserror::Error;

use crate::estimators::CenteringRecord;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("matrix is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("not a projector (max deviation of P^2 - P or P - P^dagger: {0:.3e})")]
    NotProjector(f64),

    #[error("not a pure density matrix: {0}")]
    NotPureState(String),

    #[error("Kraus set is not trace preserving (max |sum K^dagger K - I| = {0:.3e})")]
    KrausNotTracePreserving(f64),

    #[error("chi matrix is not trace preserving (max |tr_1(chi) - I| = {0:.3e})")]
    NotTracePreserving(f64),

    #[error("chi matrix is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPositive(f64),

    #[error("theta vector has length {got}, expected {expected}")]
    ThetaLength { expected: usize, got: usize },

    #[error("setting is not identifiable: rank(T) = {rank}, need {required}")]
    NotIdentifiable { rank: usize, required: usize },

    #[error("no identifiable setting found after {0} attempts")]
    SettingSearchExhausted(usize),

    #[error("point is outside the interior of the feasible set")]
    Infeasible,

    #[error("covariance matrix is not positive definite")]
    SingularCovariance,

    #[error("Newton centering did not converge in {iters} iterations (|grad| = {grad_norm:.3e})")]
    NewtonMaxIters {
        iters: usize,
        grad_norm: f64,
        record: Box<CenteringRecord>,
    },

    #[error("line search failed to find an admissible step (|grad| = {grad_norm:.3e})")]
    LineSearchFailed { grad_norm: f64 },

    #[error("barrier method exceeded {0} centering steps")]
    MaxCenteringSteps(usize),

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dims_err(expected: impl ToString, got: impl ToString) -> Error {
    Error::DimensionMismatch {
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
