use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("category violates {0}")]
    InvalidCategory(String),

    #[error("degenerate category: {0}")]
    DegenerateCategory(String),

    #[error("category admits no braiding (best hexagon residual {best_residual:.3e})")]
    NotBraided { best_residual: f64 },

    #[error("hexagon solver failed to converge on every seed (best residual {best_residual:.3e})")]
    SolverFailure { best_residual: f64 },

    #[error("inconsistent braiding: |theta[{label}]| = {modulus}")]
    InconsistentBraiding { label: usize, modulus: f64 },

    #[error("S-matrix is singular (condition number {condition:.3e})")]
    NotModular { condition: f64 },

    #[error("flux {0} is not realizable on this ring")]
    FluxNotRealizable(String),

    #[error("tube representation is not faithful (residual {residual:.3e} at L = {length})")]
    NotFaithful { residual: f64, length: usize },

    #[error("structure constants disagree between probe lengths (max deviation {deviation:.3e})")]
    Convention { deviation: f64 },

    #[error("tube algebra is not semisimple: {0}")]
    Semisimplicity(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("eigensolver did not converge (attained residual {residual:.3e})")]
    Eigensolver { residual: f64 },

    #[error("basis mismatch: {0}")]
    BasisMismatch(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
