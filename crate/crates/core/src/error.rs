use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("layout mismatch between operands")]
    LayoutMismatch,

    #[error("invalid slot: {0}")]
    InvalidSlot(String),

    #[error("operator is not Hermitian (residual {residual:e})")]
    NotHermitian { residual: f64 },

    #[error("eigensolver failed: {0}")]
    Solver(String),

    #[error("composite dimension {dim} exceeds ceiling {ceiling}")]
    DimensionCeiling { dim: usize, ceiling: usize },

    #[error("step size {dt} exceeds stability bound {bound}")]
    StepSize { dt: f64, bound: f64 },

    #[error("basis mismatch between state and generator")]
    BasisMismatch,

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("value {value} outside table range [{lo}, {hi}]")]
    OutOfTable { value: f64, lo: f64, hi: f64 },
}
