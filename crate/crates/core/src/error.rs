use thiserror::Error;

/// Errors raised by the numerical pipeline and the metric-file front end.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("tangent vector is zero")]
    ZeroVector,

    #[error("metric is not strongly convex: eigenvalues of g in [{min_eig:e}, {max_eig:e}]")]
    NonConvex { min_eig: f64, max_eig: f64 },

    #[error("operation requires a {expected} metric family")]
    WrongFamily { expected: &'static str },

    #[error("matrix is not symmetric positive definite")]
    NotSpd,

    #[error("finite-difference stencil around {point:?} leaves the chart")]
    StencilOutOfDomain { point: Vec<f64> },

    #[error("reference direction is a vertical contact point")]
    VerticalContact,

    #[error("constraint system is inconsistent (residual {residual:e})")]
    Inconsistent { residual: f64 },

    #[error("singular value decomposition did not converge")]
    SvdNoConvergence,

    #[error("augmented chain system is inconsistent (residual {residual:e})")]
    InfeasibleStep { residual: f64 },

    #[error("map is not a symmetry of the metric: {reason}")]
    NotASymmetry { reason: String },

    #[error("curve leaves the chart at {point:?}")]
    CurveLeavesChart { point: Vec<f64> },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("unsupported dimension {0}")]
    UnsupportedDimension(usize),

    #[error("invalid metric: {0}")]
    InvalidMetric(String),

    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unknown metric family `{0}`")]
    UnknownFamily(String),
}

pub type Result<T> = std::result::Result<T, Error>;
