use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid truncation: n_max must be at least 1, got {0}")]
    InvalidTruncation(usize),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("rectification undefined: no transport in either direction")]
    UndefinedRectification,

    #[error("transport efficiency undefined: no emission from either site")]
    UndefinedEfficiency,

    #[error("g2 undefined: site occupation {occupation:e} is below the dark threshold")]
    UndefinedG2 { occupation: f64 },

    #[error("steady state is not unique: Liouvillian null space has dimension {nullity}")]
    DegenerateSteadyState { nullity: usize },

    #[error("steady-state solve did not converge: residual {residual:e} exceeds {tolerance:e}")]
    SteadyStateConvergence { residual: f64, tolerance: f64 },

    #[error("state is not positive semidefinite: smallest eigenvalue {min_eigenvalue:e}")]
    NonPhysicalState { min_eigenvalue: f64 },

    #[error(
        "step size underflow at t = {time} (h = {step:e}); the problem is stiff, \
         try a smaller J or detuning, or a tighter truncation"
    )]
    Stiffness { time: f64, step: f64 },

    #[error("integration failed at t = {time}: {reason}")]
    IntegrationFailure { time: f64, reason: String },

    #[error("relaxation incomplete at t = {horizon}: residual excitation {residual:e}")]
    IncompleteRelaxation { horizon: f64, residual: f64 },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("frequency optimization failed: objective undefined on the whole coarse grid")]
    OptimizationFailure,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
