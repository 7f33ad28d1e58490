use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("kernel cannot be realized in state-space form: {0}")]
    UnrealizableKernel(String),
    #[error("invalid periodic truncation order {0} (must be >= 1)")]
    InvalidTruncation(usize),
    #[error("realization is not stationary: {0}")]
    NonStationary(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("stiffness matrix is singular")]
    SingularStiffness,
    #[error("mass matrix is not symmetric positive definite")]
    IndefiniteMass,
    #[error("augmented model needs at least one latent input")]
    NoInputs,
    #[error("filter diverged at step {step}: {reason}")]
    DivergedFilter { step: usize, reason: String },
    #[error("matrix is ill-conditioned: {0}")]
    IllConditioned(String),
    #[error("hyperparameter optimization failed: {0}")]
    OptimizationFailed(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
