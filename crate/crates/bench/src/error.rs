use thiserror::Error;

pub type Result<T> = std::result::Result<T, BenchError>;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Core(#[from] gplfm_core::Error),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("band upper edge {band} Hz exceeds the Nyquist frequency {nyquist} Hz")]
    BandExceedsNyquist { band: f64, nyquist: f64 },
    #[error("reference signal has zero norm")]
    ZeroReference,
    #[error("window too short: {0}")]
    WindowTooShort(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("scenario `{scenario}`: {source}")]
    Scenario {
        scenario: String,
        #[source]
        source: Box<BenchError>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl BenchError {
    /// Process exit code for the error category.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) | BenchError::BandExceedsNyquist { .. } => 2,
            BenchError::Io(_) => 3,
            BenchError::Core(gplfm_core::Error::Io(_)) => 3,
            BenchError::Core(gplfm_core::Error::Parse(_)) => 2,
            BenchError::Core(gplfm_core::Error::DivergedFilter { .. })
            | BenchError::Core(gplfm_core::Error::OptimizationFailed(_))
            | BenchError::Core(gplfm_core::Error::IllConditioned(_)) => 5,
            BenchError::Core(_) => 4,
            BenchError::ZeroReference | BenchError::WindowTooShort(_) | BenchError::LengthMismatch(..) => 6,
            BenchError::Scenario { source, .. } => source.exit_code(),
        }
    }

    pub fn in_scenario(self, name: &str) -> BenchError {
        BenchError::Scenario { scenario: name.to_string(), source: Box::new(self) }
    }
}
