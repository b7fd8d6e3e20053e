use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("simulation diverged at t = {t:.4} s")]
    SimulationDiverged { t: f64 },

    #[error("controller fault: {0}")]
    ControllerFault(String),

    #[error("spectral leakage: signal of {samples} samples does not cover an integer number of periods at {frequency_hz} Hz")]
    SpectralLeakage { samples: usize, frequency_hz: f64 },

    #[error("transfer-function fit failed (condition estimate {condition:.3e})")]
    FitFailed { condition: f64 },

    #[error("model structure mismatch: {0}")]
    StructureMismatch(String),

    #[error("numerical conditioning failure (condition estimate {condition:.3e})")]
    NumericalConditioning { condition: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
