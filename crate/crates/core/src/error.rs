use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("Newton iteration diverged at step {step} (residual {residual:e})")]
    NewtonDivergence { step: usize, residual: f64 },

    #[error("Picard iteration diverged in window starting at step {window_start} after {sweeps} sweeps (distance {distance:e})")]
    PicardDivergence {
        window_start: usize,
        sweeps: usize,
        distance: f64,
    },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Io(_) | Error::Domain(_) | Error::Precondition(_) => 1,
            _ => 2,
        }
    }
}
