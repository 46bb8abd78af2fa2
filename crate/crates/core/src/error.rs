use thiserror::Error;

/// Errors raised anywhere in the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    /// A declared invariant of the game specification does not hold.
    #[error("validation error: {invariant} at {location}")]
    Validation { invariant: String, location: String },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A lattice, support or prescription set grew beyond its configured cap.
    #[error("capacity exceeded: {what} needs {needed} entries, cap is {cap}")]
    Capacity {
        what: String,
        needed: u128,
        cap: u128,
    },

    #[error("no pure equilibrium at stage {stage}, z = {z}")]
    NoPureEquilibrium { stage: usize, z: String },

    #[error("no equilibrium found with supports of size at most {0}")]
    EquilibriumNotFound(usize),

    #[error("empty candidate list")]
    Empty,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(invariant: &str, location: impl Into<String>) -> Self {
        Error::Validation {
            invariant: invariant.to_string(),
            location: location.into(),
        }
    }

    pub(crate) fn capacity(what: impl Into<String>, needed: u128, cap: u128) -> Self {
        Error::Capacity {
            what: what.into(),
            needed,
            cap,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
