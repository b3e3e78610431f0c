use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("ordering is not a permutation of 0..{0}")]
    InvalidPermutation(usize),
    #[error("Zipf exponent must be finite and non-negative, got {0}")]
    InvalidExponent(f64),
    #[error("invalid popularity profile: {0}")]
    InvalidProfile(String),
    #[error("invalid Markov chain: {0}")]
    InvalidChain(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("request batch is empty")]
    EmptyBatch,
    #[error("cache capacity M={m} must satisfy 1 <= M <= F={f}")]
    InvalidCapacity { f: usize, m: usize },
    #[error("invalid cache action: {0}")]
    InvalidAction(String),
    #[error("action space C({f},{m}) is too large to enumerate")]
    ActionSpaceTooLarge { f: usize, m: usize },
    #[error("index {index} out of range 0..{len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("policy evaluation system is singular")]
    SingularSystem,
    #[error("policy iteration did not settle within {0} iterations")]
    NotConverged(usize),
    #[error("reference Q-table has zero norm")]
    ZeroNorm,
    #[error("learner diverged at slot {slot}: {detail}")]
    Divergence { slot: usize, detail: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
