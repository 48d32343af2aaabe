use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown catalog id `{0}`")]
    UnknownCatalogId(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("orbit diverged at step {step} (member {member}): state {state:?}")]
    Divergence {
        step: usize,
        member: usize,
        state: Vec<f64>,
    },

    #[error("empty sample set")]
    EmptySamples,

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
