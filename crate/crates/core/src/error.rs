use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dim { expected: usize, got: usize },
    #[error("function has {got} values but measure has {expected} atoms")]
    Binding { expected: usize, got: usize },
    #[error("scale {r} is below the atom resolution {h}; atoms break the power bound there")]
    BelowResolution { r: f64, h: f64 },
    #[error("undefined: {0}")]
    Undefined(String),
    #[error("search exhausted: {0}")]
    Exhausted(String),
    #[error("decomposition failed: {0}")]
    Decomposition(String),
    #[error("assumption violated: {0}")]
    Assumption(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
