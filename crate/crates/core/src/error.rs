use std::path::PathBuf;

/// Errors surfaced by the outpainting stack.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("failed to decode image {path}: {reason}")]
    Decode { path: PathBuf, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid mask geometry: outer={outer}, inner={inner}: {reason}")]
    InvalidGeometry {
        outer: usize,
        inner: usize,
        reason: String,
    },

    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: String,
        expected: String,
        got: String,
    },

    #[error("non-finite activation in layer {layer}")]
    NonFinite { layer: String },

    #[error("non-finite loss {name} at step {step}")]
    NonFiniteLoss { name: String, step: u64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("checkpoint version mismatch: found {found}, expected {expected}")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("checkpoint integrity error: {0}")]
    CheckpointIntegrity(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn shape(context: impl Into<String>, expected: impl Into<String>, got: impl Into<String>) -> Self {
        Error::Shape {
            context: context.into(),
            expected: expected.into(),
            got: got.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
