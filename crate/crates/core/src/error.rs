use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("{what}: value {value} does not fit a {bits}-bit signed operand")]
    OperandRange { what: String, value: i64, bits: u32 },

    #[error("accumulator overflow at (k={k}, x={x}, y={y}): {value} exceeds the 24-bit range")]
    AccumulatorOverflow { k: usize, x: usize, y: usize, value: i64 },

    #[error("empty tensor")]
    EmptyTensor,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed compressed block: {0}")]
    MalformedBlock(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("network descriptor: {0}")]
    Descriptor(String),

    #[error(
        "oracle mismatch in layer `{layer}` at (k={k}, x={x}, y={y}): simulated {simulated}, reference {reference}"
    )]
    OracleMismatch {
        layer: String,
        k: usize,
        x: usize,
        y: usize,
        simulated: i32,
        reference: i32,
    },

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, err: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            message: err.to_string(),
        }
    }
}
