use thiserror::Error;

pub type Result<T> = std::result::Result<T, RelnError>;

#[derive(Debug, Error)]
pub enum RelnError {
    #[error("unknown algebra `{0}`")]
    UnknownAlgebra(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not in the span of the {algebra} basis (residual {residual:.3e})")]
    NotInSpan { algebra: String, residual: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("format error: {0}")]
    Format(String),

    #[error("checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    Checksum { stored: u32, computed: u32 },

    #[error("unsupported format version {0}")]
    Version(u32),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl RelnError {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        RelnError::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        RelnError::InvalidArgument(msg.into())
    }
}
