use thiserror::Error;

/// Errors raised by the engine, the losses and the training loop.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not conform.
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    /// A class index is outside `[0, classes)`.
    #[error("label {label} at position {position} is out of range for {classes} classes")]
    LabelOutOfRange {
        label: usize,
        position: usize,
        classes: usize,
    },

    /// A documented precondition was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Invalid configuration value.
    #[error("configuration error: {0}")]
    Config(String),

    /// A loss became NaN or infinite during training.
    #[error("non-finite loss at epoch {epoch}, step {step}: {components}")]
    NonFiniteLoss {
        epoch: usize,
        step: usize,
        components: String,
    },

    #[error(transparent)]
    Idx(#[from] crate::experiment::idx::IdxError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn dim_err(op: &'static str, detail: impl Into<String>) -> Error {
    Error::Dimension {
        op,
        detail: detail.into(),
    }
}

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
