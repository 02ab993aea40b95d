//! Error type shared by every module in the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Two tensors that must agree in shape do not.
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// A tensor has the wrong rank for the requested operation.
    #[error("{op} expects a rank-{expected} tensor, got shape {shape:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },

    /// Convolution / pooling geometry does not produce a valid output extent.
    #[error("geometry error: {0}")]
    Geometry(String),

    /// A layer was driven out of protocol (e.g. backward without a cached forward).
    #[error("state error: {0}")]
    State(String),

    /// An invalid network or run configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Bad dataset contents (labels out of range, empty set, ...).
    #[error("data error: {0}")]
    Data(String),

    /// A file does not follow the expected binary layout.
    #[error("format error: {0}")]
    Format(String),

    /// A numeric check failed (non-finite values, gradient check above tolerance).
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Dimension {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }
}
