//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("kernel side must be odd, got {0}")]
    EvenKernelSide(usize),

    #[error("structuring element support is empty")]
    EmptySupport,

    #[error("domain: {0}")]
    Domain(String),

    #[error("requires rescaled positive input")]
    NonPositiveInput,

    #[error("kernel weights must be strictly positive")]
    NonPositiveWeight,

    #[error("kernel weights must be nonnegative")]
    NegativeWeight,

    #[error("layer kind mismatch: expected {expected}, got {actual}")]
    LayerKindMismatch {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("bad idx magic: expected {expected:#010x}, found {found:#010x}")]
    IdxBadMagic { expected: u32, found: u32 },

    #[error("truncated idx payload: needed {needed} bytes, found {found}")]
    IdxTruncated { needed: usize, found: usize },

    #[error("idx dimension mismatch: {0}")]
    IdxDimensions(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
