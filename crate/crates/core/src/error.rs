use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid sequence {seq}: {reason}")]
    InvalidSequence { seq: String, reason: String },

    #[error("invalid gold annotations: {0}")]
    InvalidGold(String),

    #[error("span {0} lies outside its sequence")]
    SpanOutOfRange(String),

    #[error("sequence {0} is not in the embedding store")]
    MissingSequence(String),

    #[error("degenerate vector: {0}")]
    Degenerate(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("contrastive batch needs at least two distinct labels")]
    TooFewLabels,

    #[error("candidate probability underflowed to zero for product {product}, span {span}")]
    ZeroProbability { product: usize, span: usize },
}

impl Error {
    /// Errors caused by malformed or inconsistent inputs, as opposed to
    /// failures while computing.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidSequence { .. }
                | Error::InvalidGold(_)
                | Error::SpanOutOfRange(_)
                | Error::MissingSequence(_)
                | Error::DimensionMismatch { .. }
                | Error::InvalidConfig(_)
        )
    }
}
