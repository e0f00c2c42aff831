use thiserror::Error;

#[derive(Debug, Error)]
pub enum SdfeError {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid economy: {0}")]
    Invalid(String),

    #[error("index {index} out of range (len {len})")]
    InvalidIndex { index: usize, len: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("singular system (condition estimate {cond:.3e})")]
    SingularSystem { cond: f64 },

    #[error("degenerate best reply: {0}")]
    DegenerateReply(String),

    #[error("not converged after {iterations} iterations (last step {step:.3e})")]
    NotConverged { iterations: usize, step: f64 },

    #[error("invalid partition for firm {firm}: {reason}")]
    PartitionInvalid { firm: usize, reason: String },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("no positive root: {0}")]
    NoPositiveRoot(String),

    #[error("degenerate chain: {0}")]
    DegenerateChain(String),

    #[error("threshold not bracketed for {regime} in [{lo}, {hi}]")]
    ThresholdNotBracketed { regime: String, lo: f64, hi: f64 },

    #[error("matrix not positive definite: {0}")]
    NotPositiveDefinite(String),
}

pub type Result<T> = std::result::Result<T, SdfeError>;
