use alloc::string::String;

/// Errors produced by the numerical pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("input too short: {0}")]
    EmptyInput(String),
    #[error("channel {channel} is degenerate (zero variance)")]
    DegenerateChannel { channel: usize },
    #[error("upper band edge {hi} Hz violates Nyquist limit {nyquist} Hz")]
    Nyquist { hi: f64, nyquist: f64 },
    #[error("filter design failed: {0}")]
    Design(String),
    #[error("sampling-rate mismatch: expected {expected} Hz, found {found} Hz")]
    FsMismatch { expected: f64, found: f64 },
    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),
    #[error("insufficient peaks: found {found}, need at least {needed}")]
    InsufficientPeaks { found: usize, needed: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}: {what} is not finite")]
    Diverged { epoch: usize, what: String },
}

pub type Result<T> = core::result::Result<T, Error>;
