use thiserror::Error;

/// Errors raised by the simulation and analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid room: {0}")]
    InvalidRoom(String),

    #[error("position {0:?} is not strictly inside the room")]
    OutsideRoom([f64; 3]),

    #[error("unsupported VRS count {0}; expected one of 6, 12, 24, 48, 96")]
    UnsupportedVrsCount(usize),

    #[error("unknown fixture '{0}'")]
    UnknownFixture(String),

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("source and receiver coincide (distance {0:.2e} m)")]
    Coincident(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("channel count mismatch: expected {expected}, got {actual}")]
    ChannelMismatch { expected: usize, actual: usize },

    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    SampleRateMismatch(f64, f64),

    #[error("signal too short: need at least {needed} samples, got {actual}")]
    SignalTooShort { needed: usize, actual: usize },

    #[error("unstable feedback delay network: {0}")]
    Unstable(String),

    #[error("insufficient decay range: {0}")]
    InsufficientDecay(String),

    #[error("room is fully absorbent in band {band}; reverberation time is zero")]
    FullyAbsorbent { band: usize },

    #[error("empty input: {0}")]
    Empty(String),
}

pub type Result<T> = std::result::Result<T, Error>;
