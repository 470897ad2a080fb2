use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("alphabet size mismatch: {0} vs {1}")]
    AlphabetMismatch(usize, usize),

    #[error("support mismatch at symbol {0}: p > 0 where q = 0")]
    SupportMismatch(usize),

    #[error("chain is not ergodic: {0}")]
    NotErgodic(String),

    #[error("stationary distribution did not converge within {0} iterations")]
    NoConvergence(usize),

    #[error("mixing time exceeds cap of {0} steps")]
    MixingCapExceeded(usize),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("symbol {symbol} outside alphabet of size {size}")]
    UnknownSymbol { symbol: u32, size: usize },

    #[error("bit stream truncated after {consumed} bits while decoding symbol {decoded}")]
    Truncated { decoded: usize, consumed: usize },

    #[error("codeword length {0} exceeds the 64-bit limit")]
    CodeTooLong(usize),

    #[error("transform matrix is infeasible: {0}")]
    Infeasible(String),

    #[error("reconstruction data inconsistent: {0}")]
    Inconsistent(String),

    #[error("corrupt stream: {0}")]
    Corrupt(String),

    #[error("stream exhausted: {0}")]
    Exhausted(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("container format: {0}")]
    Format(String),

    #[error("model hash does not match the container header")]
    HashMismatch,

    #[error("key check failed: wrong key or nonce")]
    BadKey,

    #[error("unknown cipher id {0}")]
    UnknownCipher(u16),

    #[error("frame index {index} out of range (container has {count} frames)")]
    FrameOutOfRange { index: usize, count: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }

    /// Process exit code used by the command-line tool: 2 for malformed
    /// input, 3 for key or model-hash mismatches, 4 for IO, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. }
            | Error::Format(_)
            | Error::Corrupt(_)
            | Error::Truncated { .. }
            | Error::Inconsistent(_)
            | Error::LengthMismatch(_)
            | Error::Exhausted(_)
            | Error::InvalidModel(_) => 2,
            Error::HashMismatch | Error::BadKey | Error::UnknownCipher(_) => 3,
            Error::Io(_) => 4,
            _ => 1,
        }
    }
}
