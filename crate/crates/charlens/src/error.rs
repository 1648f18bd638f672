use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("vocabulary format error: {0}")]
    VocabFormat(String),

    #[error("no token covers byte 0x{0:02X}")]
    ByteCoverage(u8),

    #[error("span alignment error: {0}")]
    Alignment(String),

    #[error("weight file format error: {0}")]
    WeightFormat(String),

    #[error("tensor '{tensor}' failed validation: {reason}")]
    WeightValidation { tensor: String, reason: String },

    #[error("token id {id} out of range for vocab size {vocab_size}")]
    TokenOutOfRange { id: u32, vocab_size: usize },

    #[error("sequence length {len} exceeds max_seq {max}")]
    SequenceTooLong { len: usize, max: usize },

    #[error("layer {layer} out of range (max {max})")]
    LayerOutOfRange { layer: usize, max: usize },

    #[error("k={k} invalid for vocab size {vocab_size}")]
    KOutOfRange { k: usize, vocab_size: usize },

    #[error("output embedding for token {token} has zero norm")]
    ZeroDirection { token: u32 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("empty target set")]
    EmptyTargets,

    #[error("attention row fully masked at layer {layer}, head {head}, position {row}")]
    FullyMaskedRow { layer: usize, head: usize, row: usize },

    #[error("required capture missing: {0}")]
    MissingCapture(&'static str),

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("invalid model config: {0}")]
    InvalidConfig(String),

    #[error("dataset error at line {line}: {msg}")]
    Dataset { line: usize, msg: String },

    #[error("option label {0:?} does not map to a single vocabulary token")]
    LabelToken(String),
}

impl Error {
    /// Process exit code for the CLI: 2 for I/O failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
