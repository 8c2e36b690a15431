use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient top-M width: top_k {k} exceeds the {m} entries carried by the row")]
    InsufficientTopM { k: usize, m: usize },

    #[error("unextractable: no finite n (p_z == 0)")]
    Unextractable,

    #[error("query budget overflows u64 (p_z = {p_z:e}, p = {p})")]
    QueryBudgetOverflow { p_z: f64, p: f64 },

    #[error("corpus has {available} documents but {requested} were requested")]
    CorpusTooSmall { requested: usize, available: usize },

    #[error("document {doc_id:?} at char offset {offset}: {source}")]
    AtOffset {
        doc_id: String,
        offset: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("token id {token} outside vocabulary of size {vocab_size}")]
    TokenOutOfRange { token: u32, vocab_size: usize },

    #[error("context of {len} tokens exceeds backend maximum of {limit}")]
    ContextTooLong { len: usize, limit: usize },

    #[error("backend error{}: {message}", .status.map(|s| format!(" (HTTP {s})")).unwrap_or_default())]
    Backend { status: Option<u16>, message: String },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("span [{start}, {end}) outside document of {char_len} chars")]
    SpanOutOfBounds { start: usize, end: usize, char_len: usize },

    #[error("spans overlap at char {at}")]
    OverlappingSpans { at: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn is_backend(&self) -> bool {
        match self {
            Error::Backend { .. } | Error::Protocol(_) | Error::ContextTooLong { .. } => true,
            Error::AtOffset { source, .. } => source.is_backend(),
            _ => false,
        }
    }
}
