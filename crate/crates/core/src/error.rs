use std::path::PathBuf;

/// Errors raised across the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty population")]
    EmptyPopulation,

    #[error("mixed population: {0}")]
    MixedPopulation(String),

    #[error("ragged population: {0}")]
    RaggedPopulation(String),

    #[error("ladder {ladder}: rung {rung} has no records")]
    MissingRung { ladder: String, rung: u32 },

    #[error("invalid ladder {ladder}: {reason}")]
    InvalidLadder { ladder: String, reason: String },

    #[error("duplicate entry: {0}")]
    DuplicateEntry(String),

    #[error("missing score for ladder {ladder}, rung {rung}, scorer {scorer}")]
    MissingScore {
        ladder: String,
        rung: u32,
        scorer: String,
    },

    #[error("no scorers supplied")]
    NoScorers,

    #[error("empty score list")]
    EmptyScores,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("unknown variant {0:?}")]
    UnknownVariant(String),

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("config mismatch: {0}")]
    ConfigMismatch(String),

    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: usize, detail: String },

    #[error("empty split: {0}")]
    EmptySplit(String),

    #[error("too few ladders: {0}")]
    TooFewLadders(String),

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("image {}: {msg}", path.display())]
    Image { path: PathBuf, msg: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A command finished its output but some items failed.
    #[error("{0}")]
    Incomplete(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
