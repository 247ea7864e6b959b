use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("non-finite value in {0}")]
    NumericFault(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("label out of range: {0}")]
    Labeling(String),

    #[error("degenerate batch statistics: {0}")]
    DegenerateStatistics(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("internal consistency: {0}")]
    Internal(String),

    #[error("dataset structure: {0}")]
    DatasetStructure(String),

    #[error("cannot stratify class '{class}' with {count} sample(s); at least 3 are required")]
    Stratification { class: String, count: usize },

    #[error("i/o error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot decode image {}: {reason}", path.display())]
    Decode { path: PathBuf, reason: String },

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("incompatible inputs: {0}")]
    Compatibility(String),

    #[error("evaluation: {0}")]
    Evaluation(String),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },
}

impl Error {
    pub fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable category, printed by the CLI on failure.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "dimension",
            Error::Precondition(_) => "precondition",
            Error::NumericFault(_) => "numeric-fault",
            Error::Config(_) => "config",
            Error::Labeling(_) => "labeling",
            Error::DegenerateStatistics(_) => "degenerate-statistics",
            Error::State(_) => "state",
            Error::Internal(_) => "internal",
            Error::DatasetStructure(_) => "dataset-structure",
            Error::Stratification { .. } => "stratification",
            Error::Io { .. } => "io",
            Error::Decode { .. } => "decode",
            Error::CorruptCheckpoint(_) => "corrupt-checkpoint",
            Error::Compatibility(_) => "compatibility",
            Error::Evaluation(_) => "evaluation",
            Error::Format { .. } => "format",
        }
    }
}
