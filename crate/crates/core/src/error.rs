use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown record key {0}")]
    UnknownKey(String),

    #[error("field index {index} out of range for {field_count} fields")]
    FieldOutOfRange { index: usize, field_count: usize },

    #[error("histogram is empty")]
    EmptyHistogram,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: corrupt data: {message}")]
    Corrupt { path: PathBuf, message: String },

    #[error("checksum mismatch in {path}: expected {expected:016x}, found {found:016x}")]
    Checksum {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("restore target is not empty ({0} records)")]
    NotEmpty(usize),

    #[error("backend {backend}: {message}")]
    Backend { backend: String, message: String },

    #[error("missing dump for epoch {epoch} in {dir}")]
    MissingDump { epoch: u32, dir: PathBuf },

    #[error("trial {trial} has {found} epochs, expected {expected}")]
    RaggedTrials {
        trial: usize,
        expected: usize,
        found: usize,
    },

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("epoch {epoch}: {source}")]
    Epoch {
        epoch: u32,
        #[source]
        source: Box<Error>,
    },

    #[error("chart: {0}")]
    Chart(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_epoch(self, epoch: u32) -> Self {
        match self {
            e @ Error::Epoch { .. } => e,
            e => Error::Epoch {
                epoch,
                source: Box::new(e),
            },
        }
    }

    /// Innermost error, looking through epoch context.
    pub fn root(&self) -> &Error {
        match self {
            Error::Epoch { source, .. } => source.root(),
            e => e,
        }
    }
}
