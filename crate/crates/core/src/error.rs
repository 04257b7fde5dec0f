use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Argument or configuration outside a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite input sample on input {input} at t = {time:e} s")]
    NonFiniteInput { input: usize, time: f64 },

    #[error("pwl parse error at line {line}: {message}")]
    PwlParse { line: usize, message: String },

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("predictor {predictor} has no training records (kind filter: {filter})")]
    EmptyTrainingView { predictor: String, filter: String },

    #[error("feature width mismatch: expected {expected}, got {got}")]
    WidthMismatch { expected: usize, got: usize },

    #[error("bundle format error: {0}")]
    BundleFormat(String),

    #[error("bundle version mismatch: file has {found}, expected {expected}")]
    BundleVersion { found: u32, expected: u32 },

    #[error("circuit fingerprint mismatch: bundle {bundle}, circuit {circuit}")]
    Fingerprint { bundle: String, circuit: String },

    #[error("engine contract violation for circuit {circuit}: {message}")]
    Contract { circuit: usize, message: String },

    #[error("characterization run {run_id} failed: {source}")]
    RunFailed {
        run_id: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path:?}: {source}")]
    Io {
        path: Option<PathBuf>,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl From<std::io::Error> for Error {
    fn from(source: std::io::Error) -> Self {
        Error::Io { path: None, source }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
