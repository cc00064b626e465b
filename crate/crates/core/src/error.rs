use std::path::PathBuf;

/// Crate-wide error type. Tensor shape violations are programmer errors and
/// panic instead; everything that can go wrong at runtime lands here.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed Y4M header in {path}: {detail}")]
    MalformedY4m { path: PathBuf, detail: String },

    #[error("unsupported chroma layout {found:?} (expected C420 or C444)")]
    UnsupportedLayout { found: String },

    #[error("truncated file {path}: expected {expected} bytes, found {found}")]
    TruncatedFile {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("encoder executable `{name}` not found; install it or set the executable path in the [codec] config section (or the SCALEDOWN_ENCODER environment variable)")]
    EncoderMissing { name: String },

    #[error("decoder executable `{name}` not found; install it or set the executable path in the [codec] config section (or the SCALEDOWN_DECODER environment variable)")]
    DecoderMissing { name: String },

    #[error("codec subprocess `{name}` failed with status {status}: {stderr}")]
    CodecSubprocess {
        name: String,
        status: String,
        stderr: String,
    },

    #[error("codec output mismatch: {detail}")]
    CodecMismatch { detail: String },

    #[error("corrupt checkpoint {path}: {detail}")]
    CorruptCheckpoint { path: PathBuf, detail: String },

    #[error("checkpoint {path} has format version {found}, this build reads up to {supported}")]
    CheckpointVersion {
        path: PathBuf,
        found: u32,
        supported: u32,
    },

    #[error("degenerate rate-proxy calibration: {detail}")]
    DegenerateFit { detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training aborted at step {step}: non-finite loss ({detail})")]
    NanLoss { step: usize, detail: String },

    #[error("training aborted at step {step}: codec failure: {source}")]
    CodecDuringTraining {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("strategy `{strategy}` requires a codec backend but none is configured")]
    CodecRequired { strategy: String },

    #[error("{0}")]
    Other(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
