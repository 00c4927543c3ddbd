use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A raw log line that matched no capture or carried a malformed field.
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("config: {0}")]
    Config(String),

    #[error("duplicate AP id `{0}` in AP map")]
    DuplicateAp(String),

    #[error("no device with association events in the selection horizon")]
    NoPrimaryDevice,

    #[error("series flagged absent; refusing to sample")]
    AbsentSeries,

    #[error("empty sample list")]
    EmptySamples,

    #[error("domain: {0}")]
    Domain(String),

    #[error("prior unavailable: {0}")]
    PriorUnavailable(String),

    #[error("exact enumeration does not support the {0} model")]
    UnsupportedModel(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("predictions missing ground truth for: {0}")]
    MissingTruth(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("noise window outside the day: {0}")]
    NoiseWindow(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
