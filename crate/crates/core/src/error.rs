use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vector norm {norm:e} is at or below the normalization floor")]
    ZeroVector { norm: f64 },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("embedding matrix contains a non-finite value at row {row}, column {col}")]
    NonFiniteValue { row: usize, col: usize },

    #[error("non-finite gradient in parameter group {group} at index {index}")]
    NonFiniteGradient { group: usize, index: usize },

    #[error("step {step} is outside the schedule range 0..={total}")]
    StepOutOfRange { step: usize, total: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("no valid findings to score")]
    EmptyQuestionSet,

    #[error("temperature must be positive, got {0}")]
    NonPositiveTau(f64),

    #[error("index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("depth grid has no positions")]
    EmptyGrid,

    #[error("loss evaluated to a non-finite value: {0}")]
    NonFiniteLoss(String),

    #[error("no sentence found around the reference")]
    NoSentenceFound,

    #[error("image {image} is outside series of {num_slices} slices")]
    ImageOutOfRange { image: u32, num_slices: u32 },

    #[error("reference series {reference} does not match geometry series {geometry}")]
    SeriesMismatch { reference: u32, geometry: u32 },

    #[error("position {mm} mm lies outside the volume [{start}, {end}) mm")]
    OutOfVolume { mm: f64, start: f64, end: f64 },

    #[error("invalid pattern `{pattern}`: {reason}")]
    InvalidPattern { pattern: String, reason: String },

    #[error("template `{0}` must contain the placeholder exactly once")]
    MissingPlaceholder(String),

    #[error("unknown finding `{0}`")]
    UnknownFinding(String),

    #[error("target class `{0}` has no source findings")]
    UnmappedClass(String),

    #[error("retrieval task has no queries or candidates")]
    EmptyTask,

    #[error("labels need at least one positive and one negative")]
    DegenerateLabels,

    #[error("candidate pool is empty")]
    EmptyPool,

    #[error("pool of {pool_size} requested but only {available} candidates")]
    PoolTooSmall { pool_size: usize, available: usize },

    #[error("no localization results")]
    EmptyResults,

    #[error("no samples to bootstrap")]
    EmptySamples,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
