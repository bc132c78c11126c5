use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed line {line} in {path}: {message}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate id: {0}")]
    DuplicateId(String),

    #[error("report {report_id}, label {label}: raw code {code} out of range {{0,1,2,9}}")]
    LabelCodeOutOfRange {
        report_id: String,
        label: String,
        code: i64,
    },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid split fractions {0:?}: must be positive and sum to 1")]
    InvalidFractions([f64; 3]),

    #[error("tuning subset of {requested} requested but dataset has {available} reports")]
    SubsetTooLarge { requested: usize, available: usize },

    #[error("template {template_id}: slot {slot} must appear exactly once (found {found})")]
    BadTemplateSlot {
        template_id: u32,
        slot: &'static str,
        found: usize,
    },

    #[error("empty report text")]
    EmptyReportText,

    #[error("agent prompt requires at least one parsed response")]
    NoParsedResponses,

    #[error("no valid answer JSON object found in response")]
    AnswerParseFailure,

    #[error("no valid verdict JSON object found in judge response")]
    VerdictParseFailure,

    #[error("transport failure after {attempts} attempt(s): {last}")]
    Transport { attempts: u32, last: String },

    #[error("backend returned no token log-probabilities and logprob fallback is disabled")]
    LogprobsUnavailable,

    #[error("weight vector invalid: {0}")]
    InvalidWeights(String),

    #[error("empty validation set for linear weight optimization")]
    EmptyValidationSet,

    #[error("empty training set")]
    EmptyTrainingSet,

    #[error("feature layout mismatch: model expects {expected}, got {actual}")]
    FeatureLayoutMismatch { expected: usize, actual: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("prediction/truth length mismatch: {predictions} vs {truths}")]
    LengthMismatch { predictions: usize, truths: usize },

    #[error("empty confusion matrix")]
    EmptyConfusionMatrix,

    #[error("no records to average")]
    NoRecords,

    #[error("all cases excluded by uncertainty filter (threshold {threshold})")]
    AllCasesExcluded { threshold: f64 },

    #[error("no label has any defined median side")]
    NoDefinedMedians,

    #[error("config error: {0}")]
    Config(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
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
