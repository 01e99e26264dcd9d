use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("row {row}: score present on an abstained prediction")]
    PresentScoreOnAbstention { row: usize },
    #[error("row {row}: score missing on a revealed prediction")]
    MissingScoreOnPrediction { row: usize },
    #[error("row {row}: feature dimension {found}, expected {expected}")]
    DimensionMismatch { row: usize, expected: usize, found: usize },
    #[error("row {row}: abstention flag must be 0 or 1, found {found}")]
    InvalidAbstentionFlag { row: usize, found: i64 },
    #[error("row {row}: score {score} outside declared range [{lo}, {hi}]")]
    ScoreOutOfRange { row: usize, score: f64, lo: f64, hi: f64 },
    #[error("row {row}: non-finite value")]
    NonFinite { row: usize },
    #[error("paired arms have {a} and {b} rows")]
    ArmLengthMismatch { a: usize, b: usize },
    #[error("invalid score range [{lo}, {hi}]")]
    InvalidScoreRange { lo: f64, hi: f64 },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("probabilities must be non-negative and sum to 1 (sum = {sum})")]
    InvalidProbabilities { sum: f64 },

    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("singular system in linear solve")]
    SingularSystem,
    #[error("invalid learner configuration: {0}")]
    InvalidLearner(String),
    #[error("invalid clip bounds [{lo}, {hi}]")]
    InvalidClipBounds { lo: f64, hi: f64 },

    #[error("fold count {k} invalid for {n} rows")]
    BadFoldCount { n: usize, k: usize },
    #[error("fold {fold}: training complement has {got} non-abstained rows, need at least 2")]
    InsufficientObservedRows { fold: usize, got: usize },
    #[error("nuisance estimates cover {nuisance} rows, dataset has {data}")]
    NuisanceLengthMismatch { nuisance: usize, data: usize },

    #[error("row {row}: score missing where r = 0")]
    MissingScore { row: usize },
    #[error("score range violation: {0}")]
    ScoreRangeViolation(String),
    #[error("expert scores misaligned at row {row}")]
    ExpertAlignmentError { row: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("study run {run} failed: {source}")]
    StudyRunFailed { run: usize, source: Box<Error> },

    #[error("csv: {0}")]
    Csv(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        match e.kind() {
            csv::ErrorKind::Io(_) => Error::Io(e.to_string()),
            _ => Error::Csv(e.to_string()),
        }
    }
}
