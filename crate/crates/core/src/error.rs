use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    // design of experiments
    #[error("invalid factor `{name}`: {reason}")]
    InvalidFactor { name: String, reason: String },
    #[error("factor count {0} outside the supported range 2..=10")]
    FactorCount(usize),
    #[error("duplicate factor name `{0}`")]
    DuplicateFactor(String),
    #[error("invalid split fractions: {0}")]
    InvalidFractions(String),
    #[error("stratum {combination_id} has {rows} rows, fewer than the {splits} splits")]
    StratumTooSmall {
        combination_id: u32,
        rows: usize,
        splits: usize,
    },
    #[error("column `{0}` has zero variance")]
    ZeroVariance(String),

    // surrogate
    #[error("setting {value} for `{factor}` outside its range [{low}, {high}]")]
    OutOfRange {
        factor: String,
        value: f64,
        low: f64,
        high: f64,
    },
    #[error("invalid surrogate parameters: {0}")]
    InvalidParams(String),

    // models
    #[error("training data invalid: {0}")]
    InvalidTrainingData(String),
    #[error("expected {expected} feature columns, got {got}")]
    FeatureCount { expected: usize, got: usize },
    #[error("non-finite input at row {row}, column {col}")]
    NonFiniteInput { row: usize, col: usize },
    #[error(
        "network training stagnated (seed {seed}): relative training loss {relative_loss:.4} above threshold {threshold}"
    )]
    Stagnated {
        seed: u64,
        relative_loss: f64,
        threshold: f64,
    },
    #[error("metric undefined: {0}")]
    MetricUndefined(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    // explainers
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("degenerate partial dependence: {0}")]
    Degenerate(String),
    #[error("exact Shapley values limited to {max} features, got {got}")]
    DimensionGuard { max: usize, got: usize },
    #[error("factor index {index} out of bounds for {count} factors")]
    FactorIndex { index: usize, count: usize },

    // cause analysis
    #[error("{context}: {source}")]
    Case {
        context: String,
        #[source]
        source: Box<Error>,
    },

    // persistence
    #[error("unsupported schema version {found} (expected {expected})")]
    Schema { found: u64, expected: u64 },
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Attach a human-readable context (e.g. which perturbation case failed).
    pub fn with_context(self, context: impl Into<String>) -> Self {
        Error::Case {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Case { source, .. } => source.root(),
            other => other,
        }
    }
}
