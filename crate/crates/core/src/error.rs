use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("gap of {hours} hours after hour {after} exceeds the fill limit of {limit}")]
    GapTooLarge { after: i64, hours: i64, limit: usize },
    #[error("duplicate timestamp at hour {0}")]
    DuplicateTimestamp(i64),
    #[error("negative or non-finite reading {value} at hour {hour}")]
    NegativeReading { hour: i64, value: f64 },
    #[error("rows belong to more than one meter ({0} and {1})")]
    MixedMeters(String, String),
    #[error("no rows to ingest")]
    EmptySeries,
    #[error("cannot parse timestamp {0:?}")]
    BadTimestamp(String),
    #[error("series is malformed: {0}")]
    InvalidSeries(String),

    #[error("range of {len} observations is too short (need at least {need})")]
    RangeTooShort { len: usize, need: usize },
    #[error("window of {len} rows is too short for lag order {max_lag}")]
    WindowTooShort { len: usize, max_lag: usize },
    #[error("column {0} is identically zero")]
    ZeroColumn(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("{rows} rows cannot determine {cols} coefficients")]
    Underdetermined { rows: usize, cols: usize },
    #[error("coordinate descent did not converge in {0} sweeps")]
    MaxIterExceeded(usize),
    #[error("columns {0} and {1} tie in absolute correlation")]
    DegeneratePath(usize, usize),
    #[error("{rows} rows are too few for {folds}-fold cross validation")]
    TooFewRows { rows: usize, folds: usize },
    #[error("expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("{candidates} candidates leave no residual degrees of freedom with {rows} rows")]
    TooManyCandidates { rows: usize, candidates: usize },
    #[error("series are not aligned on a common hourly index: {0}")]
    MisalignedSeries(String),
    #[error("noise variance must be positive, got {0}")]
    NonPositiveSigma(f64),
    #[error("bad degrees of freedom: N = {n}, P = {p}")]
    BadDof { n: usize, p: usize },

    #[error("need {need} hours of history, have {have}")]
    InsufficientHistory { need: usize, have: usize },

    #[error("length mismatch: {0} actual vs {1} predicted")]
    LengthMismatch(usize, usize),
    #[error("training mean is zero")]
    ZeroTrainMean,
    #[error("cannot aggregate an empty sequence")]
    Empty,
    #[error("residual sum of squares must be positive, got {0}")]
    NonPositiveRss(f64),

    #[error("unstable autoregressive spec: {0}")]
    UnstableSpec(String),
    #[error("problem is too large for exhaustive search ({0} columns)")]
    TooLarge(usize),

    #[error("i/o error: {0}")]
    Io(String),
    #[error("schema error: {0}")]
    Schema(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Schema(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Schema(e.to_string())
    }
}
