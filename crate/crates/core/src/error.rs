use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{path}: header mismatch, expected `{expected}`, found `{found}`")]
    Schema {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("row {row}, field `{field}`: {message}")]
    Field {
        row: u64,
        field: String,
        message: String,
    },

    #[error("duplicate observation for child `{child}` at age {age_days} days")]
    DuplicateObservation { child: String, age_days: i64 },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("design is rank deficient: column `{column}` is linearly dependent on earlier columns")]
    RankDeficient { column: String },

    #[error("under-identified: {instruments} excluded instruments for {endogenous} endogenous regressors")]
    Underidentified { instruments: usize, endogenous: usize },

    #[error("model is over-identified ({instruments} instruments, {endogenous} endogenous); use fit_liml")]
    NotExactlyIdentified { instruments: usize, endogenous: usize },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unknown unit `{unit}` for item `{item}`")]
    UnknownUnit { item: String, unit: String },

    #[error("perfect separation on covariate `{0}`")]
    Separation(String),

    #[error("{0}")]
    NoQualifyingSpec(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
