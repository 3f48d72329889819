use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("coordinate out of range: lat {lat}, lon {lon}")]
    InvalidCoordinate { lat: f64, lon: f64 },

    #[error("non-finite value {value} at ({lat}, {lon})")]
    NonFiniteValue { lat: f64, lon: f64, value: f64 },

    #[error("duplicate coordinate ({lat}, {lon}) at points {first} and {second}")]
    DuplicateCoordinate {
        lat: f64,
        lon: f64,
        first: usize,
        second: usize,
    },

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("field is constant; standardization is undefined")]
    ConstantField,

    #[error("variogram has {bins} non-empty bins but the {family} model needs at least {needed}")]
    DegenerateVariogram {
        family: &'static str,
        bins: usize,
        needed: usize,
    },

    #[error("kriging system is singular")]
    SingularSystem,

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },

    #[error("observed values are constant; R² is undefined")]
    ConstantObservations,

    #[error("eta squared needs equal group sizes, got {sizes:?}")]
    UnequalGroups { sizes: Vec<usize> },

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("only {available} dates have more than {min_valid} valid observations, {requested} requested")]
    InsufficientDates {
        available: usize,
        requested: usize,
        min_valid: usize,
    },

    #[error("date {date} has {count} valid observations, at least {needed} needed for splitting")]
    TooFewObservations {
        date: String,
        count: usize,
        needed: usize,
    },

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }
}
