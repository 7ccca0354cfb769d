use std::path::PathBuf;

use crate::model::BundleField;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("probability row {row} is off the simplex (sum {sum}, min {min})")]
    InvalidDistribution { row: usize, sum: f64, min: f64 },

    #[error("prediction bundle is missing required field `{0}`")]
    MissingField(BundleField),

    #[error("prediction bundle field `{field}` has {found} rows, expected {expected}")]
    FieldLength {
        field: BundleField,
        expected: usize,
        found: usize,
    },

    #[error("requested {requested} samples but only {available} are in the pool")]
    PoolTooSmall { requested: usize, available: usize },

    #[error("vote vector is empty")]
    EmptyVotes,

    #[error("vote row {row} has {found} entries, expected {expected}")]
    RaggedVotes {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("core-set selection needs at least one labeled center")]
    EmptySeedSet,

    #[error("feature row {row} has dimension {found}, expected {expected}")]
    FeatureDim {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("entropy value {value} at pixel {pixel} is negative or not finite")]
    NegativeEntropy { pixel: usize, value: f64 },

    #[error("score {score} for row {row} is outside [0, 1]")]
    ScoreOutOfRange { row: usize, score: f64 },

    #[error("sample {0} is already labeled")]
    AlreadyLabeled(usize),

    #[error("sample {0} is not in the unlabeled pool")]
    NotInPool(usize),

    #[error("index {index} out of range for dataset of size {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("labeled set is empty")]
    EmptyLabeledSet,

    #[error("ensemble member seed {0} is duplicated")]
    DuplicateSeed(u64),

    #[error("polygon {polygon} has a degenerate ring with {len} vertices")]
    DegenerateRing { polygon: usize, len: usize },

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("component {0} is not a component of the mask")]
    NotAComponent(usize),

    #[error("image has no unlabeled components")]
    NoUnlabeledComponents,

    #[error("class {class} has {available} samples but its quota is {quota}")]
    ClassQuota {
        class: usize,
        available: usize,
        quota: usize,
    },

    #[error("strategy `{strategy}` has {found} cycles in one trial, expected {expected}")]
    CycleMismatch {
        strategy: String,
        expected: usize,
        found: usize,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("adapter error [{code}]: {message}")]
    Adapter { code: String, message: String },

    #[error("checkpoint decode failed: {0}")]
    Checkpoint(String),

    #[error("dataset error in {path}: {message}")]
    Dataset { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn adapter(code: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Adapter {
            code: code.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by a bad configuration rather than a runtime fault.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::InvalidParam(_) | Error::MissingField(_)
        )
    }
}
