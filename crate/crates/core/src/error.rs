use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("spring index {index} out of range 1..={n_dof}")]
    SpringIndexOutOfRange { index: usize, n_dof: usize },

    #[error("system is already damaged (spring {0})")]
    AlreadyDamaged(usize),

    #[error("system is damaged; datasets are generated from the undamaged state")]
    NotUndamaged,

    #[error("eigensolver failed to converge for structure {structure_id}")]
    EigenNonConvergence { structure_id: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("zero vector has no modal correspondence")]
    ZeroVector,

    #[error("number of modes must be in 1..={available}, got {requested}")]
    InvalidModeCount { requested: usize, available: usize },

    #[error("need at least 2 undamaged rows for normal-condition statistics, got {0}")]
    TooFewNormalRows(usize),

    #[error("degenerate normal condition: feature {feature} has zero standard deviation")]
    DegenerateNormalCondition { feature: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("transfer task {source_id} -> {target_id} failed: {cause}")]
    TaskFailed {
        source_id: usize,
        target_id: usize,
        #[source]
        cause: Box<Error>,
    },

    #[error("non-finite value: {0}")]
    NonFinite(&'static str),

    #[error("concentration parameters must be strictly positive")]
    NonPositiveAlpha,

    #[error("too few training records: need at least {min}, got {actual}")]
    TooFewRecords { min: usize, actual: usize },

    #[error("loss became non-finite at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("schema mismatch: expected {expected:?}, found {found:?}")]
    Schema { expected: String, found: String },

    #[error("malformed data: {0}")]
    Malformed(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
