use thiserror::Error;

/// Errors produced anywhere in the discovery pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("coordinate index {index} out of range (p = {p})")]
    CoordOutOfRange { index: usize, p: usize },

    #[error("field index {index} out of range (q = {q})")]
    FieldOutOfRange { index: usize, q: usize },

    #[error("unhoused variable: {0}")]
    UnhousedVariable(String),

    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("invalid library: {0}")]
    InvalidLibrary(String),

    #[error("empty multi-index: base rows are structural, not prolonged")]
    EmptyMultiIndex,

    #[error("row label {label} exceeds prolongation order {order}")]
    RowOutsideOrder { label: String, order: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("unknown PDE `{name}`; valid options: {options}")]
    UnknownPde { name: String, options: String },

    #[error("unknown dataset `{name}`; valid options: {options}")]
    UnknownDataset { name: String, options: String },

    #[error("unsupported derivative order {order}: {reason}")]
    UnsupportedOrder { order: usize, reason: String },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite state at integration step {step}")]
    NonFinite { step: usize },

    #[error("trajectory too short: need at least {needed} time samples, have {have}")]
    TooShort { needed: usize, have: usize },

    #[error("stride {stride} does not divide axis length {len}")]
    Stride { stride: usize, len: usize },

    #[error("requested {requested} samples from a dataset of {available} points")]
    TooManySamples { requested: usize, available: usize },

    #[error("training diverged at epoch {epoch} (loss is not finite)")]
    Diverged { epoch: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("matrix contains non-finite entries")]
    NonFiniteMatrix,

    #[error("input basis is not orthonormal (max deviation {0:.3e})")]
    NotOrthonormal(f64),

    #[error("matrix is rank deficient")]
    RankDeficient,

    #[error("generator term outside the library: {0}")]
    OutsideLibrary(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
