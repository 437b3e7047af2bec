use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: {what} has size {found}, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("splitting mask entry ({row}, {col}) = {value} is not 0 or 1")]
    InvalidMask { row: usize, col: usize, value: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid quantity of interest: {0}")]
    InvalidQoi(String),

    #[error("time {time} lies outside the interval [{t0}, {tn}]")]
    OutsideInterval { time: f64, t0: f64, tn: f64 },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("cell (component {component}, cell {cell}) does not exist on this mesh")]
    InvalidCell { component: usize, cell: usize },

    #[error("meshes are not nested: {0}")]
    NotNested(String),

    #[error("basis family mismatch: expected {expected:?}, found {found:?}")]
    FamilyMismatch {
        expected: crate::assembly::BasisFamily,
        found: crate::assembly::BasisFamily,
    },

    #[error("functions live on different meshes")]
    MeshMismatch,

    #[error("singular matrix: no usable pivot for unknown (component {component}, index {index})")]
    Singular { component: usize, index: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("reference solution failed its self-convergence check: change {change:e} exceeds {tolerance:e}")]
    ReferenceNotConverged { change: f64, tolerance: f64 },

    #[error("non-finite estimator at level {level}, iteration {iteration}: {detail}")]
    NonFiniteEstimator {
        level: usize,
        iteration: usize,
        detail: String,
    },
}
