use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("momentum index {index:?} outside the cutoff window ±{n_max}")]
    IndexOutOfRange { index: Vec<i64>, n_max: u32 },

    #[error("momentum index has {got} components, lattice dimension is {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("flat index {index} outside basis of size {size}")]
    FlatIndexOutOfRange { index: usize, size: usize },

    #[error("axis {axis} invalid for a {dim}-dimensional lattice")]
    InvalidAxis { axis: usize, dim: usize },

    #[error("operands live on different lattices")]
    LatticeMismatch,

    #[error("invalid parameter: {0}")]
    Validation(String),

    #[error("normalization violated: {what} deviates by {deviation:e}")]
    Normalization { what: &'static str, deviation: f64 },

    #[error("transfer {transfer:?} from source {source_index:?} leaves the cutoff window")]
    OutOfWindow { transfer: Vec<i64>, source_index: Vec<i64> },

    #[error("positivity lost at t = {t}: smallest eigenvalue {min_eig:e}")]
    PositivityDrift { t: f64, min_eig: f64 },

    #[error("state drifted at t = {t}: trace deviation {trace_dev:e}, hermiticity {herm_dev:e}")]
    StateDrift { t: f64, trace_dev: f64, herm_dev: f64 },

    #[error("outcome sampling degenerate: {0}")]
    DegenerateSampling(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
