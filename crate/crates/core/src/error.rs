use thiserror::Error;

/// Location of a grid point together with the offending value, used by every
/// diagnostic that needs to point at the worst place on the torus.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Witness {
    pub index: usize,
    pub value: f64,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value at grid point {index}: {value}")]
    DataCorruption { index: usize, value: f64 },

    #[error("metric not positive definite at grid point {index}: min eigenvalue {min_eigenvalue:e} (floor {floor:e})")]
    Positivity {
        index: usize,
        min_eigenvalue: f64,
        floor: f64,
    },

    #[error("Kahler positivity lost at t = {t}: grid point {index}, min eigenvalue {min_eigenvalue:e}")]
    KahlerLost {
        t: f64,
        index: usize,
        min_eigenvalue: f64,
    },

    #[error("unsupported complex dimension {0} for this operation")]
    UnsupportedDimension(usize),

    #[error("time {t} is beyond the horizon {horizon}")]
    Horizon { t: f64, horizon: f64 },

    #[error("horizon reached at t = {t} (stop time {stop})")]
    HorizonReached { t: f64, stop: f64 },

    #[error("step failed at t = {t} after {halvings} halvings: {reason}")]
    StepFailure {
        t: f64,
        halvings: u32,
        reason: String,
    },

    #[error("scenario invariant violated: {0}")]
    Scenario(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("unsupported case: {0}")]
    Unsupported(String),

    #[error("certificate constant C_v too small: C_v - v = {gap} < 1 at grid point {index}; raise C_v")]
    DenominatorTooSmall { index: usize, gap: f64 },

    #[error("oracle domain error: {0}")]
    OracleDomain(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
