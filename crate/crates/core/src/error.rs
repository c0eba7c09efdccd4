use thiserror::Error;

/// Errors raised by lattice, kernel, measure, flux and simulation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("lane index {lane} out of range for {n_lanes} lanes")]
    LaneOutOfRange { lane: usize, n_lanes: usize },

    #[error("column {column} outside window [{min}, {max}]")]
    ColumnOutOfRange { column: i64, min: i64, max: i64 },

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid rates: {0}")]
    InvalidRates(String),

    #[error("lanes are decoupled (p + q = 0)")]
    DecoupledLanes,

    #[error("{name} = {value} outside [{min}, {max}]")]
    OutOfRange {
        name: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("measure incompatible with geometry: {0}")]
    IncompatibleGeometry(String),

    #[error("rejection sampler exhausted {attempts} draws (acceptance rate {rate:.3e})")]
    RejectionBudget { attempts: u64, rate: f64 },

    #[error("density ratio is 0 or infinite: site ({column}, {lane}) has a frozen density")]
    DegenerateRatio { column: i64, lane: usize },

    #[error("degenerate parameters: {0}")]
    Degenerate(String),

    #[error("coupled configuration has no discrepancy")]
    NoDiscrepancy,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_range(name: &'static str, value: f64, min: f64, max: f64) -> Result<()> {
    if value.is_finite() && value >= min && value <= max {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name,
            value,
            min,
            max,
        })
    }
}
