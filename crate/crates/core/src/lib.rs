//! Multilane simple exclusion processes on finite windows: kernels,
//! invariant-measure families, flux function, shock classifier, simulation
//! and statistical checks.

pub mod analysis;
pub mod conditioned;
pub mod dynamics;
pub mod error;
pub mod flux;
pub mod kernels;
pub mod lattice;
pub mod measures;
pub mod rng;
pub mod verify;

pub use dynamics::{CoupledConfig, PairClass, Simulator, Trajectory};
pub use error::{Error, Result};
pub use flux::{FluxCurve, ShockPair};
pub use kernels::{Kernel, MultiLaneRates, TwoLaneRates};
pub use lattice::{Config, HBoundary, LaneGeometry, Site, VTopology};
pub use measures::{MeasureSpec, StepPos};
