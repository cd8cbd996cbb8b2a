//! Empirical measures over iterates and the statistics built on them.

mod change;
mod distance;
mod measure;
mod observable;

pub use change::{
    hoeffding_envelope, invariance_residual, log_log_slope, vanishing_change, BoundSource, ChangeEstimator,
    VanishingChangeReport, VanishingChangeRow,
};
pub use distance::{measure_distance, SlicedEnergy, DEFAULT_PROJECTIONS};
pub use measure::{build_measure, time_average, EmpiricalMeasure, MeasureSource};
pub use observable::Observable;
