//! The stochastic update map, step-size schedules, minibatch sampling and
//! the seeded trajectory runner.

mod io;
mod map;
mod sampler;
mod schedule;
mod trajectory;

pub use io::{read_iterates, read_records_csv, write_iterates, write_records_csv, ITERATES_FILE, MAGIC, METADATA_FILE, RECORDS_FILE};
pub use map::{sgd_step, StepRecord, UpdateMap, DIVERGENCE_NORM};
pub use sampler::{MinibatchSampler, SamplingMode};
pub use schedule::Schedule;
pub use trajectory::{default_stride, run_trajectory, Divergence, Runner, Trajectory, TrajectoryMetadata, MAX_STORED_ITERATES};

/// `schedule.eta(step, steps_per_epoch)`.
pub fn schedule_eta(schedule: &Schedule, step: usize, steps_per_epoch: usize) -> f64 {
    schedule.eta(step, steps_per_epoch)
}
