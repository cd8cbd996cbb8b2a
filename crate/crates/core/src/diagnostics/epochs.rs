use serde::Serialize;

use crate::dynamics::{SamplingMode, Trajectory};
use crate::error::{Error, Result};
use crate::numeric::NeumaierSum;
use crate::objectives::{full_loss, Objective};

/// Moving-average and last-iterate loss of one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochLossPair {
    pub epoch: usize,
    /// `(1/N) Σ` of the minibatch losses recorded during the epoch.
    pub moving: f64,
    /// Full-dataset loss at the epoch's last iterate.
    pub fixed: f64,
}

fn steps_per_epoch(traj: &Trajectory, n: usize) -> Result<usize> {
    let meta = traj.metadata();
    match meta.sampling {
        SamplingMode::EpochShuffle => Ok(n.div_ceil(meta.batch_size)),
        SamplingMode::FullBatch => Ok(1),
        SamplingMode::Iid => Err(Error::rejected("epoch losses need epoch-shuffled or full-batch sampling")),
    }
}

pub fn epoch_losses(traj: &Trajectory, obj: &dyn Objective, epoch: usize) -> Result<EpochLossPair> {
    let n = obj.num_examples();
    let spe = steps_per_epoch(traj, n)?;
    let (start, end) = (epoch * spe, (epoch + 1) * spe);
    if end > traj.num_steps() {
        return Err(Error::rejected(format!("epoch {epoch} is not complete in a {}-step trajectory", traj.num_steps())));
    }
    let mut moving = NeumaierSum::new();
    let mut seen = 0;
    for r in &traj.records()[start..end] {
        if !r.loss.is_finite() {
            return Err(Error::rejected(format!("step {} has no recorded loss", r.step)));
        }
        let m = r.batch.as_ref().map_or(n, Vec::len);
        moving.add(r.loss * m as f64);
        seen += m;
    }
    if seen != n {
        return Err(Error::rejected(format!("epoch {epoch} consumed {seen} examples instead of {n}")));
    }
    let last = traj
        .at_step(end)
        .ok_or_else(|| Error::rejected(format!("iterate at step {end} was not stored")))?;
    Ok(EpochLossPair {
        epoch,
        moving: moving.value() / n as f64,
        fixed: full_loss(obj, last)?,
    })
}

/// [`epoch_losses`] for every complete epoch.
pub fn epoch_loss_series(traj: &Trajectory, obj: &dyn Objective) -> Result<Vec<EpochLossPair>> {
    let spe = steps_per_epoch(traj, obj.num_examples())?;
    (0..traj.num_steps() / spe).map(|e| epoch_losses(traj, obj, e)).collect()
}
