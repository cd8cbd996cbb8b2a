use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::map::{check_eta, divergence_reason, StepRecord, UpdateMap};
use super::sampler::{MinibatchSampler, SamplingMode};
use super::schedule::Schedule;
use crate::error::{Error, Result};
use crate::objectives::{check_theta, Block, ParamVector};
use crate::rng::{rng_from_seed, Rng};

/// Most iterates stored by the default stride rule.
pub const MAX_STORED_ITERATES: usize = 100_000;

/// Stride 1 for small problems, otherwise the smallest stride that stores
/// at most [`MAX_STORED_ITERATES`] iterates.
pub fn default_stride(dim: usize, num_steps: usize) -> usize {
    if dim <= 1_000 && num_steps <= 100_000 {
        1
    } else {
        num_steps.div_ceil(MAX_STORED_ITERATES - 2).max(1)
    }
}

/// Where and why a run stopped early.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub step: usize,
    pub reason: String,
}

/// Steps a map forward one iterate at a time.
///
/// Keeps the current iterate, the sampler state and the RNG stream seeded by
/// the map; callers that only need running statistics can avoid storing
/// iterates.
pub struct Runner {
    map: UpdateMap,
    schedule: Schedule,
    sampler: MinibatchSampler,
    rng: Rng,
    theta: ParamVector,
    next: Vec<f64>,
    grad: Vec<f64>,
    step: usize,
    steps_per_epoch: usize,
}

impl Runner {
    pub fn new(map: &UpdateMap, schedule: Schedule, theta0: ParamVector) -> Result<Self> {
        check_theta(theta0.values(), map.dim())?;
        if let Some(reason) = divergence_reason(theta0.values()) {
            return Err(Error::rejected(format!("initial iterate: {reason}")));
        }
        let dim = theta0.len();
        Ok(Self {
            sampler: map.sampler(),
            rng: rng_from_seed(map.seed()),
            steps_per_epoch: map.steps_per_epoch(),
            map: map.clone(),
            schedule,
            theta: theta0,
            next: vec![0.0; dim],
            grad: vec![0.0; dim],
            step: 0,
        })
    }

    /// Current iterate `θ_t`.
    pub fn theta(&self) -> &ParamVector {
        &self.theta
    }

    /// Number of steps taken so far.
    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn map(&self) -> &UpdateMap {
        &self.map
    }

    /// Step size the next step will use.
    pub fn next_eta(&self) -> f64 {
        self.schedule.eta(self.step, self.steps_per_epoch)
    }

    /// Advances to `θ_{t+1}`. On divergence the iterate is left at `θ_t`.
    pub fn advance(&mut self) -> Result<StepRecord> {
        let step = self.step;
        let eta = self.next_eta();
        check_eta(eta)?;
        let batch = self.sampler.next_batch(&mut self.rng);
        let loss = self
            .map
            .apply_into(self.theta.values(), eta, batch.as_deref(), &mut self.grad, &mut self.next)
            .map_err(|e| match e {
                Error::NonFinite { context } => Error::Diverged {
                    step,
                    reason: format!("non-finite {context}"),
                },
                other => other,
            })?;
        if let Some(reason) = divergence_reason(&self.next) {
            return Err(Error::Diverged { step, reason });
        }
        std::mem::swap(self.theta.values_mut_vec(), &mut self.next);
        self.step += 1;
        Ok(StepRecord { step, eta, batch, loss })
    }
}

/// Everything needed to interpret and replay a stored trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMetadata {
    pub objective: String,
    pub blocks: Vec<Block>,
    pub seed: u64,
    pub schedule: Schedule,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub sampling: SamplingMode,
    pub num_steps: usize,
    pub stride: usize,
    pub stored_steps: Vec<usize>,
    pub divergence: Option<Divergence>,
}

/// Iterates `θ₀…θₙ` stored at a stride, plus one record per step.
#[derive(Debug, Clone)]
pub struct Trajectory {
    meta: TrajectoryMetadata,
    blocks: Arc<[Block]>,
    iterates: Vec<Vec<f64>>,
    records: Vec<StepRecord>,
}

impl Trajectory {
    pub fn from_parts(
        meta: TrajectoryMetadata,
        iterates: Vec<Vec<f64>>,
        records: Vec<StepRecord>,
    ) -> Result<Self> {
        if iterates.len() != meta.stored_steps.len() {
            return Err(Error::config(format!(
                "{} iterates but {} stored steps",
                iterates.len(),
                meta.stored_steps.len()
            )));
        }
        if records.len() != meta.num_steps {
            return Err(Error::config(format!(
                "{} records for {} steps",
                records.len(),
                meta.num_steps
            )));
        }
        let dim = crate::objectives::total_len(&meta.blocks);
        if iterates.iter().any(|it| it.len() != dim) {
            return Err(Error::config("iterate length does not match the block layout"));
        }
        let blocks = Arc::from(meta.blocks.clone());
        Ok(Self {
            meta,
            blocks,
            iterates,
            records,
        })
    }

    pub fn metadata(&self) -> &TrajectoryMetadata {
        &self.meta
    }

    pub fn seed(&self) -> u64 {
        self.meta.seed
    }

    pub fn stride(&self) -> usize {
        self.meta.stride
    }

    /// Steps actually taken (fewer than requested after divergence).
    pub fn num_steps(&self) -> usize {
        self.meta.num_steps
    }

    pub fn divergence(&self) -> Option<&Divergence> {
        self.meta.divergence.as_ref()
    }

    pub fn diverged(&self) -> bool {
        self.meta.divergence.is_some()
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn blocks(&self) -> &Arc<[Block]> {
        &self.blocks
    }

    /// Step index `t` of each stored iterate.
    pub fn stored_steps(&self) -> &[usize] {
        &self.meta.stored_steps
    }

    pub fn num_stored(&self) -> usize {
        self.iterates.len()
    }

    /// Raw values of the `i`-th stored iterate.
    pub fn stored(&self, i: usize) -> &[f64] {
        &self.iterates[i]
    }

    pub fn iterates(&self) -> &[Vec<f64>] {
        &self.iterates
    }

    pub fn iterate(&self, i: usize) -> ParamVector {
        ParamVector::new(self.iterates[i].clone(), Arc::clone(&self.blocks))
            .expect("stored iterates are finite and shaped")
    }

    /// `θ_t`, when it was stored.
    pub fn at_step(&self, t: usize) -> Option<&[f64]> {
        self.meta
            .stored_steps
            .binary_search(&t)
            .ok()
            .map(|i| self.iterates[i].as_slice())
    }

    pub fn last(&self) -> ParamVector {
        self.iterate(self.iterates.len() - 1)
    }
}

/// Runs `num_steps` steps of `map` from `θ₀`, storing every `stride`-th
/// iterate and the final one.
///
/// Divergence truncates the run: the returned trajectory ends at the last
/// finite iterate and carries a [`Divergence`] marker.
pub fn run_trajectory(
    map: &UpdateMap,
    schedule: Schedule,
    theta0: ParamVector,
    num_steps: usize,
    stride: Option<usize>,
) -> Result<Trajectory> {
    if num_steps == 0 {
        return Err(Error::rejected("a trajectory needs at least one step"));
    }
    let stride = stride.unwrap_or_else(|| default_stride(map.dim(), num_steps));
    if stride == 0 {
        return Err(Error::rejected("storage stride must be positive"));
    }
    let blocks: Vec<Block> = theta0.blocks().to_vec();
    let mut runner = Runner::new(map, schedule, theta0)?;
    let mut iterates = vec![runner.theta().values().to_vec()];
    let mut stored_steps = vec![0];
    let mut records = Vec::with_capacity(num_steps);
    let mut divergence = None;
    while runner.steps_taken() < num_steps {
        match runner.advance() {
            Ok(rec) => records.push(rec),
            Err(Error::Diverged { step, reason }) => {
                divergence = Some(Divergence { step, reason });
                break;
            }
            Err(e) => return Err(e),
        }
        let t = runner.steps_taken();
        if t % stride == 0 || t == num_steps {
            iterates.push(runner.theta().values().to_vec());
            stored_steps.push(t);
        }
    }
    let t = runner.steps_taken();
    if *stored_steps.last().unwrap() != t {
        iterates.push(runner.theta().values().to_vec());
        stored_steps.push(t);
    }
    let meta = TrajectoryMetadata {
        objective: map.objective().base().describe(),
        blocks,
        seed: map.seed(),
        schedule,
        weight_decay: map.weight_decay(),
        batch_size: map.batch_size(),
        sampling: map.sampling(),
        num_steps: t,
        stride,
        stored_steps,
        divergence,
    };
    Trajectory::from_parts(meta, iterates, records)
}
