use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// How minibatches are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Independent uniform draws with replacement.
    Iid,
    /// A fresh permutation every epoch, cut into consecutive batches.
    EpochShuffle,
    /// Every step uses the whole dataset; the map is deterministic.
    FullBatch,
}

impl fmt::Display for SamplingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplingMode::Iid => "iid",
            SamplingMode::EpochShuffle => "epoch_shuffle",
            SamplingMode::FullBatch => "full_batch",
        })
    }
}

impl FromStr for SamplingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "iid" => Ok(SamplingMode::Iid),
            "epoch_shuffle" | "shuffle" => Ok(SamplingMode::EpochShuffle),
            "full_batch" | "full" => Ok(SamplingMode::FullBatch),
            other => Err(Error::config(format!("unknown sampling mode `{other}`"))),
        }
    }
}

/// Stateful minibatch source.
///
/// In epoch-shuffle mode the last batch of an epoch holds the remainder when
/// the batch size does not divide the dataset size.
#[derive(Debug, Clone)]
pub struct MinibatchSampler {
    num_examples: usize,
    batch_size: usize,
    mode: SamplingMode,
    perm: Vec<usize>,
    cursor: usize,
}

impl MinibatchSampler {
    pub fn new(num_examples: usize, batch_size: usize, mode: SamplingMode) -> Result<Self> {
        if num_examples == 0 {
            return Err(Error::config("cannot sample from an empty dataset"));
        }
        if batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        if mode == SamplingMode::EpochShuffle && batch_size > num_examples {
            return Err(Error::config(format!(
                "batch size {batch_size} exceeds the {num_examples} examples of an epoch"
            )));
        }
        Ok(Self {
            num_examples,
            batch_size,
            mode,
            perm: (0..num_examples).collect(),
            cursor: num_examples,
        })
    }

    pub fn mode(&self) -> SamplingMode {
        self.mode
    }

    /// `⌈N / m⌉`, or 1 for full-batch sampling.
    pub fn steps_per_epoch(&self) -> usize {
        steps_per_epoch(self.num_examples, self.batch_size, self.mode)
    }

    /// Next minibatch; `None` means the whole dataset.
    pub fn next_batch(&mut self, rng: &mut Rng) -> Option<Vec<usize>> {
        match self.mode {
            SamplingMode::FullBatch => None,
            SamplingMode::Iid => Some(iid_batch(self.num_examples, self.batch_size, rng)),
            SamplingMode::EpochShuffle => {
                if self.cursor >= self.num_examples {
                    self.perm.shuffle(rng);
                    self.cursor = 0;
                }
                let end = (self.cursor + self.batch_size).min(self.num_examples);
                let batch = self.perm[self.cursor..end].to_vec();
                self.cursor = end;
                Some(batch)
            }
        }
    }

    /// A batch with the marginal law of one step, independent of the
    /// sampler's epoch state.
    pub fn fresh_batch(&self, rng: &mut Rng) -> Option<Vec<usize>> {
        fresh_batch(self.num_examples, self.batch_size, self.mode, rng)
    }
}

pub(crate) fn fresh_batch(n: usize, m: usize, mode: SamplingMode, rng: &mut Rng) -> Option<Vec<usize>> {
    match mode {
        SamplingMode::FullBatch => None,
        SamplingMode::Iid => Some(iid_batch(n, m, rng)),
        SamplingMode::EpochShuffle => Some(rand::seq::index::sample(rng, n, m).into_vec()),
    }
}

pub(crate) fn steps_per_epoch(n: usize, m: usize, mode: SamplingMode) -> usize {
    match mode {
        SamplingMode::FullBatch => 1,
        _ => n.div_ceil(m.max(1)),
    }
}

fn iid_batch(n: usize, m: usize, rng: &mut Rng) -> Vec<usize> {
    (0..m).map(|_| rng.gen_range(0..n)).collect()
}
