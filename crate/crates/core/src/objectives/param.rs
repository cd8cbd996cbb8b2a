use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric;

/// Shape of one contiguous block of a flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Block {
    /// Row-major `rows × cols` weight matrix.
    Matrix { rows: usize, cols: usize },
    /// Plain vector (scalars, BN scale/shift, closed-form coordinates).
    Vector { len: usize },
}

impl Block {
    pub fn len(&self) -> usize {
        match *self {
            Block::Matrix { rows, cols } => rows * cols,
            Block::Vector { len } => len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Offsets of each block inside the flat vector.
pub fn block_ranges(blocks: &[Block]) -> Vec<Range<usize>> {
    let mut start = 0;
    blocks
        .iter()
        .map(|b| {
            let r = start..start + b.len();
            start = r.end;
            r
        })
        .collect()
}

pub fn total_len(blocks: &[Block]) -> usize {
    blocks.iter().map(Block::len).sum()
}

/// Flat real parameter vector together with its block layout.
///
/// Every vector built through [`ParamVector::new`] is finite; arithmetic on
/// [`ParamVector::values_mut`] may leave that state, which the dynamics
/// detect as divergence.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    blocks: Arc<[Block]>,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, blocks: Arc<[Block]>) -> Result<Self> {
        let expected = total_len(&blocks);
        if values.len() != expected {
            return Err(Error::config(format!(
                "parameter length {} does not match layout length {expected}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::non_finite(format!("parameter entry {i}")));
        }
        Ok(Self { values, blocks })
    }

    /// A single vector block.
    pub fn from_vec(values: Vec<f64>) -> Result<Self> {
        let blocks: Arc<[Block]> = Arc::from(vec![Block::Vector { len: values.len() }]);
        Self::new(values, blocks)
    }

    pub fn zeros(blocks: Arc<[Block]>) -> Self {
        let n = total_len(&blocks);
        Self {
            values: vec![0.0; n],
            blocks,
        }
    }

    /// Same layout, new values. Lengths must agree.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len(), "layout length mismatch");
        Self {
            values,
            blocks: Arc::clone(&self.blocks),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub(crate) fn values_mut_vec(&mut self) -> &mut Vec<f64> {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn blocks(&self) -> &Arc<[Block]> {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn block(&self, index: usize) -> &[f64] {
        let r = &block_ranges(&self.blocks)[index];
        &self.values[r.clone()]
    }

    pub fn block_mut(&mut self, index: usize) -> &mut [f64] {
        let r = block_ranges(&self.blocks)[index].clone();
        &mut self.values[r]
    }

    pub fn norm(&self) -> f64 {
        numeric::norm(&self.values)
    }

    pub fn dot(&self, other: &ParamVector) -> f64 {
        numeric::dot(&self.values, &other.values)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        self.with_values(self.values.iter().map(|v| alpha * v).collect())
    }

    /// `self + alpha * direction`
    pub fn offset(&self, alpha: f64, direction: &[f64]) -> Self {
        let mut out = self.clone();
        numeric::axpy(alpha, direction, &mut out.values);
        out
    }
}
