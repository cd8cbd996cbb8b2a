use std::ops::{Bound, RangeBounds};
use std::sync::Arc;

use serde::Serialize;

use super::observable::Observable;
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::numeric::NeumaierSum;
use crate::objectives::{Block, ParamVector};

/// Where a measure's atoms came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MeasureSource {
    pub seed: Option<u64>,
    /// Step index of each atom in its trajectory.
    pub steps: Vec<usize>,
    pub stride: usize,
}

/// Weighted mixture of Dirac masses.
#[derive(Debug, Clone)]
pub struct EmpiricalMeasure {
    atoms: Vec<Vec<f64>>,
    weights: Vec<f64>,
    blocks: Arc<[Block]>,
    source: MeasureSource,
}

impl EmpiricalMeasure {
    /// Uniform weights over `atoms`.
    pub fn uniform(atoms: Vec<ParamVector>) -> Result<Self> {
        let k = atoms.len();
        Self::weighted(atoms, vec![1.0 / k.max(1) as f64; k])
    }

    pub fn weighted(atoms: Vec<ParamVector>, weights: Vec<f64>) -> Result<Self> {
        let first = atoms
            .first()
            .ok_or_else(|| Error::rejected("a measure needs at least one atom"))?;
        let blocks = Arc::clone(first.blocks());
        if atoms.iter().any(|a| a.len() != first.len()) {
            return Err(Error::rejected("atoms have different dimensions"));
        }
        let raw = atoms.into_iter().map(ParamVector::into_values).collect();
        Self::from_raw(raw, weights, blocks, MeasureSource::default())
    }

    pub fn dirac(theta: ParamVector) -> Self {
        Self::uniform(vec![theta]).expect("one atom")
    }

    fn from_raw(atoms: Vec<Vec<f64>>, weights: Vec<f64>, blocks: Arc<[Block]>, source: MeasureSource) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::rejected("a measure needs at least one atom"));
        }
        if weights.len() != atoms.len() {
            return Err(Error::rejected("one weight per atom is required"));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::rejected("weights must be finite and non-negative"));
        }
        let total: f64 = weights.iter().copied().collect::<NeumaierSum>().value();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::rejected(format!("weights sum to {total}, not 1")));
        }
        Ok(Self {
            atoms,
            weights,
            blocks,
            source,
        })
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].len()
    }

    pub fn atoms(&self) -> &[Vec<f64>] {
        &self.atoms
    }

    pub fn atom(&self, i: usize) -> ParamVector {
        ParamVector::new(self.atoms[i].clone(), Arc::clone(&self.blocks)).expect("atoms are finite")
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn source(&self) -> &MeasureSource {
        &self.source
    }
}

/// Uniform measure over the stored iterates whose step index lies in
/// `steps`, keeping every `stride`-th of them.
pub fn build_measure(traj: &Trajectory, steps: impl RangeBounds<usize>, stride: usize) -> Result<EmpiricalMeasure> {
    if stride == 0 {
        return Err(Error::rejected("measure stride must be positive"));
    }
    let last = *traj.stored_steps().last().unwrap();
    let lo = match steps.start_bound() {
        Bound::Included(&s) => s,
        Bound::Excluded(&s) => s + 1,
        Bound::Unbounded => 0,
    };
    let hi = match steps.end_bound() {
        Bound::Included(&e) => Some(e),
        Bound::Excluded(&e) => e.checked_sub(1),
        Bound::Unbounded => Some(last),
    };
    if hi.is_some_and(|h| h > last) {
        return Err(Error::rejected(format!("step range ends past the trajectory's last step {last}")));
    }
    let selected: Vec<usize> = match hi {
        Some(hi) => traj
            .stored_steps()
            .iter()
            .enumerate()
            .filter(|(_, &t)| t >= lo && t <= hi)
            .map(|(i, _)| i)
            .step_by(stride)
            .collect(),
        None => Vec::new(),
    };
    if selected.is_empty() {
        return Err(Error::rejected("step range selects no stored iterates"));
    }
    let k = selected.len();
    let source = MeasureSource {
        seed: Some(traj.seed()),
        steps: selected.iter().map(|&i| traj.stored_steps()[i]).collect(),
        stride: stride * traj.stride(),
    };
    let atoms = selected.iter().map(|&i| traj.stored(i).to_vec()).collect();
    EmpiricalMeasure::from_raw(atoms, vec![1.0 / k as f64; k], Arc::clone(traj.blocks()), source)
}

/// `φ` at every atom, failing on the first non-finite value.
pub(crate) fn evaluate_atoms(measure: &EmpiricalMeasure, phi: &Observable) -> Result<Vec<f64>> {
    measure
        .atoms()
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let v = phi.eval(a)?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::NonFiniteObservable {
                    name: phi.name().to_string(),
                    index: i,
                })
            }
        })
        .collect()
}

/// `μ(φ) = Σ wᵢ φ(θᵢ)`.
pub fn time_average(measure: &EmpiricalMeasure, phi: &Observable) -> Result<f64> {
    let values = evaluate_atoms(measure, phi)?;
    Ok(values
        .iter()
        .zip(measure.weights())
        .map(|(v, w)| v * w)
        .collect::<NeumaierSum>()
        .value())
}
