use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::objectives::{full_batch, Objective};

type ObservableFn = dyn Fn(&[f64]) -> Result<f64> + Send + Sync;

/// A named scalar function of the parameters, optionally with a known
/// bound `|φ| ≤ M` on the region of interest.
#[derive(Clone)]
pub struct Observable {
    name: String,
    bound: Option<f64>,
    f: Arc<ObservableFn>,
}

impl fmt::Debug for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Observable")
            .field("name", &self.name)
            .field("bound", &self.bound)
            .finish_non_exhaustive()
    }
}

impl Observable {
    pub fn new(name: impl Into<String>, f: impl Fn(&[f64]) -> Result<f64> + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            bound: None,
            f: Arc::new(f),
        }
    }

    /// Declares `|φ| ≤ bound`.
    pub fn with_bound(mut self, bound: f64) -> Self {
        self.bound = Some(bound);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn bound(&self) -> Option<f64> {
        self.bound
    }

    pub fn eval(&self, theta: &[f64]) -> Result<f64> {
        (self.f)(theta)
    }

    /// Full-dataset loss of `obj`.
    pub fn loss(obj: Arc<dyn Objective>) -> Self {
        let batch = full_batch(obj.num_examples());
        Self::new("loss", move |t| obj.loss(t, &batch))
    }

    /// Loss of `obj` on a fixed subset of examples.
    pub fn subset_loss(obj: Arc<dyn Objective>, indices: Vec<usize>) -> Self {
        let name = format!("loss_on_{}_examples", indices.len());
        Self::new(name, move |t| obj.loss(t, &indices))
    }

    /// `‖∇L(θ)‖²` over the full dataset.
    pub fn grad_norm_squared(obj: Arc<dyn Objective>) -> Self {
        let batch = full_batch(obj.num_examples());
        Self::new("grad_norm_squared", move |t| {
            let mut g = vec![0.0; t.len()];
            obj.loss_grad(t, &batch, &mut g)?;
            Ok(crate::numeric::dot(&g, &g))
        })
    }

    /// `‖∇L(θ)‖` over the full dataset.
    pub fn grad_norm(obj: Arc<dyn Objective>) -> Self {
        let sq = Self::grad_norm_squared(obj);
        Self::new("grad_norm", move |t| sq.eval(t).map(f64::sqrt))
    }

    /// `θ[index]`.
    pub fn coordinate(index: usize) -> Self {
        Self::new(format!("coordinate_{index}"), move |t| {
            t.get(index)
                .copied()
                .ok_or_else(|| Error::rejected(format!("coordinate {index} out of range for dimension {}", t.len())))
        })
    }

    pub fn constant(value: f64) -> Self {
        Self::new(format!("constant_{value}"), move |_| Ok(value)).with_bound(value.abs())
    }
}
