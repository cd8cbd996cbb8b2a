use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{dot, norm};
use crate::objectives::{hvp_into, Objective, HVP_EPS};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerIteration {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for PowerIteration {
    fn default() -> Self {
        Self { tol: 1e-6, max_iters: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sharpness {
    /// Dominant eigenvalue magnitude carrying the Rayleigh quotient's sign.
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl Sharpness {
    pub fn magnitude(&self) -> f64 {
        self.value.abs()
    }
}

/// Dominant Hessian eigenvalue by power iteration on Hessian-vector products.
///
/// The magnitude estimate is `‖Hv‖` for the current unit vector, which
/// converges even when `±λ` are both dominant; iteration stops once it
/// changes by at most `tol` relative.
pub fn sharpness(obj: &dyn Objective, theta: &[f64], batch: &[usize], config: PowerIteration, rng: &mut Rng) -> Result<Sharpness> {
    if config.max_iters == 0 {
        return Err(Error::rejected("power iteration needs at least one iteration"));
    }
    let p = theta.len();
    let mut v: Vec<f64> = (0..p).map(|_| StandardNormal.sample(rng)).collect();
    let n0 = norm(&v);
    v.iter_mut().for_each(|x| *x /= n0);
    let mut w = vec![0.0; p];
    let mut prev = f64::NAN;
    let mut rayleigh = 0.0;
    for it in 1..=config.max_iters {
        hvp_into(obj, theta, &v, batch, HVP_EPS, &mut w)?;
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::non_finite("Hessian-vector product"));
        }
        rayleigh = dot(&v, &w);
        let est = norm(&w);
        if est == 0.0 {
            return Ok(Sharpness { value: 0.0, converged: true, iterations: it });
        }
        let converged = (est - prev).abs() <= config.tol * prev;
        prev = est;
        v.iter_mut().zip(&w).for_each(|(vi, wi)| *vi = wi / est);
        if converged {
            return Ok(Sharpness { value: est.copysign(rayleigh), converged: true, iterations: it });
        }
    }
    Ok(Sharpness { value: prev.copysign(rayleigh), converged: false, iterations: config.max_iters })
}
