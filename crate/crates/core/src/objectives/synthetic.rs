//! Closed-form objectives with a single "example".

use std::sync::Arc;

use super::{check_batch, check_theta, Block, Objective};
use crate::error::{Error, Result};

/// Value, gradient and Hessian of `A·sin θ₁·sin θ₂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinProductEval {
    pub value: f64,
    pub grad: [f64; 2],
    pub hessian: [[f64; 2]; 2],
}

/// Closed form of `100·sin θ₁·sin θ₂`, whose smoothness and Lipschitz
/// constants are both 100.
pub fn sin_product_eval(theta: [f64; 2]) -> SinProductEval {
    SinProduct::default().eval(theta)
}

/// `amplitude · sin θ₁ · sin θ₂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinProduct {
    pub amplitude: f64,
}

impl Default for SinProduct {
    fn default() -> Self {
        Self { amplitude: 100.0 }
    }
}

impl SinProduct {
    pub fn eval(&self, theta: [f64; 2]) -> SinProductEval {
        let a = self.amplitude;
        let (s1, c1) = theta[0].sin_cos();
        let (s2, c2) = theta[1].sin_cos();
        SinProductEval {
            value: a * s1 * s2,
            grad: [a * c1 * s2, a * s1 * c2],
            hessian: [[-a * s1 * s2, a * c1 * c2], [a * c1 * c2, -a * s1 * s2]],
        }
    }
}

impl Objective for SinProduct {
    fn blocks(&self) -> Arc<[Block]> {
        Arc::from(vec![Block::Vector { len: 2 }])
    }

    fn num_examples(&self) -> usize {
        1
    }

    fn loss(&self, theta: &[f64], batch: &[usize]) -> Result<f64> {
        check_theta(theta, 2)?;
        check_batch(batch, 1)?;
        Ok(self.eval([theta[0], theta[1]]).value)
    }

    fn loss_grad(&self, theta: &[f64], batch: &[usize], grad: &mut [f64]) -> Result<f64> {
        check_theta(theta, 2)?;
        check_batch(batch, 1)?;
        let e = self.eval([theta[0], theta[1]]);
        grad.copy_from_slice(&e.grad);
        Ok(e.value)
    }

    fn describe(&self) -> String {
        format!("sin_product(amplitude={})", self.amplitude)
    }
}

/// `½ θᵀAθ` for a symmetric matrix `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    n: usize,
    matrix: Vec<f64>,
}

impl Quadratic {
    /// Row-major symmetric `n × n` matrix.
    pub fn new(n: usize, matrix: Vec<f64>) -> Result<Self> {
        if n == 0 || matrix.len() != n * n {
            return Err(Error::config(format!(
                "quadratic needs an {n}×{n} matrix, got {} entries",
                matrix.len()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("quadratic matrix"));
        }
        for i in 0..n {
            for j in 0..i {
                let (a, b) = (matrix[i * n + j], matrix[j * n + i]);
                if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                    return Err(Error::config(format!("matrix not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(Self { n, matrix })
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        let n = diag.len();
        let mut m = vec![0.0; n * n];
        for (i, d) in diag.iter().enumerate() {
            m[i * n + i] = *d;
        }
        Self::new(n, m)
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    fn apply(&self, theta: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.matrix[i * self.n..(i + 1) * self.n];
            *o = crate::numeric::dot(row, theta);
        }
    }
}

impl Objective for Quadratic {
    fn blocks(&self) -> Arc<[Block]> {
        Arc::from(vec![Block::Vector { len: self.n }])
    }

    fn num_examples(&self) -> usize {
        1
    }

    fn loss(&self, theta: &[f64], batch: &[usize]) -> Result<f64> {
        let mut g = vec![0.0; self.n];
        self.loss_grad(theta, batch, &mut g)
    }

    fn loss_grad(&self, theta: &[f64], batch: &[usize], grad: &mut [f64]) -> Result<f64> {
        check_theta(theta, self.n)?;
        check_batch(batch, 1)?;
        self.apply(theta, grad);
        Ok(0.5 * crate::numeric::dot(theta, grad))
    }

    fn describe(&self) -> String {
        format!("quadratic(n={})", self.n)
    }
}

/// Identically zero loss over a given layout.
#[derive(Debug, Clone)]
pub struct ZeroObjective {
    blocks: Arc<[Block]>,
}

impl ZeroObjective {
    pub fn new(blocks: Vec<Block>) -> Self {
        Self {
            blocks: Arc::from(blocks),
        }
    }
}

impl Objective for ZeroObjective {
    fn blocks(&self) -> Arc<[Block]> {
        Arc::clone(&self.blocks)
    }

    fn num_examples(&self) -> usize {
        1
    }

    fn loss(&self, theta: &[f64], batch: &[usize]) -> Result<f64> {
        check_theta(theta, self.dim())?;
        check_batch(batch, 1)?;
        Ok(0.0)
    }

    fn loss_grad(&self, theta: &[f64], batch: &[usize], grad: &mut [f64]) -> Result<f64> {
        check_theta(theta, self.dim())?;
        check_batch(batch, 1)?;
        grad.fill(0.0);
        Ok(0.0)
    }

    fn describe(&self) -> String {
        "zero".to_string()
    }
}
