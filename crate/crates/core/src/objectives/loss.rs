//! Cross-entropy after softmax.
//!
//! [`cross_entropy`] evaluates the log-likelihood form `x_y − log Σⱼ e^{x_j}`,
//! which is non-positive. Training minimizes its negation,
//! [`training_cross_entropy`]. Absolute values and gradient norms coincide.

use crate::error::{Error, Result};

fn check_logits(logits: &[f64], label: usize) -> Result<()> {
    if logits.len() < 2 {
        return Err(Error::rejected(format!(
            "cross-entropy needs at least 2 classes, got {}",
            logits.len()
        )));
    }
    if label >= logits.len() {
        return Err(Error::rejected(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::rejected("non-finite logits"));
    }
    Ok(())
}

/// Max-shifted log-sum-exp.
fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `ℓ(x, y) = x_y − log Σⱼ e^{x_j}` and its gradient `δ_{y,k} − softmax(x)_k`.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    check_logits(logits, label)?;
    let mut grad = vec![0.0; logits.len()];
    let value = -nll(logits, label, Some(&mut grad));
    grad.iter_mut().for_each(|g| *g = -*g);
    Ok((value, grad))
}

/// `log Σⱼ e^{x_j} − x_y`; writes `softmax(x) − e_y` into `grad` when given.
pub fn training_cross_entropy(logits: &[f64], label: usize, grad: Option<&mut [f64]>) -> Result<f64> {
    check_logits(logits, label)?;
    Ok(nll(logits, label, grad))
}

/// Unchecked training-sign cross-entropy for the network hot paths.
pub(crate) fn nll(logits: &[f64], label: usize, grad: Option<&mut [f64]>) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    match grad {
        None => log_sum_exp(logits) - logits[label],
        Some(g) => {
            let mut total = 0.0;
            for (gk, x) in g.iter_mut().zip(logits) {
                *gk = (x - max).exp();
                total += *gk;
            }
            for gk in g.iter_mut() {
                *gk /= total;
            }
            g[label] -= 1.0;
            max + total.ln() - logits[label]
        }
    }
}
