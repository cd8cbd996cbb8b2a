use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Block, ParamVector};
use crate::error::{Error, Result};
use crate::numeric;

const OPNORM_TOL: f64 = 1e-10;
const OPNORM_MAX_ITERS: usize = 1000;
const OPNORM_START_SEED: u64 = 0x0bad_5eed;

/// Largest singular value estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorNorm {
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Spectral norm of a row-major `rows × cols` matrix.
///
/// Power iteration on the smaller Gram matrix (`WᵀW` or `WWᵀ`) from a fixed
/// seeded start vector, stopping once the Rayleigh quotient changes by at
/// most `1e-10` relative, or after 1000 iterations with `converged = false`.
pub fn operator_norm(w: &[f64], rows: usize, cols: usize) -> Result<OperatorNorm> {
    if w.len() != rows * cols {
        return Err(Error::config(format!(
            "{} entries do not form a {rows}×{cols} matrix",
            w.len()
        )));
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::non_finite("matrix for operator norm"));
    }
    if rows == 0 || cols == 0 {
        return Ok(OperatorNorm {
            value: 0.0,
            converged: true,
            iterations: 0,
        });
    }
    let gram = gram_of_smaller_side(w, rows, cols);
    let k = rows.min(cols);
    if k == 1 {
        return Ok(OperatorNorm {
            value: gram[0].sqrt(),
            converged: true,
            iterations: 0,
        });
    }
    if gram.iter().all(|&g| g == 0.0) {
        return Ok(OperatorNorm {
            value: 0.0,
            converged: true,
            iterations: 0,
        });
    }

    let mut rng = crate::rng::rng_from_seed(OPNORM_START_SEED);
    let mut v: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
    let n = numeric::norm(&v);
    v.iter_mut().for_each(|x| *x /= n);
    let mut y = vec![0.0; k];
    let mut lambda = f64::NAN;
    for it in 1..=OPNORM_MAX_ITERS {
        sym_matvec(&gram, k, &v, &mut y);
        let next = numeric::dot(&v, &y);
        let ny = numeric::norm(&y);
        if ny == 0.0 {
            // Start vector in the null space; fall back to the largest diagonal axis.
            let j = (0..k).max_by(|&a, &b| gram[a * k + a].total_cmp(&gram[b * k + b])).unwrap();
            v.fill(0.0);
            v[j] = 1.0;
            continue;
        }
        for (vi, yi) in v.iter_mut().zip(&y) {
            *vi = yi / ny;
        }
        if lambda.is_finite() && (next - lambda).abs() <= OPNORM_TOL * next.abs() {
            return Ok(OperatorNorm {
                value: next.max(0.0).sqrt(),
                converged: true,
                iterations: it,
            });
        }
        lambda = next;
    }
    Ok(OperatorNorm {
        value: lambda.max(0.0).sqrt(),
        converged: false,
        iterations: OPNORM_MAX_ITERS,
    })
}

/// Operator norm of matrix block `block` of `theta`.
pub fn matrix_operator_norm(theta: &ParamVector, block: usize) -> Result<OperatorNorm> {
    match theta.blocks().get(block) {
        Some(&Block::Matrix { rows, cols }) => operator_norm(theta.block(block), rows, cols),
        Some(Block::Vector { .. }) => Err(Error::config(format!("block {block} is not a matrix"))),
        None => Err(Error::config(format!("no block {block}"))),
    }
}

fn gram_of_smaller_side(w: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    if rows <= cols {
        // W Wᵀ, rows × rows
        let mut g = vec![0.0; rows * rows];
        for i in 0..rows {
            for j in 0..=i {
                let v = numeric::dot(&w[i * cols..(i + 1) * cols], &w[j * cols..(j + 1) * cols]);
                g[i * rows + j] = v;
                g[j * rows + i] = v;
            }
        }
        g
    } else {
        // Wᵀ W, cols × cols
        let mut g = vec![0.0; cols * cols];
        for r in 0..rows {
            let row = &w[r * cols..(r + 1) * cols];
            for i in 0..cols {
                let ri = row[i];
                if ri == 0.0 {
                    continue;
                }
                for j in 0..=i {
                    g[i * cols + j] += ri * row[j];
                }
            }
        }
        for i in 0..cols {
            for j in 0..i {
                g[j * cols + i] = g[i * cols + j];
            }
        }
        g
    }
}

fn sym_matvec(a: &[f64], k: usize, v: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = numeric::dot(&a[i * k..(i + 1) * k], v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_has_unit_norm() {
        let r = operator_norm(&[1.0, 0.0, 0.0, 1.0], 2, 2).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
        assert!(r.converged);
    }

    #[test]
    fn diagonal_uses_largest_magnitude() {
        let r = operator_norm(&[3.0, 0.0, 0.0, -4.0], 2, 2).unwrap();
        assert!((r.value - 4.0).abs() < 1e-9, "{}", r.value);
    }

    #[test]
    fn vectors_and_zero_matrices() {
        assert_eq!(operator_norm(&[3.0, 4.0], 1, 2).unwrap().value, 5.0);
        assert_eq!(operator_norm(&[3.0, 4.0], 2, 1).unwrap().value, 5.0);
        assert_eq!(operator_norm(&[0.0; 6], 2, 3).unwrap().value, 0.0);
    }

    #[test]
    fn rank_one_outer_product() {
        // u vᵀ has operator norm ‖u‖‖v‖.
        let u = [1.0, 2.0, 2.0];
        let v = [0.6, 0.8];
        let w: Vec<f64> = u.iter().flat_map(|a| v.iter().map(move |b| a * b)).collect();
        let r = operator_norm(&w, 3, 2).unwrap();
        assert!((r.value - 3.0).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_config_error() {
        assert!(matches!(operator_norm(&[1.0; 5], 2, 3), Err(Error::Config(_))));
    }
}
