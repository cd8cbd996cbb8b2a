//! Independent oracles for the numerical tests. Nothing here calls the
//! routines it is used to check.
#![allow(dead_code)]

use ergodyn::objectives::Objective;

/// Central-difference gradient with step `h` per coordinate.
pub fn fd_gradient(obj: &dyn Objective, theta: &[f64], batch: &[usize], h: f64) -> Vec<f64> {
    let mut t = theta.to_vec();
    (0..theta.len())
        .map(|k| {
            let orig = t[k];
            t[k] = orig + h;
            let fp = obj.loss(&t, batch).unwrap();
            t[k] = orig - h;
            let fm = obj.loss(&t, batch).unwrap();
            t[k] = orig;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Dense Hessian by central differences of the analytic gradient, column by
/// column, then symmetrized. O(p) gradient pairs.
pub fn fd_hessian(obj: &dyn Objective, theta: &[f64], batch: &[usize], h: f64) -> Vec<f64> {
    let p = theta.len();
    let mut hess = vec![0.0; p * p];
    let mut t = theta.to_vec();
    let mut gp = vec![0.0; p];
    let mut gm = vec![0.0; p];
    for k in 0..p {
        let orig = t[k];
        t[k] = orig + h;
        obj.loss_grad(&t, batch, &mut gp).unwrap();
        t[k] = orig - h;
        obj.loss_grad(&t, batch, &mut gm).unwrap();
        t[k] = orig;
        for i in 0..p {
            hess[i * p + k] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    for i in 0..p {
        for j in 0..i {
            let s = 0.5 * (hess[i * p + j] + hess[j * p + i]);
            hess[i * p + j] = s;
            hess[j * p + i] = s;
        }
    }
    hess
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(a: &[f64], n: usize) -> Vec<f64> {
    let mut a = a.to_vec();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum();
        let diag: f64 = (0..n).map(|i| a[i * n + i] * a[i * n + i]).sum();
        if off <= 1e-30 * diag.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i * n + i]).collect()
}

/// Largest-magnitude eigenvalue of a symmetric matrix.
pub fn dominant_abs_eigenvalue(a: &[f64], n: usize) -> f64 {
    jacobi_eigenvalues(a, n).into_iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Singular values by one-sided (Hestenes) Jacobi on the columns of a
/// row-major `rows × cols` matrix, sorted descending.
pub fn jacobi_singular_values(w: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    // Work on columns of Wᵀ if that is the wider side; singular values agree.
    let (m, n, mut cols_data) = if rows >= cols {
        let c: Vec<Vec<f64>> = (0..cols).map(|j| (0..rows).map(|i| w[i * cols + j]).collect()).collect();
        (rows, cols, c)
    } else {
        let c: Vec<Vec<f64>> = (0..rows).map(|i| w[i * cols..(i + 1) * cols].to_vec()).collect();
        (cols, rows, c)
    };
    let _ = m;
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = cols_data[p].iter().map(|x| x * x).sum();
                let beta: f64 = cols_data[q].iter().map(|x| x * x).sum();
                let gamma: f64 = cols_data[p].iter().zip(&cols_data[q]).map(|(x, y)| x * y).sum();
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (left, right) = cols_data.split_at_mut(q);
                for (x, y) in left[p].iter_mut().zip(right[0].iter_mut()) {
                    let (a, b) = (*x, *y);
                    *x = c * a - s * b;
                    *y = s * a + c * b;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = cols_data.iter().map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}
