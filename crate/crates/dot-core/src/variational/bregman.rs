//! Bregman iterations with l1 regularization.
//!
//! Outer loop (`p^0 = 0`, `d^0 = 0`):
//!
//! ```text
//! d^{k+1} = argmin_d 1/2 ||J d - b||^2 + alpha ||d||_1 - alpha <p^k, d>
//! p^{k+1} = p^k - (1/alpha) J^T (J d^{k+1} - b)
//! ```
//!
//! so the first iterate is the plain lasso solution at `alpha`. The inner
//! problem is solved by FISTA with a power-iteration step size. Many
//! right-hand sides sharing one `J` run as a batch so the matrix is streamed
//! once per iteration instead of once per sample.

use super::{BregmanConfig, Reconstruction};
use crate::dense::DenseMatrix;
use crate::{DotError, Result};

/// Per-outer-iteration record.
#[derive(Debug, Clone)]
pub struct BregmanHistory {
    /// `||J d^k - b||` after each outer step.
    pub residuals: Vec<f64>,
    /// `max |d^k|` after each outer step.
    pub peak: Vec<f64>,
    pub outer_iterations: usize,
    pub stopped_by_discrepancy: bool,
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Single right-hand-side solve.
pub fn bregman_solve(
    j: &DenseMatrix,
    b: &[f64],
    cfg: &BregmanConfig,
    mu_a0: f64,
) -> Result<(Reconstruction, BregmanHistory)> {
    let mut out = bregman_solve_batch(j, std::slice::from_ref(&b.to_vec()), cfg, mu_a0)?;
    Ok(out.remove(0))
}

/// Batched solve for right-hand sides sharing one system matrix.
pub fn bregman_solve_batch(
    j: &DenseMatrix,
    bs: &[Vec<f64>],
    cfg: &BregmanConfig,
    mu_a0: f64,
) -> Result<Vec<(Reconstruction, BregmanHistory)>> {
    if cfg.alpha <= 0.0 {
        return Err(DotError::Config("bregman alpha must be positive".into()));
    }
    for b in bs {
        if b.len() != j.rows {
            return Err(DotError::ShapeMismatch(format!(
                "rhs has {} entries for {} rows",
                b.len(),
                j.rows
            )));
        }
    }
    let n = bs.len();
    let (m, v) = (j.rows, j.cols);
    let lip = j.spectral_norm(100).powi(2).max(1e-300);
    let step = 1.0 / (1.01 * lip);
    let alpha = cfg.alpha;

    // samples as rows: X (n x v), residual R (n x m)
    let mut x = DenseMatrix::zeros(n, v);
    let mut p = DenseMatrix::zeros(n, v);
    let mut histories: Vec<BregmanHistory> = (0..n)
        .map(|_| BregmanHistory {
            residuals: Vec::new(),
            peak: Vec::new(),
            outer_iterations: 0,
            stopped_by_discrepancy: false,
        })
        .collect();
    let mut active: Vec<bool> = bs
        .iter()
        .map(|b| b.iter().any(|&x| x != 0.0))
        .collect();
    // zero data keeps iterates at zero; record flat histories for those
    let threshold = cfg
        .noise_norm
        .map(|nn| cfg.discrepancy_tau * nn)
        .unwrap_or(-1.0);

    let mut y = x.clone();
    let mut x_prev = x.clone();
    let mut r = DenseMatrix::zeros(n, m);
    let mut grad = DenseMatrix::zeros(n, v);

    // R = Y J^T - B (uses J with swapped strides as its transpose)
    let residual_at = |y: &DenseMatrix, r: &mut DenseMatrix| {
        unsafe {
            matrixmultiply::dgemm(
                n,
                v,
                m,
                1.0,
                y.data.as_ptr(),
                v as isize,
                1,
                j.data.as_ptr(),
                1,
                v as isize,
                0.0,
                r.data.as_mut_ptr(),
                m as isize,
                1,
            );
        }
        for (s, b) in bs.iter().enumerate() {
            for (ri, bi) in r.row_mut(s).iter_mut().zip(b) {
                *ri -= bi;
            }
        }
    };
    // G = R J
    let grad_at = |r: &DenseMatrix, grad: &mut DenseMatrix| unsafe {
        matrixmultiply::dgemm(
            n,
            m,
            v,
            1.0,
            r.data.as_ptr(),
            m as isize,
            1,
            j.data.as_ptr(),
            v as isize,
            1,
            0.0,
            grad.data.as_mut_ptr(),
            v as isize,
            1,
        );
    };

    for outer in 0..cfg.outer_iters {
        if !active.iter().any(|&a| a) {
            break;
        }
        // FISTA on the shifted-l1 inner problem, warm-started from x
        y.data.copy_from_slice(&x.data);
        x_prev.data.copy_from_slice(&x.data);
        let mut t = 1.0f64;
        for _ in 0..cfg.inner_max_iter {
            residual_at(&y, &mut r);
            grad_at(&r, &mut grad);
            let mut moved = 0.0f64;
            for s in 0..n {
                if !active[s] {
                    continue;
                }
                let xp = x_prev.row_mut(s);
                let yrow = &y.data[s * v..(s + 1) * v];
                let grow = &grad.data[s * v..(s + 1) * v];
                let prow = &p.data[s * v..(s + 1) * v];
                let xrow = &mut x.data[s * v..(s + 1) * v];
                for i in 0..v {
                    xp[i] = xrow[i];
                    let z = yrow[i] - step * (grow[i] - alpha * prow[i]);
                    let nx = soft_threshold(z, step * alpha);
                    moved = moved.max((nx - xrow[i]).abs());
                    xrow[i] = nx;
                }
            }
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = (t - 1.0) / t_next;
            t = t_next;
            let scale: f64 = x.data.iter().fold(1.0f64, |a, &b| a.max(b.abs()));
            for s in 0..n {
                if !active[s] {
                    continue;
                }
                let base = s * v;
                for i in 0..v {
                    y.data[base + i] =
                        x.data[base + i] + beta * (x.data[base + i] - x_prev.data[base + i]);
                }
            }
            if moved <= cfg.inner_tol * scale {
                break;
            }
        }
        // dual update and bookkeeping on the converged iterate
        residual_at(&x, &mut r);
        grad_at(&r, &mut grad);
        for s in 0..n {
            if !active[s] {
                continue;
            }
            let h = &mut histories[s];
            let res = r.row(s).iter().map(|x| x * x).sum::<f64>().sqrt();
            let peak = x.row(s).iter().fold(0.0f64, |a, &b| a.max(b.abs()));
            h.residuals.push(res);
            h.peak.push(peak);
            h.outer_iterations = outer + 1;
            if threshold >= 0.0 && res <= threshold {
                h.stopped_by_discrepancy = true;
                active[s] = false;
                continue;
            }
            let base = s * v;
            for i in 0..v {
                p.data[base + i] -= grad.data[base + i] / alpha;
            }
        }
    }

    Ok((0..n)
        .map(|s| {
            let delta = x.row(s).to_vec();
            let h = histories[s].clone();
            let res = *h.residuals.last().unwrap_or(&0.0);
            let rec = Reconstruction::from_delta(
                delta,
                mu_a0,
                cfg.alpha,
                h.outer_iterations,
                true,
                res,
            );
            (rec, h)
        })
        .collect())
}
