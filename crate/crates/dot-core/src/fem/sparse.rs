//! Sparse symmetric matrices, a banded Cholesky factorization (default
//! direct solver; structured meshes have small bandwidth under row-major node
//! numbering) and a conjugate-gradient fallback with incomplete-Cholesky
//! preconditioning.

use crate::{DotError, Result};

/// Compressed sparse row matrix (full symmetric storage).
#[derive(Debug, Clone)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl Csr {
    /// Builds from unordered (i, j, v) triplets, summing duplicates.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Csr {
        let mut counts = vec![0usize; n + 1];
        for &(i, _, _) in triplets {
            counts[i + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        // the insertion index tie-break keeps duplicate summation order
        // identical for (i, j) and (j, i), so symmetric assembly stays exact
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_unstable_by_key(|&k| (triplets[k].0, triplets[k].1, k));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for k in order {
            let (i, j, v) = triplets[k];
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Csr {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[i] = acc;
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        for k in self.row_ptr[i]..self.row_ptr[i + 1] {
            if self.col_idx[k] == j {
                return self.values[k];
            }
        }
        0.0
    }

    /// Largest absolute asymmetry `max |A - A^T|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                worst = worst.max((self.values[k] - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn bandwidth(&self) -> usize {
        let mut bw = 0usize;
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                bw = bw.max(i.abs_diff(self.col_idx[k]));
            }
        }
        bw
    }
}

/// Banded Cholesky factorization `A = L L^T` of an SPD matrix.
pub struct BandCholesky {
    n: usize,
    bw: usize,
    /// Row-major lower band: entry (i, j) with `i - bw <= j <= i` lives at
    /// `i * (bw + 1) + (j - i + bw)`.
    band: Vec<f64>,
}

impl BandCholesky {
    pub fn new(a: &Csr) -> Result<BandCholesky> {
        let n = a.n;
        let bw = a.bandwidth();
        let stride = bw + 1;
        let mut band = vec![0.0; n * stride];
        for i in 0..n {
            for k in a.row_ptr[i]..a.row_ptr[i + 1] {
                let j = a.col_idx[k];
                if j <= i {
                    band[i * stride + (j + bw - i)] = a.values[k];
                }
            }
        }
        // in-place banded LL^T
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..i {
                let mut s = band[i * stride + (j + bw - i)];
                let kmin = lo.max(j.saturating_sub(bw));
                for k in kmin..j {
                    s -= band[i * stride + (k + bw - i)] * band[j * stride + (k + bw - j)];
                }
                band[i * stride + (j + bw - i)] = s / band[j * stride + bw];
            }
            let mut d = band[i * stride + bw];
            for k in lo..i {
                let l = band[i * stride + (k + bw - i)];
                d -= l * l;
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(DotError::Solver(format!(
                    "matrix not positive definite at pivot {i} (d = {d})"
                )));
            }
            band[i * stride + bw] = d.sqrt();
        }
        Ok(BandCholesky { n, bw, band })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let (n, bw, stride) = (self.n, self.bw, self.bw + 1);
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut s = x[i];
            for k in lo..i {
                s -= self.band[i * stride + (k + bw - i)] * x[k];
            }
            x[i] = s / self.band[i * stride + bw];
        }
        for i in (0..n).rev() {
            let hi = (i + bw).min(n - 1);
            let mut s = x[i];
            for k in (i + 1)..=hi {
                s -= self.band[k * stride + (i + bw - k)] * x[k];
            }
            x[i] = s / self.band[i * stride + bw];
        }
    }
}

/// Zero-fill incomplete Cholesky preconditioner on the lower triangle.
pub struct IncompleteCholesky {
    lower: Csr,
}

impl IncompleteCholesky {
    pub fn new(a: &Csr) -> Result<IncompleteCholesky> {
        // extract lower triangle pattern
        let mut trip = Vec::new();
        for i in 0..a.n {
            for k in a.row_ptr[i]..a.row_ptr[i + 1] {
                let j = a.col_idx[k];
                if j <= i {
                    trip.push((i, j, a.values[k]));
                }
            }
        }
        let mut l = Csr::from_triplets(a.n, &trip);
        for i in 0..l.n {
            let row = l.row_ptr[i]..l.row_ptr[i + 1];
            let (diag_pos, mut diag) = {
                let k = row.end - 1;
                debug_assert_eq!(l.col_idx[k], i);
                (k, l.values[k])
            };
            for k in row.start..diag_pos {
                let j = l.col_idx[k];
                let mut s = l.values[k];
                // sparse dot of rows i and j over columns < j
                let (mut p, mut q) = (l.row_ptr[i], l.row_ptr[j]);
                while p < diag_pos && q < l.row_ptr[j + 1] - 1 {
                    let (cj, ck) = (l.col_idx[p], l.col_idx[q]);
                    if cj == ck {
                        if cj >= j {
                            break;
                        }
                        s -= l.values[p] * l.values[q];
                        p += 1;
                        q += 1;
                    } else if cj < ck {
                        p += 1;
                    } else {
                        q += 1;
                    }
                }
                let djj = l.values[l.row_ptr[j + 1] - 1];
                l.values[k] = s / djj;
                diag -= l.values[k] * l.values[k];
            }
            if diag <= 0.0 {
                return Err(DotError::Solver(format!("IC(0) breakdown at row {i}")));
            }
            l.values[diag_pos] = diag.sqrt();
        }
        Ok(IncompleteCholesky { lower: l })
    }

    /// Applies `(L L^T)^{-1}`.
    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        let l = &self.lower;
        z.copy_from_slice(r);
        for i in 0..l.n {
            let end = l.row_ptr[i + 1] - 1;
            let mut s = z[i];
            for k in l.row_ptr[i]..end {
                s -= l.values[k] * z[l.col_idx[k]];
            }
            z[i] = s / l.values[end];
        }
        for i in (0..l.n).rev() {
            let end = l.row_ptr[i + 1] - 1;
            z[i] /= l.values[end];
            let zi = z[i];
            for k in l.row_ptr[i]..end {
                z[l.col_idx[k]] -= l.values[k] * zi;
            }
        }
    }
}

/// Preconditioned conjugate gradients; returns (solution, final relative
/// residual, iterations).
pub fn solve_cg(
    a: &Csr,
    rhs: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, f64, usize)> {
    let pc = IncompleteCholesky::new(a)?;
    let n = a.n;
    let norm_b = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm_b == 0.0 {
        return Ok((vec![0.0; n], 0.0, 0));
    }
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut z = vec![0.0; n];
    pc.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    for it in 0..max_iter {
        a.matvec(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let res = r.iter().map(|v| v * v).sum::<f64>().sqrt() / norm_b;
        if res <= tol {
            return Ok((x, res, it + 1));
        }
        pc.apply(&r, &mut z);
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(DotError::Solver(format!(
        "CG did not reach tolerance {tol} in {max_iter} iterations"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn laplacian_1d(n: usize) -> Csr {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        Csr::from_triplets(n, &t)
    }

    #[test]
    fn cholesky_solves_tridiagonal() {
        let a = laplacian_1d(50);
        let x_true: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut b = vec![0.0; 50];
        a.matvec(&x_true, &mut b);
        let chol = BandCholesky::new(&a).unwrap();
        let x = chol.solve(&b);
        for (xa, xb) in x.iter().zip(&x_true) {
            assert_relative_eq!(xa, xb, max_relative = 1e-10);
        }
    }

    #[test]
    fn cg_matches_direct() {
        let a = laplacian_1d(80);
        let b: Vec<f64> = (0..80).map(|i| ((i * 7 % 13) as f64) - 6.0).collect();
        let direct = BandCholesky::new(&a).unwrap().solve(&b);
        let (x, res, _) = solve_cg(&a, &b, 1e-12, 1000).unwrap();
        assert!(res <= 1e-12);
        for (xa, xb) in x.iter().zip(&direct) {
            assert_relative_eq!(xa, xb, max_relative = 1e-8, epsilon = 1e-10);
        }
    }

    #[test]
    fn rejects_indefinite() {
        let a = Csr::from_triplets(2, &[(0, 0, 1.0), (1, 1, -1.0)]);
        assert!(BandCholesky::new(&a).is_err());
    }

    #[test]
    fn duplicate_triplets_sum() {
        let a = Csr::from_triplets(2, &[(0, 0, 1.0), (0, 0, 2.5), (1, 1, 1.0)]);
        assert_eq!(a.get(0, 0), 3.5);
    }
}
