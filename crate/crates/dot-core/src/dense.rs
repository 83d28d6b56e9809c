//! Small dense matrix type backing the sensitivity matrix and the
//! variational solvers.

/// Row-major dense `f64` matrix.
#[derive(Debug, Clone)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c);
            data.extend_from_slice(&row);
        }
        DenseMatrix { rows: r, cols: c, data }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(y.len(), self.rows);
        for i in 0..self.rows {
            let row = self.row(i);
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x) {
                acc += a * b;
            }
            y[i] = acc;
        }
    }

    /// `y = A^T x`.
    pub fn t_matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.rows);
        assert_eq!(y.len(), self.cols);
        y.fill(0.0);
        for i in 0..self.rows {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            let row = self.row(i);
            for (yj, a) in y.iter_mut().zip(row) {
                *yj += xi * a;
            }
        }
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    /// `C = A^T A` via dgemm.
    pub fn gram(&self) -> DenseMatrix {
        let t = self.transpose();
        let mut c = DenseMatrix::zeros(self.cols, self.cols);
        unsafe {
            matrixmultiply::dgemm(
                self.cols,
                self.rows,
                self.cols,
                1.0,
                t.data.as_ptr(),
                self.rows as isize,
                1,
                self.data.as_ptr(),
                self.cols as isize,
                1,
                0.0,
                c.data.as_mut_ptr(),
                self.cols as isize,
                1,
            );
        }
        c
    }

    /// `C = A B` via dgemm.
    pub fn matmul(&self, b: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, b.rows);
        let mut c = DenseMatrix::zeros(self.rows, b.cols);
        unsafe {
            matrixmultiply::dgemm(
                self.rows,
                self.cols,
                b.cols,
                1.0,
                self.data.as_ptr(),
                self.cols as isize,
                1,
                b.data.as_ptr(),
                b.cols as isize,
                1,
                0.0,
                c.data.as_mut_ptr(),
                b.cols as isize,
                1,
            );
        }
        c
    }

    /// Solves `A x = b` for symmetric positive definite `A` (dense Cholesky).
    pub fn solve_spd(&self, b: &[f64]) -> Option<Vec<f64>> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut l = self.data.clone();
        for i in 0..n {
            for j in 0..=i {
                let mut s = l[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if s <= 0.0 {
                        return None;
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        let mut x = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                x[i] -= l[i * n + k] * x[k];
            }
            x[i] /= l[i * n + i];
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                x[i] -= l[k * n + i] * x[k];
            }
            x[i] /= l[i * n + i];
        }
        Some(x)
    }

    /// Largest singular value estimated by power iteration on `A^T A`.
    pub fn spectral_norm(&self, iters: usize) -> f64 {
        let mut v = vec![1.0; self.cols];
        let mut av = vec![0.0; self.rows];
        let mut atav = vec![0.0; self.cols];
        let mut lambda = 0.0;
        for _ in 0..iters {
            self.matvec(&v, &mut av);
            self.t_matvec(&av, &mut atav);
            lambda = atav.iter().map(|x| x * x).sum::<f64>().sqrt().sqrt();
            let norm = atav.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
            for (vi, ai) in v.iter_mut().zip(&atav) {
                *vi = ai / norm;
            }
        }
        lambda
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn matvec_and_gram_agree() {
        let a = DenseMatrix::from_rows(vec![
            vec![1.0, 2.0, 0.5],
            vec![-1.0, 0.0, 3.0],
            vec![2.0, 1.0, 1.0],
            vec![0.0, -2.0, 1.5],
        ]);
        let g = a.gram();
        // G = A^T A elementwise check
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for r in 0..4 {
                    s += a.at(r, i) * a.at(r, j);
                }
                assert_relative_eq!(g.at(i, j), s, max_relative = 1e-14);
            }
        }
        let x = vec![0.3, -1.0, 2.0];
        let mut y = vec![0.0; 4];
        a.matvec(&x, &mut y);
        let mut back = vec![0.0; 3];
        a.t_matvec(&y, &mut back);
        let mut gx = vec![0.0; 3];
        g.matvec(&x, &mut gx);
        for (u, v) in back.iter().zip(&gx) {
            assert_relative_eq!(u, v, max_relative = 1e-12);
        }
    }

    #[test]
    fn spectral_norm_of_diagonal() {
        let a = DenseMatrix::from_rows(vec![vec![3.0, 0.0], vec![0.0, 1.0]]);
        assert_relative_eq!(a.spectral_norm(50), 3.0, max_relative = 1e-6);
    }
}
