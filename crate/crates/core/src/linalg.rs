//! Dense linear algebra: row-major matrices and LU factorization.
//!
//! The solver stack only needs modest dimensions (a few hundred), so
//! everything here is dense and allocation-simple. The LU factorization
//! supports both `A x = b` and `A^T x = b` solves; the transpose solve is
//! what the simplex pricing step (BTRAN) runs on.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense row-major real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Mat { rows: r, cols: c, data }
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// y = A x
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        let mut y = vec![0.0; self.rows];
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            y[i] = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
        y
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows);
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// LU factorization with partial pivoting: P A = L U.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    /// Combined L (unit lower, below diagonal) and U (upper incl. diagonal).
    lu: Vec<f64>,
    /// Row permutation: pivot row chosen at each elimination step.
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(a: &Mat) -> Result<Lu> {
        if !a.is_square() {
            return Err(Error::Dimension(format!(
                "LU of non-square {}x{}",
                a.rows, a.cols
            )));
        }
        let n = a.rows;
        let mut lu = a.data.clone();
        let mut perm = Vec::with_capacity(n);
        for k in 0..n {
            // partial pivot on column k
            let mut p = k;
            let mut best = lu[k * n + k].abs();
            for i in (k + 1)..n {
                let v = lu[i * n + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best < 1e-13 {
                return Err(Error::Singular(format!("pivot {best:.3e} at column {k}")));
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
            }
            perm.push(p);
            let pivot = lu[k * n + k];
            for i in (k + 1)..n {
                let m = lu[i * n + k] / pivot;
                lu[i * n + k] = m;
                if m != 0.0 {
                    for j in (k + 1)..n {
                        lu[i * n + j] -= m * lu[k * n + j];
                    }
                }
            }
        }
        Ok(Lu { n, lu, perm })
    }

    /// Solve A x = b in place.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        for k in 0..n {
            b.swap(k, self.perm[k]);
            let bk = b[k];
            if bk != 0.0 {
                for i in (k + 1)..n {
                    b[i] -= self.lu[i * n + k] * bk;
                }
            }
        }
        for k in (0..n).rev() {
            b[k] /= self.lu[k * n + k];
            let bk = b[k];
            if bk != 0.0 {
                for i in 0..k {
                    b[i] -= self.lu[i * n + k] * bk;
                }
            }
        }
    }

    /// Solve A^T x = b in place, reusing the same factors:
    /// A = P^T L U  =>  A^T = U^T L^T P.
    pub fn solve_transpose(&self, b: &mut [f64]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        // forward: U^T y = b
        for k in 0..n {
            let mut s = b[k];
            for i in 0..k {
                s -= self.lu[i * n + k] * b[i];
            }
            b[k] = s / self.lu[k * n + k];
        }
        // backward: L^T z = y
        for k in (0..n).rev() {
            let mut s = b[k];
            for i in (k + 1)..n {
                s -= self.lu[i * n + k] * b[i];
            }
            b[k] = s;
        }
        // undo permutation: x = P^T z applied in reverse order
        for k in (0..n).rev() {
            b.swap(k, self.perm[k]);
        }
    }
}

/// Solve a dense complex system A x = b by Gaussian elimination with
/// partial pivoting. Used by the Kron reduction; sizes stay small.
pub fn solve_complex(a: &[Vec<Complex64>], b: &mut [Vec<Complex64>]) -> Result<()> {
    let n = a.len();
    let mut m: Vec<Complex64> = Vec::with_capacity(n * n);
    for row in a {
        assert_eq!(row.len(), n);
        m.extend_from_slice(row);
    }
    for k in 0..n {
        let mut p = k;
        let mut best = m[k * n + k].norm_sqr();
        for i in (k + 1)..n {
            let v = m[i * n + k].norm_sqr();
            if v > best {
                best = v;
                p = i;
            }
        }
        if best < 1e-24 {
            return Err(Error::Singular(format!(
                "complex pivot {:.3e} at column {k}",
                best.sqrt()
            )));
        }
        if p != k {
            for j in 0..n {
                m.swap(k * n + j, p * n + j);
            }
            for rhs in b.iter_mut() {
                rhs.swap(k, p);
            }
        }
        let pivot = m[k * n + k];
        for i in (k + 1)..n {
            let f = m[i * n + k] / pivot;
            if f != Complex64::new(0.0, 0.0) {
                for j in k..n {
                    let v = m[k * n + j];
                    m[i * n + j] -= f * v;
                }
                for rhs in b.iter_mut() {
                    let v = rhs[k];
                    rhs[i] -= f * v;
                }
            }
        }
    }
    for rhs in b.iter_mut() {
        for k in (0..n).rev() {
            let mut s = rhs[k];
            for j in (k + 1)..n {
                s -= m[k * n + j] * rhs[j];
            }
            rhs[k] = s / m[k * n + k];
        }
    }
    Ok(())
}
