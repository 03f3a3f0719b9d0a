//! Minimal dense linear algebra: row-major square matrices and Cholesky.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn mat_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lower-triangular factor `L` with `A + jitter I = L L^T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cholesky {
    l: Matrix,
    pub jitter: f64,
}

impl Cholesky {
    /// Plain factorization; `None` if `a` is not numerically positive definite.
    pub fn factor(a: &Matrix) -> Option<Self> {
        Self::factor_shifted(a, 0.0)
    }

    fn factor_shifted(a: &Matrix, shift: f64) -> Option<Self> {
        let n = a.rows();
        debug_assert_eq!(n, a.cols());
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let lj = &l.data[j * n..j * n + j];
            let d = a.get(j, j) + shift - dot(lj, lj);
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            let djj = d.sqrt();
            l.data[j * n + j] = djj;
            for i in j + 1..n {
                let (head, tail) = l.data.split_at_mut(i * n);
                let s = a.get(i, j) - dot(&tail[..j], &head[j * n..j * n + j]);
                tail[j] = s / djj;
            }
        }
        Some(Cholesky { l, jitter: shift })
    }

    /// Factor with diagonal jitter starting at `initial`, multiplied by ten
    /// on each failure up to `max`.
    pub fn factor_with_jitter(a: &Matrix, initial: f64, max: f64) -> Result<Self> {
        let mut jitter = initial;
        loop {
            if let Some(c) = Self::factor_shifted(a, jitter) {
                return Ok(c);
            }
            if jitter >= max {
                return Err(Error::Cholesky { jitter });
            }
            jitter = (jitter * 10.0).min(max);
        }
    }

    pub fn n(&self) -> usize {
        self.l.rows()
    }

    pub fn l(&self) -> &Matrix {
        &self.l
    }

    /// Solve `L x = b` in place.
    pub fn solve_lower_in_place(&self, b: &mut [f64]) {
        let n = self.n();
        for i in 0..n {
            let row = self.l.row(i);
            let s = b[i] - dot(&row[..i], &b[..i]);
            b[i] = s / row[i];
        }
    }

    /// Solve `L^T x = b` in place.
    pub fn solve_upper_in_place(&self, b: &mut [f64]) {
        let n = self.n();
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n {
                s -= self.l.get(k, i) * b[k];
            }
            b[i] = s / self.l.get(i, i);
        }
    }

    /// Solve `(L L^T) x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_lower_in_place(&mut x);
        self.solve_upper_in_place(&mut x);
        x
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n()).map(|i| self.l.get(i, i).ln()).sum::<f64>()
    }

    /// `(L L^T)^{-1}`, symmetric.
    pub fn inverse(&self) -> Matrix {
        let n = self.n();
        // Rows of L^{-1}: row i has support 0..=i.
        let mut linv = Matrix::zeros(n, n);
        for i in 0..n {
            linv.set(i, i, 1.0 / self.l.get(i, i));
            for j in 0..i {
                let mut s = 0.0;
                for k in j..i {
                    s += self.l.get(i, k) * linv.get(k, j);
                }
                linv.set(i, j, -s / self.l.get(i, i));
            }
        }
        // A^{-1} = L^{-T} L^{-1}; entry (i, j) = sum_{k >= max(i,j)} Linv[k,i] Linv[k,j]
        let mut inv = Matrix::zeros(n, n);
        for k in 0..n {
            let row = linv.row(k);
            for i in 0..=k {
                let ri = row[i];
                if ri == 0.0 {
                    continue;
                }
                for j in 0..=i {
                    inv.data[i * n + j] += ri * row[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                let v = inv.get(i, j);
                inv.set(j, i, v);
            }
        }
        inv
    }
}
