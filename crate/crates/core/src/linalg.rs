//! Dense row-major matrices and LU factorization with partial pivoting.
//!
//! The state spaces handled here stay in the low thousands, so plain dense
//! algebra is sufficient. Row vectors are represented as slices and
//! multiplied from the left with [`Matrix::vec_mul`].

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
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

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(rows * cols, data.len()));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from nested rows; all rows must have equal length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::shape(cols, r.len()));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let mut m = Matrix::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        let mut sums = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (s, v) in sums.iter_mut().zip(self.row(i)) {
                *s += v.abs();
            }
        }
        sums.into_iter().fold(0.0, f64::max)
    }

    pub fn scaled(&self, c: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::shape(self.rows * self.cols, other.rows * other.cols));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// `self * x` for a column vector `x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `x * self` for a row vector `x`.
    pub fn vec_mul(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += xi * a;
            }
        }
        out
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::shape(self.cols, other.rows));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                for (o, b) in out.row_mut(i).iter_mut().zip(src) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Matrix) -> Matrix {
        let rows = self.rows * other.rows;
        let cols = self.cols * other.cols;
        let mut out = Matrix::zeros(rows, cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let a = self[(i, j)];
                if a == 0.0 {
                    continue;
                }
                for p in 0..other.rows {
                    for q in 0..other.cols {
                        out[(i * other.rows + p, j * other.cols + q)] = a * other[(p, q)];
                    }
                }
            }
        }
        out
    }

    /// Kronecker sum `self ⊗ I + I ⊗ other` of two square matrices.
    pub fn kron_sum(&self, other: &Matrix) -> Matrix {
        let left = self.kron(&Matrix::identity(other.rows));
        let right = Matrix::identity(self.rows).kron(other);
        left.add(&right).expect("kron_sum operands are square")
    }

    /// Block-diagonal matrix with the given square blocks.
    pub fn block_diagonal(blocks: &[&Matrix]) -> Matrix {
        let n: usize = blocks.iter().map(|b| b.rows).sum();
        let mut out = Matrix::zeros(n, n);
        let mut off = 0;
        for b in blocks {
            for i in 0..b.rows {
                for j in 0..b.cols {
                    out[(off + i, off + j)] = b[(i, j)];
                }
            }
            off += b.rows;
        }
        out
    }
}

impl core::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl core::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Condition numbers above this are treated as numerically singular.
pub const MAX_CONDITION: f64 = 1e12;

/// `P A = L U` with unit lower `L`, stored compactly.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
    norm_one: f64,
}

impl Lu {
    pub fn factor(a: &Matrix) -> Result<Lu> {
        if !a.is_square() {
            return Err(Error::shape(a.rows, a.cols));
        }
        let n = a.rows;
        let norm_one = a.norm_one();
        let mut lu = a.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut best = lu[k * n + k].abs();
            for i in k + 1..n {
                let v = lu[i * n + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::analysis("singular matrix in LU factorization", 0.0));
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let pivot = lu[k * n + k];
            let (upper, lower) = lu.split_at_mut((k + 1) * n);
            let pivot_row = &upper[k * n + k + 1..k * n + n];
            for i in 0..n - k - 1 {
                let row = &mut lower[i * n..(i + 1) * n];
                let f = row[k] / pivot;
                row[k] = f;
                if f != 0.0 {
                    for (x, u) in row[k + 1..].iter_mut().zip(pivot_row) {
                        *x -= f * u;
                    }
                }
            }
        }
        Ok(Lu {
            n,
            lu,
            perm,
            norm_one,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        debug_assert_eq!(b.len(), n);
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = &self.lu[i * n..i * n + i];
            let s: f64 = row.iter().zip(&x[..i]).map(|(l, v)| l * v).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = &self.lu[i * n + i + 1..(i + 1) * n];
            let s: f64 = row.iter().zip(&x[i + 1..]).map(|(u, v)| u * v).sum();
            x[i] = (x[i] - s) / self.lu[i * n + i];
        }
        x
    }

    /// Solves `x A = b` for a row vector `x` (equivalently `Aᵀ xᵀ = bᵀ`).
    pub fn solve_left(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        debug_assert_eq!(b.len(), n);
        // Uᵀ y = b
        let mut y = b.to_vec();
        for i in 0..n {
            y[i] /= self.lu[i * n + i];
            let yi = y[i];
            if yi != 0.0 {
                let row = &self.lu[i * n + i + 1..(i + 1) * n];
                for (t, u) in y[i + 1..].iter_mut().zip(row) {
                    *t -= u * yi;
                }
            }
        }
        // Lᵀ z = y
        for i in (0..n).rev() {
            let zi = y[i];
            if zi != 0.0 {
                let row = &self.lu[i * n..i * n + i];
                for (t, l) in y[..i].iter_mut().zip(row) {
                    *t -= l * zi;
                }
            }
        }
        let mut x = vec![0.0; n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = y[i];
        }
        x
    }

    /// Estimate of the 1-norm condition number (Hager's method).
    pub fn condition_estimate(&self) -> f64 {
        let n = self.n;
        if n == 0 {
            return 1.0;
        }
        let mut x = vec![1.0 / n as f64; n];
        let mut estimate = 0.0;
        for _ in 0..5 {
            let y = self.solve(&x);
            estimate = y.iter().map(|v| v.abs()).sum::<f64>();
            let xi: Vec<f64> = y.iter().map(|&v| if v >= 0.0 { 1.0 } else { -1.0 }).collect();
            let z = self.solve_left(&xi);
            let (j, zmax) = z
                .iter()
                .enumerate()
                .fold((0, 0.0f64), |(bj, bv), (j, v)| if v.abs() > bv { (j, v.abs()) } else { (bj, bv) });
            let ztx: f64 = z.iter().zip(&x).map(|(a, b)| a * b).sum();
            if zmax <= ztx {
                break;
            }
            x.iter_mut().for_each(|v| *v = 0.0);
            x[j] = 1.0;
        }
        estimate * self.norm_one
    }

    /// Fails when the condition estimate exceeds [`MAX_CONDITION`].
    pub fn check_conditioning(&self, what: &str) -> Result<()> {
        let cond = self.condition_estimate();
        if !cond.is_finite() || cond > MAX_CONDITION {
            return Err(Error::analysis(
                alloc::format!("{what}: condition estimate {cond:e} exceeds {MAX_CONDITION:e}"),
                cond,
            ));
        }
        Ok(())
    }
}
