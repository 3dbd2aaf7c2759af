//! Small dense linear algebra: row-major matrices, Cholesky and LU.
//!
//! Decision vectors in this crate are short (tens of entries) while
//! constraint stacks can be tall, so everything here is dense and simple.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("matrix is singular (pivot {pivot})")]
    Singular { pivot: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Matrix<T: Scalar = f64> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::Dimension { expected: rows * cols, got: data.len() });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equal-length rows. Panics on ragged input.
    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self { rows: rows.len(), cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn push_row(&mut self, row: &[T]) {
        if self.rows == 0 && self.cols == 0 {
            self.cols = row.len();
        }
        assert_eq!(row.len(), self.cols, "row length mismatch");
        self.data.extend_from_slice(row);
        self.rows += 1;
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// `self * v`
    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| crate::scalar::dot(self.row(i), v)).collect()
    }

    /// `selfᵀ * v`
    pub fn tr_mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.rows);
        let mut out = vec![T::zero(); self.cols];
        for (i, vi) in v.iter().enumerate() {
            if *vi == T::zero() {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += *a * *vi;
            }
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn scale(&self, s: T) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|x| *x * s).collect() }
    }

    pub fn max_abs(&self) -> T {
        crate::scalar::norm_inf(&self.data)
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| U::lit(x.as_f64())).collect(),
        }
    }

    /// Largest singular value by power iteration on the smaller Gram matrix.
    pub fn spectral_norm(&self) -> T {
        if self.rows == 0 || self.cols == 0 {
            return T::zero();
        }
        let gram = if self.rows <= self.cols {
            self.matmul(&self.transpose())
        } else {
            self.transpose().matmul(self)
        };
        let n = gram.rows();
        let mut v = vec![T::one(); n];
        let mut lambda = T::zero();
        for _ in 0..500 {
            let w = gram.mul_vec(&v);
            let nw = crate::scalar::norm2(&w);
            if nw == T::zero() {
                return T::zero();
            }
            v = w.iter().map(|x| *x / nw).collect();
            let next = nw;
            if (next - lambda).abs() <= T::epsilon() * T::lit(16.0) * next {
                lambda = next;
                break;
            }
            lambda = next;
        }
        lambda.sqrt()
    }
}

impl<T: Scalar> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T: Scalar> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky<T: Scalar = f64> {
    l: Matrix<T>,
}

impl<T: Scalar> Cholesky<T> {
    pub fn factor(a: &Matrix<T>) -> Result<Self, LinalgError> {
        let n = a.rows();
        if a.cols() != n {
            return Err(LinalgError::Dimension { expected: n, got: a.cols() });
        }
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > T::zero()) {
                return Err(LinalgError::NotPositiveDefinite { pivot: j, value: d.as_f64() });
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(Self { l })
    }

    pub fn lower(&self) -> Matrix<T> {
        self.l.clone()
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.l.rows();
        assert_eq!(b.len(), n);
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[(i, k)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.l[(k, i)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        y
    }
}

/// LU factorization with partial pivoting, `P A = L U`.
#[derive(Debug, Clone)]
pub struct Lu<T: Scalar = f64> {
    lu: Matrix<T>,
    perm: Vec<usize>,
}

impl<T: Scalar> Lu<T> {
    pub fn factor(a: &Matrix<T>) -> Result<Self, LinalgError> {
        let n = a.rows();
        if a.cols() != n {
            return Err(LinalgError::Dimension { expected: n, got: a.cols() });
        }
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.max_abs().max(T::min_positive_value());
        for k in 0..n {
            let (p, pv) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, T::zero()), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pv <= scale * T::epsilon() * T::from_usize_lossy(n.max(1)) {
                return Err(LinalgError::Singular { pivot: k });
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    let tmp = lu[(p, j)];
                    lu[(p, j)] = lu[(k, j)];
                    lu[(k, j)] = tmp;
                }
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                if f != T::zero() {
                    for j in k + 1..n {
                        let u = lu[(k, j)];
                        lu[(i, j)] -= f * u;
                    }
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.lu.rows();
        assert_eq!(b.len(), n);
        let mut y: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.lu[(i, k)] * y[k];
            }
            y[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.lu[(i, k)] * y[k];
            }
            y[i] = s / self.lu[(i, i)];
        }
        y
    }

    pub fn inverse(&self) -> Matrix<T> {
        let n = self.lu.rows();
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|x| *x = T::zero());
            e[j] = T::one();
            let col = self.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv
    }

    /// Ratio of largest to smallest |pivot|; a cheap conditioning indicator.
    pub fn pivot_ratio(&self) -> T {
        let n = self.lu.rows();
        if n == 0 {
            return T::one();
        }
        let (lo, hi) = (0..n).map(|i| self.lu[(i, i)].abs()).fold(
            (T::infinity(), T::zero()),
            |(lo, hi), v| (lo.min(v), hi.max(v)),
        );
        hi / lo
    }
}

/// Checks that a symmetric matrix is positive semidefinite: `A + tol·(1+max|A|)·I`
/// must admit a Cholesky factorization.
pub fn is_psd<T: Scalar>(a: &Matrix<T>, tol: T) -> bool {
    if !a.is_symmetric(tol * (T::one() + a.max_abs())) {
        return false;
    }
    let shift = tol * (T::one() + a.max_abs());
    let mut s = a.clone();
    for i in 0..s.rows() {
        s[(i, i)] += shift;
    }
    Cholesky::factor(&s).is_ok()
}

/// 1-norm condition number estimate via the explicit inverse (small matrices only).
pub fn condition_number<T: Scalar>(a: &Matrix<T>) -> Result<T, LinalgError> {
    let lu = Lu::factor(a)?;
    let inv = lu.inverse();
    let norm1 = |m: &Matrix<T>| {
        (0..m.cols())
            .map(|j| (0..m.rows()).map(|i| m[(i, j)].abs()).sum::<T>())
            .fold(T::zero(), T::max)
    };
    Ok(norm1(a) * norm1(&inv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cholesky_solves_spd_system() {
        let a = Matrix::from_rows(&[vec![4.0, 1.0, 0.5], vec![1.0, 3.0, 0.2], vec![0.5, 0.2, 2.0]]);
        let x = vec![1.0, -2.0, 0.5];
        let b = a.mul_vec(&x);
        let sol = Cholesky::factor(&a).unwrap().solve(&b);
        for (s, t) in sol.iter().zip(&x) {
            assert_relative_eq!(s, t, epsilon = 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(matches!(Cholesky::factor(&a), Err(LinalgError::NotPositiveDefinite { .. })));
    }

    #[test]
    fn lu_inverse_and_singular() {
        let a = Matrix::from_rows(&[vec![0.0, 2.0], vec![3.0, 1.0]]);
        let inv = Lu::factor(&a).unwrap().inverse();
        let id = a.matmul(&inv);
        assert_relative_eq!(id[(0, 0)], 1.0, epsilon = 1e-14);
        assert_relative_eq!(id[(0, 1)], 0.0, epsilon = 1e-14);
        let s = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(matches!(Lu::factor(&s), Err(LinalgError::Singular { .. })));
    }

    #[test]
    fn spectral_norm_of_diagonal_and_wide() {
        let a = Matrix::from_rows(&[vec![3.0, 0.0], vec![0.0, -5.0]]);
        assert_relative_eq!(a.spectral_norm(), 5.0, epsilon = 1e-10);
        // rank one: ‖u vᵀ‖ = ‖u‖‖v‖
        let w = Matrix::from_rows(&[vec![1.0, 2.0, 2.0], vec![2.0, 4.0, 4.0]]);
        assert_relative_eq!(w.spectral_norm(), 5.0f64.sqrt() * 3.0, epsilon = 1e-10);
    }

    #[test]
    fn psd_probe() {
        let a = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert!(is_psd(&a, 1e-8));
        let b = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, -1e-3]]);
        assert!(!is_psd(&b, 1e-8));
    }

    #[test]
    fn generic_over_f32() {
        let a: Matrix<f32> = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 8.0]]);
        let x = Cholesky::factor(&a).unwrap().solve(&[2.0, 8.0]);
        assert_eq!(x, vec![1.0, 1.0]);
    }
}
