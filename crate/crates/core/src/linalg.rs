//! Small dense square matrices.
//!
//! Storage is row-major and kept inline for k <= 4, which covers every
//! dimension the simulator touches in its hot loops.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Sub};

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use smallvec::SmallVec;

use crate::error::{Error, Result};

type Storage = SmallVec<[f64; 16]>;

#[derive(Clone, PartialEq)]
pub struct Matrix {
    dim: usize,
    data: Storage,
}

impl Matrix {
    pub fn zeros(dim: usize) -> Self {
        Matrix {
            dim,
            data: SmallVec::from_elem(0.0, dim * dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        m
    }

    /// The matrix unit `E_ij` (zero-based indices).
    pub fn unit(dim: usize, i: usize, j: usize) -> Self {
        let mut m = Self::zeros(dim);
        m[(i, j)] = 1.0;
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    pub fn from_row_major(dim: usize, values: &[f64]) -> Result<Self> {
        if values.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                actual: values.len(),
            });
        }
        Ok(Matrix {
            dim,
            data: SmallVec::from_slice(values),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Storage::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix { dim, data })
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m.data[i * dim + j] = f(i, j);
            }
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.dim).map(<[f64]>::to_vec).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `||self - I||_F`, computed without forming the difference.
    pub fn distance_from_identity(&self) -> f64 {
        let k = self.dim;
        let mut acc = 0.0;
        for i in 0..k {
            for j in 0..k {
                let v = self.data[i * k + j] - if i == j { 1.0 } else { 0.0 };
                acc += v * v;
            }
        }
        acc.sqrt()
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            dim: self.dim,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add_identity(&self, s: f64) -> Matrix {
        let mut out = self.clone();
        for i in 0..self.dim {
            out.data[i * self.dim + i] += s;
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.dim, |i, j| self[(j, i)])
    }

    /// Matrix product; panics on dimension mismatch (callers check first).
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.dim, other.dim, "matmul dimension mismatch");
        let k = self.dim;
        let mut out = Matrix::zeros(k);
        let (a, b) = (&self.data, &other.data);
        for i in 0..k {
            for l in 0..k {
                let ail = a[i * k + l];
                if ail == 0.0 {
                    continue;
                }
                for j in 0..k {
                    out.data[i * k + j] += ail * b[l * k + j];
                }
            }
        }
        out
    }

    pub fn lu(&self) -> Lu {
        Lu::factor(self)
    }

    pub fn det(&self) -> f64 {
        self.lu().det()
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.dim + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.dim + j]
    }
}

impl Add for &Matrix {
    type Output = Matrix;
    fn add(self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.dim, rhs.dim);
        Matrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl AddAssign<&Matrix> for Matrix {
    fn add_assign(&mut self, rhs: &Matrix) {
        assert_eq!(self.dim, rhs.dim);
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }
}

impl Sub for &Matrix {
    type Output = Matrix;
    fn sub(self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.dim, rhs.dim);
        Matrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &Matrix {
    type Output = Matrix;
    fn mul(self, rhs: &Matrix) -> Matrix {
        self.matmul(rhs)
    }
}

impl Mul<f64> for &Matrix {
    type Output = Matrix;
    fn mul(self, rhs: f64) -> Matrix {
        self.scale(rhs)
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.data.chunks(self.dim)).finish()
    }
}

impl Serialize for Matrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        if rows.is_empty() {
            return Err(D::Error::custom("matrix must have at least one row"));
        }
        Matrix::from_rows(&rows).map_err(D::Error::custom)
    }
}

/// LU factorization with partial pivoting, `P A = L U`.
#[derive(Clone, Debug)]
pub struct Lu {
    dim: usize,
    lu: Storage,
    perm: SmallVec<[usize; 4]>,
    sign: f64,
}

impl Lu {
    fn factor(a: &Matrix) -> Lu {
        let k = a.dim;
        let mut lu = a.data.clone();
        let mut perm: SmallVec<[usize; 4]> = (0..k).collect();
        let mut sign = 1.0;
        for col in 0..k {
            let mut pivot = col;
            let mut best = lu[col * k + col].abs();
            for row in col + 1..k {
                let v = lu[row * k + col].abs();
                if v > best {
                    best = v;
                    pivot = row;
                }
            }
            if pivot != col {
                for j in 0..k {
                    lu.swap(col * k + j, pivot * k + j);
                }
                perm.swap(col, pivot);
                sign = -sign;
            }
            let p = lu[col * k + col];
            if p == 0.0 {
                continue;
            }
            for row in col + 1..k {
                let factor = lu[row * k + col] / p;
                lu[row * k + col] = factor;
                if factor != 0.0 {
                    for j in col + 1..k {
                        lu[row * k + j] -= factor * lu[col * k + j];
                    }
                }
            }
        }
        Lu { dim: k, lu, perm, sign }
    }

    pub fn det(&self) -> f64 {
        let k = self.dim;
        (0..k).fold(self.sign, |acc, i| acc * self.lu[i * k + i])
    }

    /// Solves `A X = B`; `None` when a pivot is exactly zero.
    pub fn solve(&self, b: &Matrix) -> Option<Matrix> {
        let k = self.dim;
        if (0..k).any(|i| self.lu[i * k + i] == 0.0) {
            return None;
        }
        let mut x = Matrix::zeros(k);
        for col in 0..k {
            // forward substitution on the permuted column
            let mut y: SmallVec<[f64; 4]> = (0..k).map(|i| b[(self.perm[i], col)]).collect();
            for i in 0..k {
                let mut s = y[i];
                for j in 0..i {
                    s -= self.lu[i * k + j] * y[j];
                }
                y[i] = s;
            }
            for i in (0..k).rev() {
                let mut s = y[i];
                for j in i + 1..k {
                    s -= self.lu[i * k + j] * y[j];
                }
                y[i] = s / self.lu[i * k + i];
            }
            for i in 0..k {
                x[(i, col)] = y[i];
            }
        }
        Some(x)
    }

    pub fn inverse(&self) -> Option<Matrix> {
        self.solve(&Matrix::identity(self.dim))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lu_determinant_and_inverse() {
        let a = Matrix::from_rows(&[vec![4.0, 3.0], vec![6.0, 3.0]]).unwrap();
        assert!((a.det() - (-6.0)).abs() < 1e-14);
        let inv = a.lu().inverse().unwrap();
        let prod = &a * &inv;
        assert!(prod.distance_from_identity() < 1e-14);
    }

    #[test]
    fn singular_has_zero_det() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert_eq!(a.det(), 0.0);
        assert!(a.lu().inverse().is_none());
    }

    #[test]
    fn pivoting_needed() {
        let a = Matrix::from_rows(&[
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0],
        ])
        .unwrap();
        assert_eq!(a.det(), 1.0);
        let inv = a.lu().inverse().unwrap();
        assert_eq!(inv, a.transpose());
    }

    #[test]
    fn serde_as_rows() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let s = toml::to_string(&std::collections::BTreeMap::from([("m", a.clone())])).unwrap();
        let back: std::collections::BTreeMap<String, Matrix> = toml::from_str(&s).unwrap();
        assert_eq!(back["m"], a);
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    }
}
