//! The general linear group GL(k, R) and its Lie algebra of k x k matrices.
//!
//! All norms are Frobenius norms. The left-displacement `||g^{-1} h - I||_F`
//! stands in for a left-invariant metric: it is left-invariant and generates
//! the group topology near the identity, which is all the tail tests need.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Relative determinant cutoff: reject `|det a| < DET_TOLERANCE * ||a||_F^k`.
pub const DET_TOLERANCE: f64 = 1e-12;

/// Series (Neumann, Mercator) stop once a term's norm falls below this.
pub const SERIES_TERM_TOLERANCE: f64 = 1e-15;

/// Neumann inversion is used for `||a - I||_F` up to this radius.
const NEUMANN_RADIUS: f64 = 0.5;

const MAX_SERIES_TERMS: usize = 200_000;

/// An invertible k x k real matrix.
#[derive(Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct GroupElement(Matrix);

/// A k x k real matrix viewed as chart coordinates.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TangentVector(Matrix);

impl std::fmt::Debug for GroupElement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "GroupElement({:?})", self.0)
    }
}

impl std::fmt::Debug for TangentVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "TangentVector({:?})", self.0)
    }
}

fn det_threshold(m: &Matrix) -> f64 {
    DET_TOLERANCE * m.norm().powi(m.dim() as i32)
}

impl GroupElement {
    pub fn new(m: Matrix) -> Result<Self> {
        if m.dim() == 0 {
            return Err(Error::Precondition("dimension must be at least 1".into()));
        }
        if !m.is_finite() {
            return Err(Error::NonFinite);
        }
        let det = m.det();
        let threshold = det_threshold(&m);
        if !(det.abs() >= threshold) || det == 0.0 {
            return Err(Error::Singular { det, threshold });
        }
        Ok(GroupElement(m))
    }

    pub fn identity(dim: usize) -> Self {
        GroupElement(Matrix::identity(dim))
    }

    /// `I + y`, validated.
    pub fn perturbation(y: &Matrix) -> Result<Self> {
        Self::new(y.add_identity(1.0))
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn distance_from_identity(&self) -> f64 {
        self.0.distance_from_identity()
    }

    pub fn multiply(&self, other: &GroupElement) -> Result<GroupElement> {
        multiply(self, other)
    }

    pub fn inverse(&self) -> Result<GroupElement> {
        inverse(self)
    }
}

impl TangentVector {
    pub fn new(m: Matrix) -> Result<Self> {
        if !m.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(TangentVector(m))
    }

    pub fn zero(dim: usize) -> Self {
        TangentVector(Matrix::zeros(dim))
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.norm_sq()
    }
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            expected: a,
            actual: b,
        });
    }
    Ok(())
}

pub fn multiply(a: &GroupElement, b: &GroupElement) -> Result<GroupElement> {
    check_dims(a.dim(), b.dim())?;
    GroupElement::new(a.0.matmul(&b.0))
}

/// Group inverse. Near the identity this sums the Neumann series
/// `(I + y)^{-1} = I + sum_p (-1)^p y^p`; elsewhere it uses an LU solve.
pub fn inverse(a: &GroupElement) -> Result<GroupElement> {
    let dist = a.distance_from_identity();
    let m = if dist <= NEUMANN_RADIUS {
        neumann_inverse(a.matrix())?
    } else {
        lu_inverse(a.matrix())?
    };
    GroupElement::new(m)
}

/// Neumann-series inverse of `a = I + y`; requires `||y||_F < 1`.
pub fn neumann_inverse(a: &Matrix) -> Result<Matrix> {
    let y = a.add_identity(-1.0);
    let rho = y.norm();
    if rho >= 1.0 {
        return Err(Error::Precondition(format!(
            "Neumann series needs ||a - I||_F < 1, got {rho}"
        )));
    }
    let neg_y = y.scale(-1.0);
    let mut sum = Matrix::identity(a.dim());
    let mut term = Matrix::identity(a.dim());
    for _ in 0..MAX_SERIES_TERMS {
        term = term.matmul(&neg_y);
        let norm = term.norm();
        sum += &term;
        if norm < SERIES_TERM_TOLERANCE {
            return Ok(sum);
        }
    }
    Err(Error::NoConvergence {
        what: "Neumann series",
        iterations: MAX_SERIES_TERMS,
    })
}

/// Factorization-based inverse.
pub fn lu_inverse(a: &Matrix) -> Result<Matrix> {
    let lu = a.lu();
    let det = lu.det();
    let threshold = det_threshold(a);
    if det == 0.0 || !(det.abs() >= threshold) {
        return Err(Error::Singular { det, threshold });
    }
    lu.inverse().ok_or(Error::Singular { det, threshold })
}

/// Matrix exponential by scaling and squaring of the Taylor series.
pub fn mat_exp(v: &TangentVector) -> Result<GroupElement> {
    let m = v.matrix();
    if !m.is_finite() {
        return Err(Error::NonFinite);
    }
    let k = m.dim();
    let norm = m.norm();
    // scale so that ||A|| <= 1/2; 2^-s scaling is exact in binary
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let a = m.scale(0.5f64.powi(squarings));
    let mut sum = Matrix::identity(k);
    let mut term = Matrix::identity(k);
    for p in 1..=40 {
        term = term.matmul(&a).scale(1.0 / p as f64);
        let tn = term.norm();
        sum += &term;
        if tn <= 1e-17 * sum.norm() {
            break;
        }
    }
    for _ in 0..squarings {
        sum = sum.matmul(&sum);
    }
    if !sum.is_finite() {
        return Err(Error::NonFinite);
    }
    // exp(v) is always invertible; skip the determinant cutoff which can
    // misfire for large, badly scaled arguments
    Ok(GroupElement(sum))
}

/// Principal matrix logarithm by the Mercator series
/// `log(I + y) = sum_p (-1)^{p+1} y^p / p`, restricted to `||a - I||_F < 1`.
pub fn mat_log(a: &GroupElement) -> Result<TangentVector> {
    let y = a.matrix().add_identity(-1.0);
    let rho = y.norm();
    if !(rho < 1.0) {
        return Err(Error::LogDomain { norm: rho });
    }
    let mut sum = Matrix::zeros(a.dim());
    let mut power = Matrix::identity(a.dim());
    for p in 1..=MAX_SERIES_TERMS {
        power = power.matmul(&y);
        let sign = if p % 2 == 1 { 1.0 } else { -1.0 };
        let term = power.scale(sign / p as f64);
        let tn = term.norm();
        sum += &term;
        if tn < SERIES_TERM_TOLERANCE {
            return TangentVector::new(sum);
        }
    }
    Err(Error::NoConvergence {
        what: "Mercator series",
        iterations: MAX_SERIES_TERMS,
    })
}

/// Left displacement `||g^{-1} h - I||_F`.
pub fn displacement(g: &GroupElement, h: &GroupElement) -> Result<f64> {
    check_dims(g.dim(), h.dim())?;
    if g == h {
        return Ok(0.0);
    }
    let g_inv = inverse(g)?;
    Ok(g_inv.matrix().matmul(h.matrix()).distance_from_identity())
}

/// Displacement with a precomputed inverse of `g`.
pub(crate) fn displacement_with_inverse(g_inv: &Matrix, h: &Matrix) -> f64 {
    g_inv.matmul(h).distance_from_identity()
}

/// 2 x 2 rotation by `angle` radians.
pub fn rotation2(angle: f64) -> GroupElement {
    let (s, c) = angle.sin_cos();
    GroupElement(Matrix::from_row_major(2, &[c, -s, s, c]).expect("2x2"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

    fn e(k: usize, i: usize, j: usize) -> Matrix {
        Matrix::unit(k, i, j)
    }

    fn g(m: Matrix) -> GroupElement {
        GroupElement::new(m).unwrap()
    }

    fn close(a: &Matrix, b: &Matrix, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn multiply_examples() {
        let i2 = GroupElement::identity(2);
        assert_eq!(multiply(&i2, &i2).unwrap(), i2);

        let r180 = multiply(&rotation2(FRAC_PI_2), &rotation2(FRAC_PI_2)).unwrap();
        assert!(close(r180.matrix(), rotation2(PI).matrix(), 1e-15));

        // (I + 0.2 E12)(I + 0.3 E21) = [[1.06, 0.2], [0.3, 1]] by hand
        let a = g(e(2, 0, 1).scale(0.2).add_identity(1.0));
        let b = g(e(2, 1, 0).scale(0.3).add_identity(1.0));
        let ab = multiply(&a, &b).unwrap();
        let expected = Matrix::from_row_major(2, &[1.06, 0.2, 0.3, 1.0]).unwrap();
        assert!(close(ab.matrix(), &expected, 1e-15));
    }

    #[test]
    fn multiply_dimension_mismatch() {
        let err = multiply(&GroupElement::identity(2), &GroupElement::identity(3)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn construction_rejects_singular_and_nan() {
        let singular = Matrix::from_row_major(2, &[1.0, 2.0, 2.0, 4.0]).unwrap();
        assert!(matches!(GroupElement::new(singular), Err(Error::Singular { .. })));
        let nearly = Matrix::from_row_major(2, &[1.0, 1.0, 1.0, 1.0 + 1e-14]).unwrap();
        assert!(matches!(GroupElement::new(nearly), Err(Error::Singular { .. })));
        let nan = Matrix::from_row_major(2, &[f64::NAN, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(GroupElement::new(nan), Err(Error::NonFinite));
    }

    #[test]
    fn inverse_examples() {
        let i2 = GroupElement::identity(2);
        assert_eq!(inverse(&i2).unwrap(), i2);

        // nilpotent perturbation: series stops after the first term
        let a = g(e(2, 0, 1).scale(0.5).add_identity(1.0));
        let expected = e(2, 0, 1).scale(-0.5).add_identity(1.0);
        assert_eq!(inverse(&a).unwrap().matrix(), &expected);

        let d = g(Matrix::diag(&[2.0, 4.0]));
        assert_eq!(inverse(&d).unwrap().matrix(), &Matrix::diag(&[0.5, 0.25]));
    }

    #[test]
    fn exp_examples() {
        assert_eq!(mat_exp(&TangentVector::zero(2)).unwrap(), GroupElement::identity(2));

        let a = 0.7;
        let v = TangentVector::new(e(2, 0, 1).scale(a)).unwrap();
        assert_eq!(mat_exp(&v).unwrap().matrix(), &e(2, 0, 1).scale(a).add_identity(1.0));

        let v = TangentVector::new(Matrix::diag(&[2f64.ln(), 0.0])).unwrap();
        let x = mat_exp(&v).unwrap();
        assert!((x.matrix()[(0, 0)] - 2.0).abs() <= 2.0 * 1e-12);
        assert!((x.matrix()[(1, 1)] - 1.0).abs() <= 1e-12);
        assert_eq!(x.matrix()[(0, 1)], 0.0);
    }

    #[test]
    fn exp_rejects_nan() {
        let v = TangentVector(Matrix::from_row_major(1, &[f64::NAN]).unwrap());
        assert_eq!(mat_exp(&v), Err(Error::NonFinite));
    }

    #[test]
    fn exp_of_rotation_generator() {
        // exp(t J) is the rotation by t, a closed form independent of the series
        let t = 2.5;
        let v = TangentVector::new(Matrix::from_row_major(2, &[0.0, -t, t, 0.0]).unwrap()).unwrap();
        let x = mat_exp(&v).unwrap();
        assert!(close(x.matrix(), rotation2(t).matrix(), 1e-13));
    }

    #[test]
    fn log_examples() {
        assert_eq!(mat_log(&GroupElement::identity(3)).unwrap(), TangentVector::zero(3));

        let a = -0.35;
        let x = g(e(2, 0, 1).scale(a).add_identity(1.0));
        assert_eq!(mat_log(&x).unwrap().matrix(), &e(2, 0, 1).scale(a));

        let x = g(Matrix::diag(&[1.5, 1.0]));
        let l = mat_log(&x).unwrap();
        assert!((l.matrix()[(0, 0)] - 1.5f64.ln()).abs() < 1e-14);
        assert_eq!(l.matrix()[(1, 1)], 0.0);
    }

    #[test]
    fn log_guard() {
        let x = g(Matrix::diag(&[2.0, 1.0]));
        assert!(matches!(mat_log(&x), Err(Error::LogDomain { .. })));
    }

    #[test]
    fn displacement_examples() {
        let i2 = GroupElement::identity(2);
        assert_eq!(displacement(&i2, &i2).unwrap(), 0.0);
        let d = displacement(&i2, &rotation2(PI)).unwrap();
        assert!((d - 2.0 * SQRT_2).abs() < 1e-14);

        let base = g(Matrix::from_row_major(2, &[2.0, 1.0, -0.5, 3.0]).unwrap());
        let step = g(e(2, 0, 0).scale(0.1).add_identity(1.0));
        let d = displacement(&base, &multiply(&base, &step).unwrap()).unwrap();
        assert!((d - 0.1).abs() < 1e-14);
    }

    #[test]
    fn neumann_precondition() {
        let m = Matrix::diag(&[2.5, 1.0]);
        assert!(neumann_inverse(&m).is_err());
    }

    fn matrix_strategy(k: usize, scale: f64) -> impl Strategy<Value = Matrix> {
        proptest::collection::vec(-1.0f64..1.0, k * k)
            .prop_map(move |v| Matrix::from_row_major(k, &v).unwrap().scale(scale))
    }

    fn rescale_to(m: Matrix, max_norm: f64) -> Matrix {
        let n = m.norm();
        if n > max_norm {
            m.scale(max_norm / n)
        } else {
            m
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn inverse_round_trip(m in (2usize..=4).prop_flat_map(|k| matrix_strategy(k, 1.0))) {
            // diagonally dominant shift keeps the matrix well conditioned
            let a = g(m.add_identity(m.dim() as f64 + 1.0));
            let inv = inverse(&a).unwrap();
            prop_assert!(a.matrix().matmul(inv.matrix()).distance_from_identity() <= 1e-10);
        }

        #[test]
        fn exp_log_round_trip(m in (1usize..=4).prop_flat_map(|k| matrix_strategy(k, 0.4))) {
            let v = TangentVector::new(rescale_to(m, 0.4)).unwrap();
            let back = mat_log(&mat_exp(&v).unwrap()).unwrap();
            prop_assert!((back.matrix() - v.matrix()).norm() <= 1e-10);
        }

        #[test]
        fn neumann_matches_lu(m in (2usize..=4).prop_flat_map(|k| matrix_strategy(k, 0.5))) {
            let a = rescale_to(m, 0.5).add_identity(1.0);
            let n = neumann_inverse(&a).unwrap();
            let l = lu_inverse(&a).unwrap();
            prop_assert!((&n - &l).norm() <= 1e-12);
        }

        #[test]
        fn displacement_left_invariant(
            (a, gm, hm) in (2usize..=3).prop_flat_map(|k| (
                matrix_strategy(k, 1.0), matrix_strategy(k, 1.0), matrix_strategy(k, 1.0)))
        ) {
            let k = a.dim() as f64;
            let a = g(a.add_identity(k + 1.0));
            let gg = g(gm.add_identity(k + 1.0));
            let hh = g(hm.add_identity(k + 1.0));
            let lhs = displacement(&multiply(&a, &gg).unwrap(), &multiply(&a, &hh).unwrap()).unwrap();
            let rhs = displacement(&gg, &hh).unwrap();
            let cond = a.matrix().norm() * inverse(&a).unwrap().matrix().norm();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * cond * (1.0 + rhs));
        }
    }
}
