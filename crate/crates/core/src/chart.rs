//! Truncation neighborhoods of the identity with their coordinate maps.
//!
//! A chart is a closed neighborhood `U` of `I` together with a map `phi`
//! sending `U` bijectively onto the closed Frobenius ball of radius `r` in
//! matrix space, with `phi(I) = 0`. Two kinds are provided:
//!
//! * [`ChartKind::Affine`]: `U = { x : ||x - I|| <= r }`, `phi(x) = x - I`,
//!   for any `0 < r < 1` (the Neumann series keeps all of `U` invertible).
//! * [`ChartKind::Exponential`]: `U = exp(ball of radius r)`, `phi = log`,
//!   with `r <= 0.4` so `U` stays well inside the Mercator domain.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{mat_exp, mat_log, GroupElement, TangentVector};

/// Largest admissible radius for the exponential chart.
pub const MAX_EXPONENTIAL_RADIUS: f64 = 0.4;

/// Relative slack on the ball boundary when mapping coordinates back, so a
/// mean of boundary points that rounds a hair outside is still accepted.
const BOUNDARY_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChartKind {
    Affine,
    Exponential,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ChartSpec {
    kind: ChartKind,
    radius: f64,
    dim: usize,
}

impl ChartSpec {
    pub fn new(kind: ChartKind, radius: f64, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidChart("dimension must be at least 1".into()));
        }
        if !(radius > 0.0 && radius < 1.0) {
            return Err(Error::InvalidChart(format!(
                "radius must lie in (0, 1), got {radius}"
            )));
        }
        if kind == ChartKind::Exponential && radius > MAX_EXPONENTIAL_RADIUS {
            return Err(Error::InvalidChart(format!(
                "exponential chart radius must be <= {MAX_EXPONENTIAL_RADIUS}, got {radius}"
            )));
        }
        Ok(ChartSpec { kind, radius, dim })
    }

    pub fn affine(radius: f64, dim: usize) -> Result<Self> {
        Self::new(ChartKind::Affine, radius, dim)
    }

    pub fn exponential(radius: f64, dim: usize) -> Result<Self> {
        Self::new(ChartKind::Exponential, radius, dim)
    }

    /// Affine chart of radius 0.5.
    pub fn default_for(dim: usize) -> Self {
        Self::affine(0.5, dim).expect("default chart is valid")
    }

    pub fn kind(&self) -> ChartKind {
        self.kind
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `phi(x)` when `x` lies in `U`, `None` otherwise. This is the form the
    /// moment computations use, since it evaluates the logarithm only once.
    pub fn coordinates(&self, x: &GroupElement) -> Option<TangentVector> {
        if x.dim() != self.dim {
            return None;
        }
        match self.kind {
            ChartKind::Affine => {
                if x.distance_from_identity() <= self.radius {
                    Some(TangentVector::new(x.matrix().add_identity(-1.0)).ok()?)
                } else {
                    None
                }
            }
            ChartKind::Exponential => {
                if !(x.distance_from_identity() < 1.0) {
                    return None;
                }
                let v = mat_log(x).ok()?;
                (v.norm() <= self.radius).then_some(v)
            }
        }
    }

    pub fn contains(&self, x: &GroupElement) -> bool {
        self.coordinates(x).is_some()
    }

    pub fn phi(&self, x: &GroupElement) -> Result<TangentVector> {
        if x.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: x.dim(),
            });
        }
        self.coordinates(x).ok_or(Error::OutsideChart {
            norm: x.distance_from_identity(),
            radius: self.radius,
        })
    }

    pub fn phi_inv(&self, v: &TangentVector) -> Result<GroupElement> {
        if v.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: v.dim(),
            });
        }
        let norm = v.norm();
        if norm > self.radius * (1.0 + BOUNDARY_SLACK) {
            return Err(Error::OutsideChart {
                norm,
                radius: self.radius,
            });
        }
        match self.kind {
            ChartKind::Affine => GroupElement::perturbation(v.matrix()),
            ChartKind::Exponential => mat_exp(v),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::rotation2;
    use crate::linalg::Matrix;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn tv(m: Matrix) -> TangentVector {
        TangentVector::new(m).unwrap()
    }

    #[test]
    fn validation() {
        assert!(ChartSpec::affine(0.0, 2).is_err());
        assert!(ChartSpec::affine(1.0, 2).is_err());
        assert!(ChartSpec::affine(0.99, 2).is_ok());
        assert!(ChartSpec::exponential(0.41, 2).is_err());
        assert!(ChartSpec::exponential(0.4, 2).is_ok());
        assert!(ChartSpec::affine(0.5, 0).is_err());
    }

    #[test]
    fn contains_examples() {
        let affine = ChartSpec::affine(0.5, 2).unwrap();
        assert!(affine.contains(&GroupElement::identity(2)));
        // ||R(90) - I||_F = 2
        assert!((rotation2(FRAC_PI_2).distance_from_identity() - 2.0).abs() < 1e-15);
        assert!(!affine.contains(&rotation2(FRAC_PI_2)));

        let exp = ChartSpec::exponential(0.3, 2).unwrap();
        let x = mat_exp(&tv(Matrix::unit(2, 0, 1).scale(0.2))).unwrap();
        assert!(exp.contains(&x));
    }

    #[test]
    fn boundary_is_closed() {
        let affine = ChartSpec::affine(0.5, 2).unwrap();
        let x = GroupElement::perturbation(&Matrix::unit(2, 0, 0).scale(0.5)).unwrap();
        assert_eq!(x.distance_from_identity(), 0.5);
        assert!(affine.contains(&x));
    }

    #[test]
    fn phi_examples() {
        let affine = ChartSpec::affine(0.5, 2).unwrap();
        let x = GroupElement::perturbation(&Matrix::unit(2, 0, 0).scale(0.3)).unwrap();
        let v = affine.phi(&x).unwrap();
        assert!((v.matrix() - &Matrix::unit(2, 0, 0).scale(0.3)).norm() < 1e-15);
        assert_eq!(affine.phi(&GroupElement::identity(2)).unwrap(), TangentVector::zero(2));

        let exp = ChartSpec::exponential(0.3, 2).unwrap();
        let target = Matrix::unit(2, 1, 0).scale(0.25);
        let x = mat_exp(&tv(target.clone())).unwrap();
        assert_eq!(exp.phi(&x).unwrap().matrix(), &target);

        assert!(matches!(
            affine.phi(&rotation2(FRAC_PI_2)),
            Err(Error::OutsideChart { .. })
        ));
    }

    #[test]
    fn phi_inv_examples() {
        let affine = ChartSpec::affine(0.5, 2).unwrap();
        let v = tv(Matrix::unit(2, 0, 0).scale(0.3));
        let x = affine.phi_inv(&v).unwrap();
        assert_eq!(x.matrix(), &Matrix::diag(&[1.3, 1.0]));

        let exp = ChartSpec::exponential(0.3, 2).unwrap();
        let v = tv(Matrix::from_row_major(2, &[0.1, -0.05, 0.02, 0.0]).unwrap());
        assert_eq!(exp.phi_inv(&v).unwrap(), mat_exp(&v).unwrap());

        for c in [affine, exp] {
            assert_eq!(c.phi_inv(&TangentVector::zero(2)).unwrap(), GroupElement::identity(2));
        }

        let too_big = tv(Matrix::unit(2, 0, 0).scale(0.6));
        assert!(matches!(affine.phi_inv(&too_big), Err(Error::OutsideChart { .. })));
    }

    fn chart_strategy() -> impl Strategy<Value = ChartSpec> {
        prop_oneof![
            (0.05f64..0.95, 1usize..=4).prop_map(|(r, k)| ChartSpec::affine(r, k).unwrap()),
            (0.05f64..0.4, 1usize..=4).prop_map(|(r, k)| ChartSpec::exponential(r, k).unwrap()),
        ]
    }

    /// A random point strictly inside the radius-`r` ball.
    fn ball_point(k: usize, r: f64, dir: &[f64], frac: f64) -> TangentVector {
        let m = Matrix::from_row_major(k, &dir[..k * k]).unwrap();
        let n = m.norm().max(1e-300);
        tv(m.scale(r * frac / n))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn round_trip_both_directions(
            chart in chart_strategy(),
            dir in proptest::collection::vec(-1.0f64..1.0, 16),
            frac in 0.0f64..0.999,
        ) {
            let v = ball_point(chart.dim(), chart.radius(), &dir, frac);
            let x = chart.phi_inv(&v).unwrap();
            prop_assert!(chart.contains(&x));
            let back = chart.phi(&x).unwrap();
            prop_assert!((back.matrix() - v.matrix()).norm() <= 1e-12);
            let again = chart.phi_inv(&back).unwrap();
            prop_assert!((again.matrix() - x.matrix()).norm() <= 1e-12);
        }

        #[test]
        fn image_is_convex(
            chart in chart_strategy(),
            d1 in proptest::collection::vec(-1.0f64..1.0, 16),
            d2 in proptest::collection::vec(-1.0f64..1.0, 16),
            f1 in 0.0f64..1.0, f2 in 0.0f64..1.0, t in 0.0f64..=1.0,
        ) {
            let k = chart.dim();
            let x = chart.phi_inv(&ball_point(k, chart.radius(), &d1, f1)).unwrap();
            let y = chart.phi_inv(&ball_point(k, chart.radius(), &d2, f2)).unwrap();
            let px = chart.phi(&x).unwrap();
            let py = chart.phi(&y).unwrap();
            let mix = tv(&px.matrix().scale(t) + &py.matrix().scale(1.0 - t));
            prop_assert!(chart.phi_inv(&mix).is_ok());
        }

        #[test]
        fn affine_points_are_invertible(
            r in 0.05f64..0.999, k in 1usize..=4,
            dir in proptest::collection::vec(-1.0f64..1.0, 16), frac in 0.0f64..=1.0,
        ) {
            let v = ball_point(k, r, &dir, frac);
            prop_assert!(GroupElement::perturbation(v.matrix()).is_ok());
        }
    }
}
