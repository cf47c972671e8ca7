//! Fixtures shared by the benchmarks in `benches/`.

use randprod_core::scenario::builtin;
use randprod_core::{GroupElement, Matrix, Scenario, TangentVector};

/// A built-in scenario with its horizon and path count cut down.
pub fn scenario(name: &str, horizon: u64, paths: u64) -> Scenario {
    let mut cfg = builtin(name).expect("built-in scenario");
    cfg.policy.horizon = Some(horizon);
    cfg.policy.paths = Some(paths);
    cfg.policy.m_star = None;
    cfg.build().expect("valid scenario")
}

/// A fixed tangent vector of norm `norm` in dimension `k`.
pub fn tangent(k: usize, norm: f64) -> TangentVector {
    let m = Matrix::from_fn(k, |i, j| ((i * k + j) as f64 * 0.7).sin());
    let scale = norm / m.norm();
    TangentVector::new(m.scale(scale)).expect("finite")
}

pub fn near_identity(k: usize, norm: f64) -> GroupElement {
    GroupElement::perturbation(tangent(k, norm).matrix()).expect("invertible")
}
