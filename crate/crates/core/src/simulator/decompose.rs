//! Centering a product path by its truncated means.
//!
//! With `b^_n = b_1 ... b_n` and
//! `z_n = b^_{n-1} x_n b_n^{-1} b^_{n-1}^{-1}`, the products
//! `z^_n = z_1 ... z_n` satisfy `x^_n = z^_n b^_n` for every `n` — the
//! telescoping is purely algebraic, so the residual only measures rounding.

use serde::Serialize;

use crate::chart::ChartSpec;
use crate::error::{Error, Result};
use crate::group::GroupElement;
use crate::law::LawSequence;
use crate::three_series::term_stats_at;

use super::{draw_factor, ProductTrace};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecompositionStep {
    pub n: u64,
    pub z: GroupElement,
    pub z_hat: GroupElement,
    pub b_hat: GroupElement,
    /// `||x^_n - z^_n b^_n||_F`.
    pub residual: f64,
    pub x_hat_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecompositionTrace {
    pub path: u64,
    pub steps: Vec<DecompositionStep>,
    /// Whether every `b_n` came from exact statistics.
    pub exact_means: bool,
    /// Index at which `b^_n` stopped being safely invertible.
    pub aborted_at: Option<u64>,
}

impl DecompositionTrace {
    /// `max_n residual_n / (1 + ||x^_n||)`.
    pub fn max_relative_residual(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| s.residual / (1.0 + s.x_hat_norm))
            .fold(0.0, f64::max)
    }
}

/// Replays the path of `trace` and decomposes it. Truncated means are exact
/// when the law allows, otherwise estimated from `budget` draws.
pub fn decompose(
    seq: &LawSequence,
    chart: &ChartSpec,
    trace: &ProductTrace,
    budget: usize,
) -> Result<DecompositionTrace> {
    if trace.escaped_at.is_some() {
        return Err(Error::Precondition("cannot decompose an escaped path".into()));
    }
    let dim = chart.dim();
    if seq.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: seq.dim(),
        });
    }
    let terms = seq.terms_up_to(trace.horizon)?;
    let mut exact_means = true;
    let mut x_hat = GroupElement::identity(dim);
    let mut z_hat = GroupElement::identity(dim);
    let mut b_hat = GroupElement::identity(dim);
    let mut b_hat_inv = GroupElement::identity(dim);
    let mut steps = Vec::with_capacity(trace.horizon as usize);
    let mut aborted_at = None;
    let mut next_cp = 0;
    for n in 1..=trace.horizon {
        let term = crate::law::term_at(&terms, n);
        let x = draw_factor(term, trace.seed, n, trace.path)?;
        x_hat = x_hat.multiply(&x)?;
        if let Some((cp, stored)) = trace.checkpoints.get(next_cp) {
            if *cp == n {
                if *stored != x_hat {
                    return Err(Error::Precondition(format!(
                        "replayed product differs from the trace at n = {n}"
                    )));
                }
                next_cp += 1;
            }
        }

        let stats = term_stats_at(term, n, chart, budget, trace.seed)?;
        exact_means &= stats.exact;
        let b = chart.phi_inv(&stats.m)?;
        let step = (|| {
            let b_inv = b.inverse()?;
            let z = b_hat.multiply(&x)?.multiply(&b_inv)?.multiply(&b_hat_inv)?;
            let next_b_hat = b_hat.multiply(&b)?;
            let next_b_hat_inv = b_inv.multiply(&b_hat_inv)?;
            Ok::<_, Error>((z, next_b_hat, next_b_hat_inv))
        })();
        let (z, next_b_hat, next_b_hat_inv) = match step {
            Ok(v) => v,
            Err(Error::Singular { .. } | Error::NonFinite) => {
                aborted_at = Some(n);
                break;
            }
            Err(e) => return Err(e),
        };
        z_hat = z_hat.multiply(&z)?;
        b_hat = next_b_hat;
        b_hat_inv = next_b_hat_inv;
        let residual = (x_hat.matrix() - &z_hat.matrix().matmul(b_hat.matrix())).norm();
        steps.push(DecompositionStep {
            n,
            z,
            z_hat: z_hat.clone(),
            b_hat: b_hat.clone(),
            residual,
            x_hat_norm: x_hat.matrix().norm(),
        });
    }
    Ok(DecompositionTrace {
        path: trace.path,
        steps,
        exact_means,
        aborted_at,
    })
}
