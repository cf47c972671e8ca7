//! The compensated process
//!
//! `M_n f = f(z^_n) - sum_{p <= n} sum_i w_{p,i} [ f(z^_{p-1} A_{p,i}) - f(z^_{p-1}) ]`,
//!
//! with `A_{p,i} = b^_{p-1} x_{p,i} b_p^{-1} b^_{p-1}^{-1}` for the atoms
//! `x_{p,i}` (weights `w_{p,i}`) of the law of `x_p`, is a martingale, so
//! `E[M_n f] = M_0 f = f(e)`. The inner integrals are exact sums over the
//! atoms, which is why only discrete laws are accepted.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::chart::ChartSpec;
use crate::error::{Error, Result};
use crate::group::GroupElement;
use crate::law::{LawSequence, LawTerm};
use crate::linalg::Matrix;
use crate::rng::{Purpose, StreamKey};

/// Absolute floor on the pass band, for estimates with zero spread.
pub const PASS_FLOOR: f64 = 1e-12;

/// `f(g) = psi(||g - I||^2 / w^2)` with `psi(t) = (1 - t)^3` on `[0, 1]`,
/// zero beyond; `f(e) = 1`, `0 <= f <= 1`, supported in the ball of radius `w`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CutoffFunction {
    pub width: f64,
}

impl Default for CutoffFunction {
    fn default() -> Self {
        CutoffFunction { width: 0.8 }
    }
}

impl CutoffFunction {
    pub fn new(width: f64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::Precondition(format!("cutoff width must be positive, got {width}")));
        }
        Ok(CutoffFunction { width })
    }

    pub fn eval(&self, g: &Matrix) -> f64 {
        let d = g.distance_from_identity();
        let t = d * d / (self.width * self.width);
        if t <= 1.0 {
            (1.0 - t).powi(3)
        } else {
            0.0
        }
    }

    pub fn id(&self) -> String {
        format!("cutoff(w={})", self.width)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MartingaleReport {
    pub test_function: String,
    pub m: u64,
    pub n: u64,
    pub estimate: f64,
    pub se: f64,
    pub replicates: u64,
    pub pass: bool,
}

/// Per step: the conjugated atoms `A_{p,i}` and cumulative weights.
struct Step {
    conj: Vec<Matrix>,
    weights: Vec<f64>,
    cdf: Vec<f64>,
}

fn atoms_of(term: &LawTerm, p: u64) -> Result<&[(GroupElement, f64)]> {
    term.atoms().ok_or(Error::NonAtomic { n: p })
}

fn plan(seq: &LawSequence, chart: &ChartSpec, n: u64) -> Result<Vec<Step>> {
    let dim = chart.dim();
    let mut b_hat = GroupElement::identity(dim);
    let mut steps = Vec::with_capacity(n as usize);
    for p in 1..=n {
        let term = seq.term(p)?;
        let atoms = atoms_of(&term, p)?;
        let stats = term
            .exact_term_stats(chart)?
            .expect("discrete laws have exact statistics");
        let b = chart.phi_inv(&stats.m)?;
        let b_inv = b.inverse()?;
        let b_hat_inv = b_hat.inverse()?;
        let conj = atoms
            .iter()
            .map(|(x, _)| {
                b_hat
                    .matrix()
                    .matmul(x.matrix())
                    .matmul(b_inv.matrix())
                    .matmul(b_hat_inv.matrix())
            })
            .collect();
        let weights: Vec<f64> = atoms.iter().map(|a| a.1).collect();
        let mut acc = 0.0;
        let cdf = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        steps.push(Step { conj, weights, cdf });
        b_hat = b_hat.multiply(&b)?;
    }
    Ok(steps)
}

/// `M_n f` along the path that picks atom `choose(p, step)` at step `p`.
fn martingale_value(
    steps: &[Step],
    f: &CutoffFunction,
    dim: usize,
    mut choose: impl FnMut(usize, &Step) -> usize,
) -> f64 {
    let mut z = Matrix::identity(dim);
    let mut compensator = 0.0;
    for (p, step) in steps.iter().enumerate() {
        let fz = f.eval(&z);
        for (a, w) in step.conj.iter().zip(&step.weights) {
            compensator += w * (f.eval(&z.matmul(a)) - fz);
        }
        z = z.matmul(&step.conj[choose(p, step)]);
    }
    f.eval(&z) - compensator
}

fn pick<R: Rng>(cdf: &[f64], rng: &mut R) -> usize {
    let u = rng.random::<f64>() * cdf[cdf.len() - 1];
    cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
}

/// Monte-Carlo estimate of `E[M_n f]` from `replicates` independent paths.
pub fn martingale_check(
    seq: &LawSequence,
    chart: &ChartSpec,
    f: &CutoffFunction,
    n: u64,
    replicates: u64,
    seed: u64,
) -> Result<MartingaleReport> {
    if replicates < 2 {
        return Err(Error::Precondition("need at least two replicates".into()));
    }
    if seq.dim() != chart.dim() {
        return Err(Error::DimensionMismatch {
            expected: chart.dim(),
            actual: seq.dim(),
        });
    }
    let steps = plan(seq, chart, n)?;
    let dim = chart.dim();
    let values: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = StreamKey::new(seed, Purpose::Martingale, n, r).stream();
            martingale_value(&steps, f, dim, |_, s| pick(&s.cdf, &mut rng))
        })
        .collect();
    let count = replicates as f64;
    let mean = values.iter().sum::<f64>() / count;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (count - 1.0);
    let se = (var / count).sqrt();
    let target = f.eval(&Matrix::identity(dim));
    Ok(MartingaleReport {
        test_function: f.id(),
        m: 0,
        n,
        estimate: mean,
        se,
        replicates,
        pass: (mean - target).abs() <= (3.0 * se).max(PASS_FLOOR),
    })
}

/// `E[M_n f]` by enumerating every atom sequence of length `n`.
pub fn exact_expectation(seq: &LawSequence, chart: &ChartSpec, f: &CutoffFunction, n: u64) -> Result<f64> {
    let steps = plan(seq, chart, n)?;
    let dim = chart.dim();
    let mut total = 0.0;
    let mut idx = vec![0usize; steps.len()];
    loop {
        let prob: f64 = idx.iter().zip(&steps).map(|(i, s)| s.weights[*i]).product();
        total += prob * martingale_value(&steps, f, dim, |p, _| idx[p]);
        // odometer increment
        let mut p = 0;
        loop {
            if p == steps.len() {
                return Ok(total);
            }
            idx[p] += 1;
            if idx[p] < steps[p].weights.len() {
                break;
            }
            idx[p] = 0;
            p += 1;
        }
    }
}

/// A reproducible sequence of discrete laws: at each index 2 or 3 atoms
/// `I + y` with entries of `y` uniform in `[-spread, spread]`, random weights.
/// Atoms may fall outside the chart, which exercises truncation.
pub fn random_atomic_sequence(seed: u64, index: u64, dim: usize, spread: f64) -> LawSequence {
    LawSequence::new(dim, move |p| {
        let mut rng = StreamKey::new(seed, Purpose::ScenarioGen, index, p).stream();
        let count = rng.random_range(2..=3usize);
        let raw: Vec<f64> = (0..count).map(|_| rng.random_range(0.2..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let mut atoms = Vec::with_capacity(count);
        for w in &raw {
            let y = Matrix::from_fn(dim, |_, _| rng.random_range(-spread..spread));
            atoms.push((GroupElement::perturbation(&y)?, w / total));
        }
        let s: f64 = atoms.iter().map(|a| a.1).sum();
        atoms[0].1 += 1.0 - s;
        LawTerm::atomic(atoms)
    })
}
