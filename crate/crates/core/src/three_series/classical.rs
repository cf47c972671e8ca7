//! The abelian case: sums of independent real random variables.
//!
//! A real `x` embeds as the unipotent matrix `I + x E12`; these multiply by
//! adding the corner entries, and `||I + x E12 - I|| = |x|`, so in the affine
//! chart of radius `r` the three series of the embedded products are exactly
//! Kolmogorov's:
//!
//! * K1: `sum P(|x_n| > r)`,
//! * K2: `sum E[x_n 1{|x_n| <= r}]`,
//! * K3: `sum Var(x_n 1{|x_n| <= r})`.
//!
//! [`kolmogorov_direct`] evaluates these with scalar arithmetic alone and
//! must reach the same sub-verdicts as [`classical_reduce`].

use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::chart::ChartSpec;
use crate::error::{Error, Result};
use crate::group::GroupElement;
use crate::law::{LawSequence, LawTerm, PROB_SUM_TOLERANCE};
use crate::linalg::Matrix;
use crate::rng::{Purpose, StreamKey};

use super::judge::{judge_product, judge_sum, ProductInput, SumInput, PROBES};
use super::{cauchy_checkpoints, evaluate, Overall, Policy, SeriesReport, Status};

/// A finitely supported real law.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalarLaw {
    atoms: Vec<(f64, f64)>,
}

impl ScalarLaw {
    /// Atoms as `(value, probability)`.
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidLaw("scalar law needs at least one atom".into()));
        }
        if atoms.iter().any(|(v, p)| !v.is_finite() || !(*p > 0.0)) {
            return Err(Error::InvalidLaw("scalar atoms need finite values and positive weights".into()));
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(Error::InvalidLaw(format!("scalar probabilities sum to {total}")));
        }
        Ok(ScalarLaw { atoms })
    }

    pub fn point(v: f64) -> Self {
        ScalarLaw { atoms: vec![(v, 1.0)] }
    }

    /// `+a` or `-a` with probability 1/2 each.
    pub fn signs(a: f64) -> Self {
        ScalarLaw {
            atoms: vec![(a, 0.5), (-a, 0.5)],
        }
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    /// `(P(|x| > r), E[x 1_U], Var(x 1_U))`, accumulated in the same order
    /// as the matrix enumeration.
    pub fn truncated_moments(&self, r: f64) -> (f64, f64, f64) {
        let mut p_out = 0.0;
        let mut mean = 0.0;
        for (v, p) in &self.atoms {
            if v.abs() <= r {
                mean += v * p;
            } else {
                p_out += p;
            }
        }
        let var = self
            .atoms
            .iter()
            .map(|(v, p)| {
                if v.abs() <= r {
                    p * (v - mean) * (v - mean)
                } else {
                    p * mean * mean
                }
            })
            .sum();
        (p_out.min(1.0), mean, var)
    }
}

type ScalarGenerator = dyn Fn(u64) -> ScalarLaw + Send + Sync;

/// The laws of independent real variables `x_1, x_2, ...`.
#[derive(Clone)]
pub struct ScalarSequence {
    generator: Arc<ScalarGenerator>,
    constant: bool,
}

impl std::fmt::Debug for ScalarSequence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScalarSequence")
            .field("first", &(self.generator)(1))
            .field("constant", &self.constant)
            .finish()
    }
}

impl ScalarSequence {
    pub fn new(generator: impl Fn(u64) -> ScalarLaw + Send + Sync + 'static) -> Self {
        ScalarSequence {
            generator: Arc::new(generator),
            constant: false,
        }
    }

    pub fn constant(law: ScalarLaw) -> Self {
        ScalarSequence {
            generator: Arc::new(move |_| law.clone()),
            constant: true,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.constant
    }

    pub fn term(&self, n: u64) -> ScalarLaw {
        (self.generator)(n)
    }
}

/// `I + x E12`.
pub fn embed(x: f64) -> GroupElement {
    GroupElement::new(Matrix::from_row_major(2, &[1.0, x, 0.0, 1.0]).expect("2x2"))
        .expect("unipotent matrices are invertible")
}

/// The matrix law sequence of the embedded variables.
pub fn embed_sequence(seq: &ScalarSequence) -> LawSequence {
    let embed_law = |law: ScalarLaw| {
        LawTerm::atomic(law.atoms.iter().map(|(v, p)| (embed(*v), *p)).collect())
    };
    if seq.constant {
        LawSequence::constant(embed_law(seq.term(1)).expect("validated scalar law"))
    } else {
        let seq = seq.clone();
        LawSequence::new(2, move |n| embed_law(seq.term(n)))
    }
}

/// Runs the matrix analyzer on the unipotent embedding in the affine chart
/// of radius `r`.
pub fn classical_reduce(seq: &ScalarSequence, r: f64, policy: &Policy) -> Result<SeriesReport> {
    evaluate(&embed_sequence(seq), &ChartSpec::affine(r, 2)?, policy)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KolmogorovReport {
    pub k1: Status,
    pub k2: Status,
    pub k3: Status,
    pub overall: Overall,
    pub s1: f64,
    pub mean_sum: f64,
    pub s3: f64,
}

impl KolmogorovReport {
    pub fn statuses(&self) -> [Status; 3] {
        [self.k1, self.k2, self.k3]
    }
}

/// Kolmogorov's three series evaluated directly on the scalar laws, under
/// the same verdict rules as the matrix analyzer.
pub fn kolmogorov_direct(seq: &ScalarSequence, r: f64, policy: &Policy) -> Result<KolmogorovReport> {
    let horizon = policy.horizon;
    if horizon < 10 {
        return Err(Error::Precondition(format!("horizon must be >= 10, got {horizon}")));
    }
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::InvalidChart(format!("radius must lie in (0, 1), got {r}")));
    }
    let moments: Vec<(f64, f64, f64)> = if seq.constant {
        vec![seq.term(1).truncated_moments(r); horizon as usize]
    } else {
        (1..=horizon).map(|n| seq.term(n).truncated_moments(r)).collect()
    };
    let probes: Vec<(f64, f64, f64)> = (0..=PROBES)
        .map(|j| seq.term(if seq.constant { 1 } else { horizon << j }).truncated_moments(r))
        .collect();

    let cps = cauchy_checkpoints(horizon);
    let mut sums_at = Vec::new();
    if cps[0] == 0 {
        sums_at.push(0.0);
    }
    let (mut s1, mut mean_sum, mut s3) = (0.0, 0.0, 0.0);
    for (i, (p, m, v)) in moments.iter().enumerate() {
        s1 += p;
        if *m != 0.0 {
            mean_sum = m + mean_sum;
        }
        s3 += v;
        if cps.binary_search(&((i + 1) as u64)).is_ok() {
            sums_at.push(mean_sum);
        }
    }
    let mut cauchy: f64 = 0.0;
    for (i, a) in sums_at.iter().enumerate() {
        for b in &sums_at[i + 1..] {
            cauchy = cauchy.max((b - a).abs());
        }
    }

    let col = |f: fn(&(f64, f64, f64)) -> f64, v: &[(f64, f64, f64)]| v.iter().map(f).collect::<Vec<_>>();
    let t1 = col(|t| t.0, &moments);
    let t3 = col(|t| t.2, &moments);
    let p1 = col(|t| t.0, &probes);
    let p2 = col(|t| t.1.abs(), &probes);
    let p3 = col(|t| t.2, &probes);
    let sum_input = |terms, probes| SumInput {
        terms,
        se: None,
        probes: Some(probes),
        upper: None,
        lower: None,
        eps_c: policy.eps_c,
    };
    let k1 = judge_sum(&sum_input(&t1, &p1)).status;
    let k3 = judge_sum(&sum_input(&t3, &p3)).status;
    let k2 = judge_product(&ProductInput {
        constant_exact_zero: seq.constant.then(|| moments[0].1 == 0.0),
        mean_probes: Some(&p2),
        cauchy,
        escaped_at: None,
        eps_c: policy.eps_c,
    })
    .status;
    Ok(KolmogorovReport {
        k1,
        k2,
        k3,
        overall: Overall::from_statuses(&[k1, k2, k3]),
        s1,
        mean_sum,
        s3,
    })
}

/// A randomized scalar scenario: atoms `v_i n^{-q}` with chart radius `r`.
#[derive(Clone, Debug)]
pub struct ScalarScenario {
    pub seq: ScalarSequence,
    pub r: f64,
    pub q: f64,
    pub base: ScalarLaw,
}

/// Decay exponents drawn by [`random_scalar_scenarios`].
pub const SCENARIO_EXPONENTS: [f64; 7] = [0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0];

/// `count` reproducible scenarios mixing symmetric and drifting atoms,
/// constant and decaying scales.
pub fn random_scalar_scenarios(seed: u64, count: usize) -> Vec<ScalarScenario> {
    (0..count as u64)
        .map(|i| {
            let mut rng = StreamKey::new(seed, Purpose::ScenarioGen, i, 0).stream();
            let q = SCENARIO_EXPONENTS[rng.random_range(0..SCENARIO_EXPONENTS.len())];
            let r = rng.random_range(0.3..0.9);
            let atoms = rng.random_range(1..=4usize);
            let symmetric = rng.random_bool(0.5);
            let mut raw: Vec<(f64, f64)> = (0..atoms)
                .map(|_| (rng.random_range(-1.2..1.2), rng.random_range(0.1..1.0)))
                .collect();
            if symmetric {
                let mirrored: Vec<(f64, f64)> = raw.iter().map(|(v, w)| (-v, *w)).collect();
                raw.extend(mirrored);
            }
            let total: f64 = raw.iter().map(|a| a.1).sum();
            let mut atoms: Vec<(f64, f64)> = raw.into_iter().map(|(v, w)| (v, w / total)).collect();
            let drift: f64 = 1.0 - atoms.iter().map(|a| a.1).sum::<f64>();
            atoms[0].1 += drift;
            let base = ScalarLaw::new(atoms).expect("normalized weights");
            let seq = if q == 0.0 {
                ScalarSequence::constant(base.clone())
            } else {
                let b = base.clone();
                ScalarSequence::new(move |n| {
                    let s = (n as f64).powf(-q);
                    ScalarLaw {
                        atoms: b.atoms.iter().map(|(v, p)| (v * s, *p)).collect(),
                    }
                })
            };
            ScalarScenario { seq, r, q, base }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn policy() -> Policy {
        Policy {
            horizon: 1000,
            budget: 0,
            eps_c: 1e-6,
            seed: 0,
        }
    }

    fn statuses(rep: &SeriesReport) -> [Status; 3] {
        [rep.g1.status, rep.g2.status, rep.g3.status]
    }

    #[test]
    fn embedding_adds() {
        let a = embed(0.3);
        let b = embed(-1.1);
        let ab = a.multiply(&b).unwrap();
        assert!((ab.matrix()[(0, 1)] - (0.3 - 1.1)).abs() < 1e-15);
        assert_eq!(ab.matrix()[(1, 0)], 0.0);
        assert_eq!(embed(0.25).distance_from_identity(), 0.25);
    }

    #[test]
    fn zero_sequence_converges() {
        let seq = ScalarSequence::constant(ScalarLaw::point(0.0));
        let direct = kolmogorov_direct(&seq, 0.5, &policy()).unwrap();
        assert_eq!(direct.overall, Overall::Converges);
        assert_eq!(classical_reduce(&seq, 0.5, &policy()).unwrap().overall, Overall::Converges);
    }

    #[test]
    fn inverse_signs_converge() {
        let seq = ScalarSequence::new(|n| ScalarLaw::signs(1.0 / n as f64));
        let direct = kolmogorov_direct(&seq, 0.5, &policy()).unwrap();
        assert_eq!(direct.statuses(), [Status::Converges; 3]);
        // K3 is sum 1/n^2 minus the n = 1 term (|x_1| = 1 > r is truncated)
        let expect: f64 = (2..=1000).map(|n| 1.0 / (n * n) as f64).sum();
        assert!((direct.s3 - expect).abs() < 1e-12);
        let rep = classical_reduce(&seq, 0.5, &policy()).unwrap();
        assert_eq!(statuses(&rep), direct.statuses());
    }

    #[test]
    fn inverse_sqrt_signs_diverge() {
        let seq = ScalarSequence::new(|n| ScalarLaw::signs(1.0 / (n as f64).sqrt()));
        let direct = kolmogorov_direct(&seq, 0.5, &policy()).unwrap();
        assert_eq!(direct.k3, Status::Diverges);
        assert_eq!(direct.overall, Overall::Diverges);
        let rep = classical_reduce(&seq, 0.5, &policy()).unwrap();
        assert_eq!(statuses(&rep), direct.statuses());
        assert_eq!(rep.overall, Overall::Diverges);
    }

    #[test]
    fn randomized_scenarios_agree() {
        for sc in random_scalar_scenarios(2024, 20) {
            let direct = kolmogorov_direct(&sc.seq, sc.r, &policy()).unwrap();
            let rep = classical_reduce(&sc.seq, sc.r, &policy()).unwrap();
            assert_eq!(statuses(&rep), direct.statuses(), "{sc:?}");
        }
    }

    #[test]
    fn scenario_generator_is_reproducible_and_varied() {
        let a = random_scalar_scenarios(5, 40);
        let b = random_scalar_scenarios(5, 40);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.base, y.base);
            assert_eq!((x.q, x.r), (y.q, y.r));
        }
        let overall: std::collections::HashSet<_> = a
            .iter()
            .map(|s| kolmogorov_direct(&s.seq, s.r, &policy()).unwrap().overall)
            .collect();
        assert!(overall.len() >= 2, "{overall:?}");
    }
}
