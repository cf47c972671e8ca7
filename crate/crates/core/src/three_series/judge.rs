//! Verdict rules shared by the matrix analyzer and the scalar route.
//!
//! Scalar series are judged in three tiers:
//!
//! 1. closed form: when every term is exact, the terms at the geometric
//!    probes `N, 2N, 4N, ...` are compared with p-series — an identically zero
//!    tail or a log-log slope above [`SUMMABLE_SLOPE`] converges, a slope of at
//!    most one (terms no smaller than `c/n`) diverges;
//! 2. declared envelopes, validated against every computed term;
//! 3. the horizon Cauchy test `|S_N - S_{N/2}| < eps_c`, which can only yield
//!    `ConvergedNumerically` or `Inconclusive`.

use crate::law::Envelope;

use super::{Evidence, Status};

/// Number of doubling probes past the horizon.
pub const PROBES: u32 = 24;

/// Log-log slopes above this count as p-series with p > 1.
pub const SUMMABLE_SLOPE: f64 = 1.05;

/// Log-log slopes at or below this count as harmonic or heavier.
pub const HARMONIC_SLOPE: f64 = 1.0 + 1e-6;

/// How many trailing probes enter the comparison.
const TAIL: usize = 4;

/// Envelope checks allow `ENVELOPE_SE` standard errors of slack.
pub const ENVELOPE_SE: f64 = 4.0;

/// Outcome of one tier.
#[derive(Clone, Debug, PartialEq)]
pub struct Judgment {
    pub status: Status,
    pub evidence: Evidence,
    pub note: String,
}

impl Judgment {
    fn new(status: Status, evidence: Evidence, note: impl Into<String>) -> Self {
        Judgment {
            status,
            evidence,
            note: note.into(),
        }
    }
}

/// Tail comparison on probe values `t(N 2^j)`, `j = 0, 1, ...`.
/// `Some(Converges | Diverges)` when the comparator is decisive.
pub fn tail_comparison(probes: &[f64]) -> Option<(Status, String)> {
    if probes.len() < TAIL {
        return None;
    }
    let tail = &probes[probes.len() - TAIL..];
    let zeros = tail.iter().filter(|t| **t == 0.0).count();
    if zeros == TAIL {
        return Some((Status::Converges, "terms vanish identically in the tail".into()));
    }
    if zeros > 0 || tail.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return None;
    }
    let slopes: Vec<f64> = tail.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let text = format!("tail log-log slopes {slopes:.4?}");
    if slopes.iter().all(|s| *s > SUMMABLE_SLOPE) {
        Some((Status::Converges, format!("{text}: dominated by a p-series with p > 1")))
    } else if slopes.iter().all(|s| *s <= HARMONIC_SLOPE) {
        Some((Status::Diverges, format!("{text}: bounded below by c/n")))
    } else {
        None
    }
}

/// Input for judging one of the scalar series G1 / G3.
pub struct SumInput<'a> {
    /// Terms `t_1 .. t_N`.
    pub terms: &'a [f64],
    /// Standard errors of the terms; `None` when all are exact.
    pub se: Option<&'a [f64]>,
    /// Exact probe values past the horizon, when every term is exact.
    pub probes: Option<&'a [f64]>,
    pub upper: Option<Envelope>,
    /// `(c, alpha, from)` lower bound declared for this series.
    pub lower: Option<(f64, f64, u64)>,
    pub eps_c: f64,
}

fn se_at(se: Option<&[f64]>, i: usize) -> f64 {
    se.map_or(0.0, |s| s[i])
}

fn upper_holds(input: &SumInput<'_>, env: Envelope) -> bool {
    input.terms.iter().enumerate().all(|(i, t)| {
        let n = (i + 1) as f64;
        let bound = env.c * n.powf(-env.alpha);
        *t <= bound * (1.0 + 1e-12) + ENVELOPE_SE * se_at(input.se, i)
    })
}

fn lower_holds(input: &SumInput<'_>, c: f64, alpha: f64, from: u64) -> bool {
    let n_max = input.terms.len() as u64;
    if from == 0 || from > n_max {
        return false;
    }
    (from..=n_max).all(|n| {
        let i = (n - 1) as usize;
        let bound = c * (n as f64).powf(-alpha);
        input.terms[i] * (1.0 + 1e-12) + ENVELOPE_SE * se_at(input.se, i) >= bound
    })
}

pub fn judge_sum(input: &SumInput<'_>) -> Judgment {
    if let Some(probes) = input.probes {
        if let Some((status, note)) = tail_comparison(probes) {
            return Judgment::new(status, Evidence::ClosedForm, note);
        }
    }

    let upper = input
        .upper
        .filter(|e| e.alpha > 1.0)
        .map(|e| (e, upper_holds(input, e)));
    let lower = input
        .lower
        .filter(|l| l.1 <= 1.0)
        .map(|l| (l, lower_holds(input, l.0, l.1, l.2)));
    let mut notes = Vec::new();
    match (upper, lower) {
        (Some((e, true)), None | Some((_, false))) => {
            return Judgment::new(
                Status::Converges,
                Evidence::DeclaredEnvelope,
                format!("terms <= {} n^-{} on 1..={}", e.c, e.alpha, input.terms.len()),
            );
        }
        (None | Some((_, false)), Some(((c, alpha, from), true))) => {
            return Judgment::new(
                Status::Diverges,
                Evidence::DeclaredEnvelope,
                format!("terms >= {c} n^-{alpha} on {from}..={}", input.terms.len()),
            );
        }
        (Some((_, true)), Some((_, true))) => {
            notes.push("upper and lower envelopes both hold on the horizon; ignored".to_string());
        }
        (u, l) => {
            if matches!(u, Some((_, false))) {
                notes.push("declared upper envelope violated".to_string());
            }
            if matches!(l, Some((_, false))) {
                notes.push("declared lower envelope violated or out of range".to_string());
            }
        }
    }

    let n = input.terms.len();
    let tail: f64 = input.terms[n / 2..].iter().sum();
    let status = if tail.abs() < input.eps_c {
        Status::ConvergedNumerically
    } else {
        Status::Inconclusive
    };
    notes.push(format!("|S_N - S_N/2| = {tail:.3e} (eps_c = {:.1e})", input.eps_c));
    Judgment::new(status, Evidence::HorizonCauchy, notes.join("; "))
}

/// Input for judging the truncated-mean product (G2).
pub struct ProductInput<'a> {
    /// For a constant law with exact mean: whether the mean coordinate is 0.
    pub constant_exact_zero: Option<bool>,
    /// `||m||` at the probes when every mean is exact.
    pub mean_probes: Option<&'a [f64]>,
    /// Max displacement between the products at the Cauchy checkpoints.
    pub cauchy: f64,
    /// First `n` at which `b^_n` became singular or non-finite.
    pub escaped_at: Option<u64>,
    pub eps_c: f64,
}

pub fn judge_product(input: &ProductInput<'_>) -> Judgment {
    match input.constant_exact_zero {
        Some(true) => {
            return Judgment::new(
                Status::Converges,
                Evidence::ClosedForm,
                "identical truncated means equal to the identity",
            )
        }
        Some(false) => {
            return Judgment::new(
                Status::Diverges,
                Evidence::ClosedForm,
                "identical truncated means b != I: b^n has no limit in the group",
            )
        }
        None => {}
    }
    if let Some(n) = input.escaped_at {
        // strong evidence against convergence, but horizon evidence only
        return Judgment::new(
            Status::Inconclusive,
            Evidence::HorizonCauchy,
            format!("partial products of truncated means left the group numerically at n = {n}"),
        );
    }
    if let Some(probes) = input.mean_probes {
        // ||b_n - I|| is comparable to ||m_n||, so summable means give an
        // absolutely convergent product; non-summable ones decide nothing
        if let Some((Status::Converges, note)) = tail_comparison(probes) {
            return Judgment::new(Status::Converges, Evidence::ClosedForm, format!("||m_n||: {note}"));
        }
    }
    let status = if input.cauchy < input.eps_c {
        Status::ConvergedNumerically
    } else {
        Status::Inconclusive
    };
    Judgment::new(
        status,
        Evidence::HorizonCauchy,
        format!(
            "max checkpoint displacement {:.3e} (eps_c = {:.1e})",
            input.cauchy, input.eps_c
        ),
    )
}
