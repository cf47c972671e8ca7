//! Monte-Carlo ground truth for the analyzer.
//!
//! Paths of `x^_n = x_1 ... x_n` are simulated with one keyed stream per
//! `(n, path)`, so any path can be replayed factor by factor and the parallel
//! schedule never affects a bit. Convergence of a path is read off the tail
//! statistic
//!
//! `D_m = max { ||x^_p^{-1} x^_n - I|| : m <= p < n <= N, p, n on the grid }`,
//!
//! which is nonincreasing in `m` by construction. A product converges iff
//! its suffix products `x_{m+1} ... x_n` tend to the identity, so `D_{m*}`
//! small at a late burn-in `m*` is the empirical signature of convergence.
//!
//! [`decompose`](decompose::decompose) and
//! [`martingale_check`](martingale::martingale_check) verify the structural
//! identities behind the three-series theorem along simulated paths.

pub mod decompose;
pub mod martingale;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::group::{lu_inverse, GroupElement};
use crate::law::{term_at, LawSequence, LawTerm};
use crate::rng::{Purpose, StreamKey};

/// Default convergence tolerance for `D_{m*}`.
pub const DEFAULT_EPS: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SimOptions {
    pub horizon: u64,
    pub paths: u64,
    pub seed: u64,
    /// Burn-in index; `None` means `N / 2`.
    pub m_star: Option<u64>,
}

impl SimOptions {
    pub fn new(horizon: u64, paths: u64, seed: u64) -> Self {
        SimOptions {
            horizon,
            paths,
            seed,
            m_star: None,
        }
    }

    pub fn m_star(&self) -> u64 {
        self.m_star.unwrap_or(self.horizon / 2)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProductTrace {
    pub path: u64,
    pub seed: u64,
    pub horizon: u64,
    /// `(n, x^_n)` on the checkpoint grid.
    pub checkpoints: Vec<(u64, GroupElement)>,
    /// `(m, D_m)` for every grid point `m`.
    pub tail_displacements: Vec<(u64, f64)>,
    /// First index at which the product left the invertible, finite
    /// matrices; the path then counts as divergent with `D_m = inf`.
    pub escaped_at: Option<u64>,
}

impl ProductTrace {
    pub fn tail_at(&self, m: u64) -> Option<f64> {
        self.tail_displacements
            .iter()
            .find(|(n, _)| *n == m)
            .map(|(_, d)| *d)
    }

    pub fn final_product(&self) -> Option<&GroupElement> {
        match self.escaped_at {
            Some(_) => None,
            None => self.checkpoints.last().map(|(_, x)| x),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathVerdict {
    pub converged_fraction: f64,
    pub per_path: Vec<bool>,
    pub eps: f64,
    pub m_star: u64,
}

/// `{N >> j} ∪ {m* + 2^j <= N} ∪ {m*, N}`, ascending, without 0.
pub fn checkpoint_grid(horizon: u64, m_star: u64) -> Vec<u64> {
    let mut grid: Vec<u64> = (0..64).map(|j| horizon >> j).take_while(|n| *n > 0).collect();
    grid.extend(
        (0..64)
            .map_while(|j| 1u64.checked_shl(j))
            .map_while(|s| m_star.checked_add(s))
            .take_while(|n| *n <= horizon),
    );
    if m_star > 0 {
        grid.push(m_star);
    }
    grid.push(horizon);
    grid.sort_unstable();
    grid.dedup();
    grid
}

/// The stream that draws `x_n` on `path`.
pub fn path_stream(seed: u64, n: u64, path: u64) -> crate::rng::Stream {
    StreamKey::new(seed, Purpose::PathSample, n, path).stream()
}

/// Draws `x_n` for `path`, exactly as [`simulate_paths`] does.
pub fn draw_factor(term: &LawTerm, seed: u64, n: u64, path: u64) -> Result<GroupElement> {
    if term.is_identity() {
        return Ok(GroupElement::identity(term.dim()));
    }
    term.sample(&mut path_stream(seed, n, path))
        .map_err(|e| Error::Simulation {
            n,
            path,
            source: Box::new(e),
        })
}

fn simulate_one(terms: &[LawTerm], grid: &[u64], opts: &SimOptions, path: u64) -> Result<ProductTrace> {
    let dim = terms[0].dim();
    let mut x_hat = GroupElement::identity(dim);
    let mut checkpoints = Vec::with_capacity(grid.len());
    let mut escaped_at = None;
    let mut next = 0;
    for n in 1..=opts.horizon {
        let term = term_at(terms, n);
        if !term.is_identity() {
            let x = draw_factor(term, opts.seed, n, path)?;
            match x_hat.multiply(&x) {
                Ok(p) => x_hat = p,
                Err(Error::Singular { .. } | Error::NonFinite) => {
                    escaped_at = Some(n);
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if grid.get(next) == Some(&n) {
            checkpoints.push((n, x_hat.clone()));
            next += 1;
        }
    }
    let tail_displacements = match escaped_at {
        Some(_) => grid.iter().map(|m| (*m, f64::INFINITY)).collect(),
        None => tail_statistic(&checkpoints),
    };
    Ok(ProductTrace {
        path,
        seed: opts.seed,
        horizon: opts.horizon,
        checkpoints,
        tail_displacements,
        escaped_at,
    })
}

/// Suffix maxima of pairwise displacements over the checkpoints.
fn tail_statistic(checkpoints: &[(u64, GroupElement)]) -> Vec<(u64, f64)> {
    let len = checkpoints.len();
    let inverses: Vec<Option<crate::linalg::Matrix>> = checkpoints
        .iter()
        .map(|(_, x)| lu_inverse(x.matrix()).ok())
        .collect();
    let mut out = vec![(0u64, 0.0f64); len];
    let mut running: f64 = 0.0;
    for i in (0..len).rev() {
        let (m, x_m) = &checkpoints[i];
        for (_, x_n) in &checkpoints[i + 1..] {
            let d = if x_m == x_n {
                0.0
            } else {
                match &inverses[i] {
                    Some(inv) => crate::group::displacement_with_inverse(inv, x_n.matrix()),
                    None => f64::INFINITY,
                }
            };
            running = running.max(if d.is_nan() { f64::INFINITY } else { d });
        }
        out[i] = (*m, running);
    }
    out
}

/// Simulates `opts.paths` independent product paths up to `opts.horizon`.
pub fn simulate_paths(seq: &LawSequence, opts: &SimOptions) -> Result<Vec<ProductTrace>> {
    if opts.horizon < 2 {
        return Err(Error::Precondition(format!("horizon must be >= 2, got {}", opts.horizon)));
    }
    if opts.paths < 1 {
        return Err(Error::Precondition("need at least one path".into()));
    }
    let m_star = opts.m_star();
    if m_star >= opts.horizon {
        return Err(Error::Precondition(format!(
            "m_star = {m_star} must be below the horizon {}",
            opts.horizon
        )));
    }
    let terms = seq.terms_up_to(opts.horizon)?;
    let grid = checkpoint_grid(opts.horizon, m_star);
    (0..opts.paths)
        .into_par_iter()
        .map(|path| simulate_one(&terms, &grid, opts, path))
        .collect()
}

/// Marks a path converged iff `D_{m*} < eps`.
pub fn as_convergence_test(traces: &[ProductTrace], eps: f64, m_star: u64) -> Result<PathVerdict> {
    if traces.is_empty() {
        return Err(Error::Precondition("no traces to test".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::Precondition(format!("eps must be > 0, got {eps}")));
    }
    let per_path = traces
        .iter()
        .map(|t| {
            if m_star >= t.horizon {
                return Err(Error::Precondition(format!(
                    "m_star = {m_star} must be below the horizon {}",
                    t.horizon
                )));
            }
            t.tail_at(m_star)
                .map(|d| d < eps)
                .ok_or_else(|| Error::Precondition(format!("m_star = {m_star} is not a checkpoint")))
        })
        .collect::<Result<Vec<bool>>>()?;
    let converged_fraction = per_path.iter().filter(|c| **c).count() as f64 / per_path.len() as f64;
    Ok(PathVerdict {
        converged_fraction,
        per_path,
        eps,
        m_star,
    })
}
