//! Laws of the factors `x_n` and the per-term statistics the three series
//! consume.
//!
//! For a law `mu` and a chart `(U, phi)` the statistics are
//!
//! * `p_out = P(x not in U)`,
//! * `m = E[phi(x) 1_U]` (the coordinates of the truncated mean `b`),
//! * `s2 = E[|| phi(x) 1_U - m ||^2]`.
//!
//! Discrete laws are enumerated exactly, Gaussian perturbations in the affine
//! chart (and exponentiated Gaussians in the exponential chart) use the
//! chi-square closed forms, and everything else is estimated by Monte-Carlo
//! with antithetic pairs `(y, -y)`; the pairing makes `m` exactly zero for the
//! symmetric perturbation laws, which keeps the product of estimated truncated
//! means from drifting on noise.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::chart::{ChartKind, ChartSpec};
use crate::error::{Error, Result};
use crate::group::{mat_exp, GroupElement, TangentVector};
use crate::linalg::Matrix;
use crate::special::{gamma_p, gamma_q};

/// Probabilities must sum to one within this.
pub const PROB_SUM_TOLERANCE: f64 = 1e-12;

/// Smallest Monte-Carlo budget accepted by [`LawTerm::term_stats`].
pub const MIN_BUDGET: usize = 100;

/// Redraws allowed when a Gaussian perturbation lands on a singular matrix.
pub const GAUSSIAN_RETRIES: usize = 8;

/// Frobenius tolerance for matching products in the subgroup closure check.
const CLOSURE_TOLERANCE: f64 = 1e-9;

/// Per-index statistics feeding the three series.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TermStats {
    pub p_out: f64,
    pub m: TangentVector,
    pub s2: f64,
    pub exact: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se_p: Option<f64>,
    /// Root of the summed entry variances of `m`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se_s2: Option<f64>,
}

impl TermStats {
    pub fn exact(p_out: f64, m: TangentVector, s2: f64) -> Self {
        TermStats {
            p_out,
            m,
            s2,
            exact: true,
            se_p: None,
            se_m: None,
            se_s2: None,
        }
    }

    /// Statistics of the point mass at the identity.
    pub fn trivial(dim: usize) -> Self {
        Self::exact(0.0, TangentVector::zero(dim), 0.0)
    }
}

#[derive(Clone)]
enum LawKind {
    Atomic {
        atoms: Vec<(GroupElement, f64)>,
        cdf: Vec<f64>,
        haar: bool,
    },
    Gaussian {
        dim: usize,
        sigma: f64,
    },
    UniformBall {
        dim: usize,
        rho: f64,
    },
    ExpGaussian {
        dim: usize,
        sigma: f64,
    },
}

/// The law of a single factor.
#[derive(Clone)]
pub struct LawTerm {
    kind: LawKind,
}

impl fmt::Debug for LawTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            LawKind::Atomic { atoms, haar, .. } => f
                .debug_struct(if *haar { "HaarFiniteSubgroup" } else { "AtomicDiscrete" })
                .field("atoms", atoms)
                .finish(),
            LawKind::Gaussian { dim, sigma } => f
                .debug_struct("GaussianPerturbation")
                .field("dim", dim)
                .field("sigma", sigma)
                .finish(),
            LawKind::UniformBall { dim, rho } => f
                .debug_struct("UniformBallPerturbation")
                .field("dim", dim)
                .field("rho", rho)
                .finish(),
            LawKind::ExpGaussian { dim, sigma } => f
                .debug_struct("ExpGaussian")
                .field("dim", dim)
                .field("sigma", sigma)
                .finish(),
        }
    }
}

fn cumulative(probs: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    probs
        .map(|p| {
            acc += p;
            acc
        })
        .collect()
}

impl LawTerm {
    /// Discrete law on the given atoms.
    pub fn atomic(atoms: Vec<(GroupElement, f64)>) -> Result<Self> {
        let Some(first) = atoms.first() else {
            return Err(Error::InvalidLaw("atomic law needs at least one atom".into()));
        };
        let dim = first.0.dim();
        let mut total = 0.0;
        for (x, p) in &atoms {
            if x.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: x.dim(),
                });
            }
            if !(*p > 0.0 && p.is_finite()) {
                return Err(Error::InvalidLaw(format!(
                    "atom probabilities must be positive, got {p}"
                )));
            }
            total += p;
        }
        if (total - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(Error::InvalidLaw(format!(
                "atom probabilities sum to {total}, not 1"
            )));
        }
        let cdf = cumulative(atoms.iter().map(|a| a.1));
        Ok(LawTerm {
            kind: LawKind::Atomic {
                atoms,
                cdf,
                haar: false,
            },
        })
    }

    /// Point mass at `x`.
    pub fn constant(x: GroupElement) -> Self {
        LawTerm {
            kind: LawKind::Atomic {
                atoms: vec![(x, 1.0)],
                cdf: vec![1.0],
                haar: false,
            },
        }
    }

    /// `x = I + y` with i.i.d. `N(0, sigma^2)` entries.
    pub fn gaussian(dim: usize, sigma: f64) -> Result<Self> {
        check_dim(dim)?;
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidLaw(format!("sigma must be positive, got {sigma}")));
        }
        Ok(LawTerm {
            kind: LawKind::Gaussian { dim, sigma },
        })
    }

    /// `x = I + y` with `y` uniform on the Frobenius ball of radius `rho`.
    pub fn uniform_ball(dim: usize, rho: f64) -> Result<Self> {
        check_dim(dim)?;
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::InvalidLaw(format!("rho must lie in (0, 1), got {rho}")));
        }
        Ok(LawTerm {
            kind: LawKind::UniformBall { dim, rho },
        })
    }

    /// `x = exp(y)` with i.i.d. `N(0, sigma^2)` entries.
    pub fn exp_gaussian(dim: usize, sigma: f64) -> Result<Self> {
        check_dim(dim)?;
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidLaw(format!("sigma must be positive, got {sigma}")));
        }
        Ok(LawTerm {
            kind: LawKind::ExpGaussian { dim, sigma },
        })
    }

    /// Normalized Haar measure on a finite subgroup given by its elements.
    /// Rejects lists that are not closed under products and inverses.
    pub fn haar(elements: Vec<GroupElement>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::InvalidLaw("subgroup needs at least one element".into()));
        }
        let dim = elements[0].dim();
        if let Some(bad) = elements.iter().find(|g| g.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: bad.dim(),
            });
        }
        let find = |m: &Matrix| {
            elements
                .iter()
                .position(|g| (g.matrix() - m).norm() <= CLOSURE_TOLERANCE)
        };
        for (i, a) in elements.iter().enumerate() {
            if elements[..i]
                .iter()
                .any(|b| (a.matrix() - b.matrix()).norm() <= CLOSURE_TOLERANCE)
            {
                return Err(Error::InvalidLaw("subgroup elements must be distinct".into()));
            }
            let inv = a.inverse()?;
            if find(inv.matrix()).is_none() {
                return Err(Error::InvalidLaw(format!(
                    "element {i} has no inverse in the list"
                )));
            }
            for (j, b) in elements.iter().enumerate() {
                if find(&a.matrix().matmul(b.matrix())).is_none() {
                    return Err(Error::InvalidLaw(format!(
                        "product of elements {i} and {j} is not in the list"
                    )));
                }
            }
        }
        let w = 1.0 / elements.len() as f64;
        let cdf = cumulative(std::iter::repeat(w).take(elements.len()));
        Ok(LawTerm {
            kind: LawKind::Atomic {
                atoms: elements.into_iter().map(|g| (g, w)).collect(),
                cdf,
                haar: true,
            },
        })
    }

    /// The cyclic group of 2 x 2 rotations of the given order, with Haar weights.
    pub fn haar_rotations(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidLaw("rotation order must be at least 1".into()));
        }
        let elements = (0..order)
            .map(|j| rotation_exact(j, order))
            .collect::<Result<Vec<_>>>()?;
        Self::haar(elements)
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            LawKind::Atomic { atoms, .. } => atoms[0].0.dim(),
            LawKind::Gaussian { dim, .. }
            | LawKind::UniformBall { dim, .. }
            | LawKind::ExpGaussian { dim, .. } => *dim,
        }
    }

    /// Atoms and weights of a discrete law (Haar laws included).
    pub fn atoms(&self) -> Option<&[(GroupElement, f64)]> {
        match &self.kind {
            LawKind::Atomic { atoms, .. } => Some(atoms),
            _ => None,
        }
    }

    pub fn is_haar(&self) -> bool {
        matches!(self.kind, LawKind::Atomic { haar: true, .. })
    }

    /// True when this is the point mass at the identity.
    pub fn is_identity(&self) -> bool {
        match &self.kind {
            LawKind::Atomic { atoms, .. } => {
                atoms.len() == 1 && atoms[0].0 == GroupElement::identity(atoms[0].0.dim())
            }
            _ => false,
        }
    }

    /// Whether [`term_stats`](Self::term_stats) is exact in this chart.
    pub fn has_exact_stats(&self, chart: &ChartSpec) -> bool {
        match self.kind {
            LawKind::Atomic { .. } => true,
            LawKind::Gaussian { .. } => chart.kind() == ChartKind::Affine,
            LawKind::ExpGaussian { .. } => chart.kind() == ChartKind::Exponential,
            LawKind::UniformBall { .. } => false,
        }
    }

    /// `E ||x - I||_F^2` when known in closed form.
    pub fn second_moment_about_identity(&self) -> Option<f64> {
        match &self.kind {
            LawKind::Atomic { atoms, .. } => Some(
                atoms
                    .iter()
                    .map(|(x, p)| p * x.distance_from_identity().powi(2))
                    .sum(),
            ),
            LawKind::Gaussian { dim, sigma } => Some((dim * dim) as f64 * sigma * sigma),
            LawKind::UniformBall { dim, rho } => {
                let d = (dim * dim) as f64;
                Some(d / (d + 2.0) * rho * rho)
            }
            LawKind::ExpGaussian { .. } => None,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<GroupElement> {
        match &self.kind {
            LawKind::Atomic { atoms, cdf, .. } => Ok(atoms[pick(cdf, rng)].0.clone()),
            LawKind::Gaussian { dim, sigma } => {
                for _ in 0..GAUSSIAN_RETRIES {
                    let y = gaussian_matrix(*dim, *sigma, rng);
                    if let Ok(x) = GroupElement::perturbation(&y) {
                        return Ok(x);
                    }
                }
                Err(Error::Sampler(format!(
                    "{GAUSSIAN_RETRIES} consecutive singular Gaussian draws (sigma = {sigma})"
                )))
            }
            LawKind::UniformBall { dim, rho } => {
                GroupElement::perturbation(&ball_matrix(*dim, *rho, rng))
            }
            LawKind::ExpGaussian { dim, sigma } => {
                mat_exp(&TangentVector::new(gaussian_matrix(*dim, *sigma, rng))?)
            }
        }
    }

    /// Exact statistics when available in this chart, `None` otherwise.
    pub fn exact_term_stats(&self, chart: &ChartSpec) -> Result<Option<TermStats>> {
        check_chart(self, chart)?;
        match &self.kind {
            LawKind::Atomic { atoms, .. } => Ok(Some(enumerate(atoms, chart))),
            LawKind::Gaussian { dim, sigma } if chart.kind() == ChartKind::Affine => {
                Ok(Some(gaussian_closed_form(*dim, *sigma, chart.radius())))
            }
            // phi(exp y) = y whenever ||y|| <= r, so the exponential chart sees
            // exactly the Gaussian coordinates
            LawKind::ExpGaussian { dim, sigma } if chart.kind() == ChartKind::Exponential => {
                Ok(Some(gaussian_closed_form(*dim, *sigma, chart.radius())))
            }
            _ => Ok(None),
        }
    }

    /// Exact statistics when available, otherwise a Monte-Carlo estimate
    /// from `budget` draws.
    pub fn term_stats<R: Rng + ?Sized>(
        &self,
        chart: &ChartSpec,
        budget: usize,
        rng: &mut R,
    ) -> Result<TermStats> {
        match self.exact_term_stats(chart)? {
            Some(stats) => Ok(stats),
            None => self.monte_carlo_stats(chart, budget, rng),
        }
    }

    /// Monte-Carlo statistics regardless of exact availability. Continuous
    /// laws use `budget / 2` antithetic pairs; discrete laws plain draws.
    pub fn monte_carlo_stats<R: Rng + ?Sized>(
        &self,
        chart: &ChartSpec,
        budget: usize,
        rng: &mut R,
    ) -> Result<TermStats> {
        check_chart(self, chart)?;
        if budget < MIN_BUDGET {
            return Err(Error::BudgetTooSmall {
                budget,
                min: MIN_BUDGET,
            });
        }
        let k = self.dim();
        let mut acc = MomentAccumulator::new(k);
        match &self.kind {
            LawKind::Atomic { .. } => {
                for _ in 0..budget {
                    let x = self.sample(rng)?;
                    let c = chart.coordinates(&x);
                    acc.push_single(c.as_ref().map(TangentVector::matrix));
                }
            }
            _ => {
                for _ in 0..budget / 2 {
                    let y = match &self.kind {
                        LawKind::Gaussian { dim, sigma } | LawKind::ExpGaussian { dim, sigma } => {
                            gaussian_matrix(*dim, *sigma, rng)
                        }
                        LawKind::UniformBall { dim, rho } => ball_matrix(*dim, *rho, rng),
                        LawKind::Atomic { .. } => unreachable!(),
                    };
                    let plus = self.coordinates_of_draw(&y, chart)?;
                    let minus = self.coordinates_of_draw(&y.scale(-1.0), chart)?;
                    acc.push_pair(
                        plus.as_ref().map(TangentVector::matrix),
                        minus.as_ref().map(TangentVector::matrix),
                    );
                }
            }
        }
        acc.finish()
    }

    /// `b = phi^{-1}(m)`.
    pub fn truncated_mean<R: Rng + ?Sized>(
        &self,
        chart: &ChartSpec,
        budget: usize,
        rng: &mut R,
    ) -> Result<GroupElement> {
        chart.phi_inv(&self.term_stats(chart, budget, rng)?.m)
    }

    /// Chart coordinates of the factor built from the Gaussian/ball draw `y`,
    /// `None` when it falls outside the chart. A draw that is singular is
    /// far outside every chart and counts as out.
    fn coordinates_of_draw(&self, y: &Matrix, chart: &ChartSpec) -> Result<Option<TangentVector>> {
        let perturbation = !matches!(self.kind, LawKind::ExpGaussian { .. });
        if perturbation && chart.kind() == ChartKind::Affine {
            // phi(I + y) = y; taken directly so that phi(I - y) = -phi(I + y)
            // holds bit for bit
            return (y.norm() <= chart.radius()).then(|| TangentVector::new(y.clone())).transpose();
        }
        let x = match self.kind {
            LawKind::ExpGaussian { .. } => mat_exp(&TangentVector::new(y.clone())?)?,
            _ => match GroupElement::perturbation(y) {
                Ok(x) => x,
                Err(Error::Singular { .. }) => return Ok(None),
                Err(e) => return Err(e),
            },
        };
        Ok(chart.coordinates(&x))
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 {
        return Err(Error::InvalidLaw("dimension must be at least 1".into()));
    }
    Ok(())
}

fn check_chart(law: &LawTerm, chart: &ChartSpec) -> Result<()> {
    if law.dim() != chart.dim() {
        return Err(Error::DimensionMismatch {
            expected: chart.dim(),
            actual: law.dim(),
        });
    }
    Ok(())
}

/// Rotation by `2 pi j / order`, with the quarter turns written exactly so
/// that products of group elements close without rounding residue.
fn rotation_exact(j: usize, order: usize) -> Result<GroupElement> {
    let (c, s) = if (4 * j) % order == 0 {
        match (4 * j / order) % 4 {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, -1.0),
        }
    } else {
        let angle = std::f64::consts::TAU * j as f64 / order as f64;
        (angle.cos(), angle.sin())
    };
    GroupElement::new(Matrix::from_row_major(2, &[c, -s, s, c])?)
}

fn pick<R: Rng + ?Sized>(cdf: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random::<f64>() * cdf[cdf.len() - 1];
    cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
}

fn gaussian_matrix<R: Rng + ?Sized>(dim: usize, sigma: f64, rng: &mut R) -> Matrix {
    Matrix::from_fn(dim, |_, _| sigma * rng.sample::<f64, _>(StandardNormal))
}

/// Uniform on the Frobenius ball: Gaussian direction, radius `rho U^{1/d}`.
fn ball_matrix<R: Rng + ?Sized>(dim: usize, rho: f64, rng: &mut R) -> Matrix {
    let d = (dim * dim) as f64;
    loop {
        let g = gaussian_matrix(dim, 1.0, rng);
        let n = g.norm();
        if n > 0.0 {
            let radius = rho * rng.random::<f64>().powf(1.0 / d);
            return g.scale(radius / n);
        }
    }
}

fn enumerate(atoms: &[(GroupElement, f64)], chart: &ChartSpec) -> TermStats {
    let k = chart.dim();
    let coords: Vec<(Option<TangentVector>, f64)> = atoms
        .iter()
        .map(|(x, p)| (chart.coordinates(x), *p))
        .collect();
    let mut p_out = 0.0;
    let mut m = Matrix::zeros(k);
    for (c, p) in &coords {
        match c {
            Some(v) => m += &v.matrix().scale(*p),
            None => p_out += p,
        }
    }
    let m_norm_sq = m.norm_sq();
    let s2 = coords
        .iter()
        .map(|(c, p)| match c {
            Some(v) => p * (v.matrix() - &m).norm_sq(),
            None => p * m_norm_sq,
        })
        .sum();
    TermStats::exact(
        p_out.min(1.0),
        TangentVector::new(m).expect("finite atoms give a finite mean"),
        s2,
    )
}

/// `||y||^2 / sigma^2 ~ chi-square(d)`, `d = k^2`:
/// `p_out = Q(d/2, r^2/(2 sigma^2))`, `s2 = d sigma^2 P(d/2 + 1, r^2/(2 sigma^2))`.
pub fn gaussian_closed_form(dim: usize, sigma: f64, radius: f64) -> TermStats {
    let d = (dim * dim) as f64;
    let x = radius * radius / (2.0 * sigma * sigma);
    TermStats::exact(
        gamma_q(d / 2.0, x),
        TangentVector::zero(dim),
        d * sigma * sigma * gamma_p(d / 2.0 + 1.0, x),
    )
}

/// Running sums for the Monte-Carlo statistics. Each observation is the
/// average over one antithetic pair (or a single draw), so the standard
/// errors account for the pairing.
struct MomentAccumulator {
    n: usize,
    out_sum: f64,
    out_sq: f64,
    c_sum: Matrix,
    c_sq: Matrix,
    q_sum: f64,
    q_sq: f64,
    // cross terms for the delta-method variance of s2
    qc_sum: Matrix,
    obs: Vec<(f64, Matrix)>,
}

impl MomentAccumulator {
    fn new(k: usize) -> Self {
        MomentAccumulator {
            n: 0,
            out_sum: 0.0,
            out_sq: 0.0,
            c_sum: Matrix::zeros(k),
            c_sq: Matrix::zeros(k),
            q_sum: 0.0,
            q_sq: 0.0,
            qc_sum: Matrix::zeros(k),
            obs: Vec::new(),
        }
    }

    fn push(&mut self, out: f64, c: Matrix, q: f64) {
        self.n += 1;
        self.out_sum += out;
        self.out_sq += out * out;
        self.c_sum += &c;
        for (s, v) in self.c_sq.as_mut_slice().iter_mut().zip(c.as_slice()) {
            *s += v * v;
        }
        self.q_sum += q;
        self.q_sq += q * q;
        self.qc_sum += &c.scale(q);
        self.obs.push((q, c));
    }

    fn push_single(&mut self, phi: Option<&Matrix>) {
        let k = self.c_sum.dim();
        match phi {
            Some(v) => self.push(0.0, v.clone(), v.norm_sq()),
            None => self.push(1.0, Matrix::zeros(k), 0.0),
        }
    }

    fn push_pair(&mut self, a: Option<&Matrix>, b: Option<&Matrix>) {
        let k = self.c_sum.dim();
        let zero = Matrix::zeros(k);
        let (out_a, va) = a.map_or((1.0, &zero), |v| (0.0, v));
        let (out_b, vb) = b.map_or((1.0, &zero), |v| (0.0, v));
        self.push(
            0.5 * (out_a + out_b),
            (va + vb).scale(0.5),
            0.5 * (va.norm_sq() + vb.norm_sq()),
        );
    }

    fn finish(self) -> Result<TermStats> {
        let n = self.n as f64;
        let var = |sum: f64, sq: f64| ((sq - sum * sum / n) / (n - 1.0)).max(0.0);

        let p_out = self.out_sum / n;
        let se_p = (var(self.out_sum, self.out_sq) / n).sqrt();

        let m = self.c_sum.scale(1.0 / n);
        let m_var: f64 = self
            .c_sum
            .as_slice()
            .iter()
            .zip(self.c_sq.as_slice())
            .map(|(s, sq)| var(*s, *sq))
            .sum();
        let se_m = (m_var / n).sqrt();

        // s2 = mean(q) - ||mean(c)||^2; linearize: influence q - 2 <m, c>
        let s2 = (self.q_sum / n - m.norm_sq()).max(0.0);
        let mut infl_sum = 0.0;
        let mut infl_sq = 0.0;
        for (q, c) in &self.obs {
            let dot: f64 = m.as_slice().iter().zip(c.as_slice()).map(|(a, b)| a * b).sum();
            let v = q - 2.0 * dot;
            infl_sum += v;
            infl_sq += v * v;
        }
        let se_s2 = (var(infl_sum, infl_sq) / n).sqrt();

        Ok(TermStats {
            p_out,
            m: TangentVector::new(m)?,
            s2,
            exact: false,
            se_p: Some(se_p),
            se_m: Some(se_m),
            se_s2: Some(se_s2),
        })
    }
}

/// A declared bound `term_n <= c n^{-alpha}` on the G1 and G3 terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub c: f64,
    pub alpha: f64,
}

/// Which scalar series a lower envelope speaks about.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvelopeSeries {
    G1,
    G3,
}

/// A declared bound `term_n >= c n^{-alpha}` for `n >= from`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerEnvelope {
    pub c: f64,
    pub alpha: f64,
    pub from: u64,
    pub series: EnvelopeSeries,
}

type Generator = dyn Fn(u64) -> Result<LawTerm> + Send + Sync;

/// The laws of `x_1, x_2, ...`, indexed from 1.
#[derive(Clone)]
pub struct LawSequence {
    dim: usize,
    generator: Arc<Generator>,
    constant: bool,
    envelope: Option<Envelope>,
    lower_envelope: Option<LowerEnvelope>,
    horizon_hint: u64,
}

impl fmt::Debug for LawSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LawSequence")
            .field("dim", &self.dim)
            .field("constant", &self.constant)
            .field("envelope", &self.envelope)
            .field("lower_envelope", &self.lower_envelope)
            .field("horizon_hint", &self.horizon_hint)
            .finish_non_exhaustive()
    }
}

impl LawSequence {
    pub fn new(
        dim: usize,
        generator: impl Fn(u64) -> Result<LawTerm> + Send + Sync + 'static,
    ) -> Self {
        LawSequence {
            dim,
            generator: Arc::new(generator),
            constant: false,
            envelope: None,
            lower_envelope: None,
            horizon_hint: 100_000,
        }
    }

    /// The i.i.d. sequence with every factor distributed as `term`.
    pub fn constant(term: LawTerm) -> Self {
        let dim = term.dim();
        let mut seq = Self::new(dim, move |_| Ok(term.clone()));
        seq.constant = true;
        seq
    }

    /// Every factor equal to the identity.
    pub fn identity(dim: usize) -> Self {
        Self::constant(LawTerm::constant(GroupElement::identity(dim)))
    }

    pub fn with_envelope(mut self, c: f64, alpha: f64) -> Self {
        self.envelope = Some(Envelope { c, alpha });
        self
    }

    pub fn with_lower_envelope(mut self, lower: LowerEnvelope) -> Self {
        self.lower_envelope = Some(lower);
        self
    }

    pub fn with_horizon_hint(mut self, n: u64) -> Self {
        self.horizon_hint = n;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_constant(&self) -> bool {
        self.constant
    }

    pub fn envelope(&self) -> Option<Envelope> {
        self.envelope
    }

    pub fn lower_envelope(&self) -> Option<LowerEnvelope> {
        self.lower_envelope
    }

    pub fn horizon_hint(&self) -> u64 {
        self.horizon_hint
    }

    /// The law of `x_n`, `n >= 1`.
    pub fn term(&self, n: u64) -> Result<LawTerm> {
        if n == 0 {
            return Err(Error::Precondition("law indices start at 1".into()));
        }
        let term = (self.generator)(n)?;
        if term.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: term.dim(),
            });
        }
        Ok(term)
    }

    /// Laws of `x_1 .. x_n`; a constant sequence is materialized once.
    pub fn terms_up_to(&self, n: u64) -> Result<Vec<LawTerm>> {
        if self.constant {
            return Ok(vec![self.term(1)?]);
        }
        (1..=n).map(|i| self.term(i)).collect()
    }
}

/// Picks the law of `x_n` out of the output of [`LawSequence::terms_up_to`].
pub(crate) fn term_at(terms: &[LawTerm], n: u64) -> &LawTerm {
    if terms.len() == 1 {
        &terms[0]
    } else {
        &terms[(n - 1) as usize]
    }
}
