//! Scenario files and the built-in registry.
//!
//! A scenario is a TOML document naming a dimension, a chart, a law sequence
//! and run parameters:
//!
//! ```toml
//! name = "gaussian-decay-q2"
//! dim = 2
//! expected = "converges"            # optional, documentation only
//!
//! [chart]                           # optional, default affine r = 0.5
//! kind = "affine"                   # or "exponential"
//! radius = 0.5
//!
//! [law]
//! variant = "gaussian"              # gaussian | uniform-ball | exp-gaussian
//!                                   # | atomic | scalar | haar
//! scale = { mode = "power", c = 0.1, q = 1.0 }
//! envelope = { c = 1.0, alpha = 2.0 }
//!
//! [policy]                          # every key optional
//! horizon = 10000
//! paths = 256
//! ```
//!
//! The scale `s_n` is `constant` (`value`, default 1), `power`
//! (`c n^-q`) or `table` (`values`, one per `n`; factors past the table are
//! the identity). It sets `sigma_n` for the Gaussian variants, `rho_n` for
//! `uniform-ball`, multiplies the perturbations `y` of `atomic` atoms
//! (`x = I + s_n y`) and the values of `scalar` atoms (embedded as
//! `I + s_n v E12`, dimension 2). `haar` takes either `order` (rotations of
//! the plane) or an explicit list of `elements` and no scale.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::chart::{ChartKind, ChartSpec};
use crate::error::{Error, Result};
use crate::group::GroupElement;
use crate::law::{Envelope, LawSequence, LawTerm, LowerEnvelope};
use crate::linalg::Matrix;
use crate::simulator::{SimOptions, DEFAULT_EPS};
use crate::three_series::classical::embed;
use crate::three_series::{Overall, Policy};

pub const DEFAULT_PATHS: u64 = 256;
const MAX_DIM: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartConfig {
    pub kind: ChartKind,
    pub radius: f64,
}

impl Default for ChartConfig {
    fn default() -> Self {
        ChartConfig {
            kind: ChartKind::Affine,
            radius: 0.5,
        }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Scale {
    Constant {
        #[serde(default = "one")]
        value: f64,
    },
    Power {
        c: f64,
        q: f64,
    },
    Table {
        values: Vec<f64>,
    },
}

impl Scale {
    /// `s_n`, or `None` past the end of a table.
    pub fn at(&self, n: u64) -> Option<f64> {
        match self {
            Scale::Constant { value } => Some(*value),
            Scale::Power { c, q } => Some(c * (n as f64).powf(-q)),
            Scale::Table { values } => values.get((n - 1) as usize).copied(),
        }
    }

    fn is_constant(&self) -> bool {
        matches!(self, Scale::Constant { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LawVariant {
    Gaussian,
    UniformBall,
    ExpGaussian,
    Atomic,
    Scalar,
    Haar,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    pub y: Matrix,
    pub p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawConfig {
    pub variant: LawVariant,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<Scale>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atoms: Option<Vec<AtomConfig>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elements: Option<Vec<Matrix>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope: Option<Envelope>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower_envelope: Option<LowerEnvelope>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paths: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_star: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<Overall>,
    #[serde(default)]
    pub chart: ChartConfig,
    pub law: LawConfig,
    #[serde(default)]
    pub policy: PolicyConfig,
}

/// Fully resolved run parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RunPolicy {
    pub horizon: u64,
    pub paths: u64,
    pub budget: usize,
    pub eps: f64,
    pub eps_c: f64,
    pub seed: u64,
    pub m_star: u64,
}

impl RunPolicy {
    pub fn analysis(&self) -> Policy {
        Policy {
            horizon: self.horizon,
            budget: self.budget,
            eps_c: self.eps_c,
            seed: self.seed,
        }
    }

    pub fn simulation(&self) -> SimOptions {
        SimOptions {
            horizon: self.horizon,
            paths: self.paths,
            seed: self.seed,
            m_star: Some(self.m_star),
        }
    }
}

/// A validated scenario, ready to run.
#[derive(Clone, Debug)]
pub struct Scenario {
    /// The configuration with every default written out.
    pub config: ScenarioConfig,
    pub chart: ChartSpec,
    pub sequence: LawSequence,
    pub policy: RunPolicy,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let field = e
                .span()
                .and_then(|span| field_at(text, span.start))
                .unwrap_or_else(|| "<document>".to_string());
            Error::config(field, e.message().trim().to_string())
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario configs serialize")
    }

    /// Copy with every policy default filled in.
    pub fn resolved(&self) -> ScenarioConfig {
        let defaults = Policy::default();
        let p = &self.policy;
        let horizon = p.horizon.unwrap_or(defaults.horizon);
        let mut out = self.clone();
        out.policy = PolicyConfig {
            horizon: Some(horizon),
            paths: Some(p.paths.unwrap_or(DEFAULT_PATHS)),
            budget: Some(p.budget.unwrap_or(defaults.budget)),
            eps: Some(p.eps.unwrap_or(DEFAULT_EPS)),
            eps_c: Some(p.eps_c.unwrap_or(defaults.eps_c)),
            seed: Some(p.seed.unwrap_or(defaults.seed)),
            m_star: Some(p.m_star.unwrap_or(horizon / 2)),
        };
        out
    }

    /// Validates every field and builds the runnable scenario.
    pub fn build(&self) -> Result<Scenario> {
        let config = self.resolved();
        if config.name.trim().is_empty() {
            return Err(Error::config("name", "must not be empty"));
        }
        let k = config.dim;
        if k == 0 || k > MAX_DIM {
            return Err(Error::config("dim", format!("must lie in 1..={MAX_DIM}, got {k}")));
        }
        let chart = ChartSpec::new(config.chart.kind, config.chart.radius, k)
            .map_err(|e| Error::config("chart.radius", e.to_string()))?;
        let policy = validate_policy(&config.policy)?;
        let sequence = build_sequence(&config.law, k, policy.horizon)?;
        Ok(Scenario {
            config,
            chart,
            sequence,
            policy,
        })
    }
}

/// Dotted key for the TOML line containing byte `offset`.
fn field_at(text: &str, offset: usize) -> Option<String> {
    let before = &text[..offset.min(text.len())];
    let line_start = before.rfind('\n').map_or(0, |i| i + 1);
    let line_end = text[line_start..].find('\n').map_or(text.len(), |i| line_start + i);
    let line = text[line_start..line_end].trim();
    let section = before[..line_start]
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| l.starts_with('[') && l.ends_with(']'))
        .map(|l| l.trim_matches(|c| c == '[' || c == ']').to_string());
    let key = line.split_once('=').map(|(k, _)| k.trim().to_string());
    match (section, key) {
        (Some(s), Some(k)) => Some(format!("{s}.{k}")),
        (None, Some(k)) => Some(k),
        (Some(s), None) => Some(s),
        (None, None) => None,
    }
}

fn validate_policy(p: &PolicyConfig) -> Result<RunPolicy> {
    let horizon = p.horizon.expect("resolved");
    if horizon < 10 {
        return Err(Error::config("policy.horizon", format!("must be >= 10, got {horizon}")));
    }
    let paths = p.paths.expect("resolved");
    if paths == 0 {
        return Err(Error::config("policy.paths", "must be >= 1"));
    }
    let eps = p.eps.expect("resolved");
    if !(eps > 0.0) {
        return Err(Error::config("policy.eps", format!("must be > 0, got {eps}")));
    }
    let eps_c = p.eps_c.expect("resolved");
    if !(eps_c > 0.0) {
        return Err(Error::config("policy.eps_c", format!("must be > 0, got {eps_c}")));
    }
    let m_star = p.m_star.expect("resolved");
    if m_star >= horizon {
        return Err(Error::config(
            "policy.m_star",
            format!("must be below the horizon {horizon}, got {m_star}"),
        ));
    }
    Ok(RunPolicy {
        horizon,
        paths,
        budget: p.budget.expect("resolved"),
        eps,
        eps_c,
        seed: p.seed.expect("resolved"),
        m_star,
    })
}

fn law_err(field: &str, e: Error) -> Error {
    Error::config(format!("law.{field}"), e.to_string())
}

fn require<'a, T>(v: &'a Option<T>, field: &str, variant: &str) -> Result<&'a T> {
    v.as_ref()
        .ok_or_else(|| Error::config(format!("law.{field}"), format!("required for variant `{variant}`")))
}

fn forbid<T>(v: &Option<T>, field: &str, variant: &str) -> Result<()> {
    match v {
        Some(_) => Err(Error::config(format!("law.{field}"), format!("not used by variant `{variant}`"))),
        None => Ok(()),
    }
}

fn check_scale(scale: &Scale, horizon: u64, upper: Option<f64>) -> Result<()> {
    let in_range = |s: f64| s > 0.0 && s.is_finite() && upper.map_or(true, |u| s < u);
    let range = match upper {
        Some(u) => format!("in (0, {u})"),
        None => "positive".to_string(),
    };
    match scale {
        Scale::Constant { value } => {
            if !in_range(*value) {
                return Err(Error::config("law.scale.value", format!("must be {range}, got {value}")));
            }
        }
        Scale::Power { c, q } => {
            if !in_range(*c) {
                return Err(Error::config("law.scale.c", format!("must be {range}, got {c}")));
            }
            if !q.is_finite() || (upper.is_some() && *q < 0.0) {
                return Err(Error::config("law.scale.q", format!("must be finite and >= 0 here, got {q}")));
            }
            let last = c * (horizon as f64).powf(-q);
            if !in_range(last) {
                return Err(Error::config("law.scale.q", format!("s_N = {last} leaves the range {range}")));
            }
        }
        Scale::Table { values } => {
            if values.is_empty() {
                return Err(Error::config("law.scale.values", "table must not be empty"));
            }
            if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !in_range(**v)) {
                return Err(Error::config(
                    "law.scale.values",
                    format!("entry {} must be {range}, got {v}", i + 1),
                ));
            }
        }
    }
    Ok(())
}

fn build_sequence(law: &LawConfig, k: usize, horizon: u64) -> Result<LawSequence> {
    use LawVariant::*;
    let name = match law.variant {
        Gaussian => "gaussian",
        UniformBall => "uniform-ball",
        ExpGaussian => "exp-gaussian",
        Atomic => "atomic",
        Scalar => "scalar",
        Haar => "haar",
    };
    if !matches!(law.variant, Atomic) {
        forbid(&law.atoms, "atoms", name)?;
    }
    if !matches!(law.variant, Scalar) {
        forbid(&law.values, "values", name)?;
        forbid(&law.probs, "probs", name)?;
    }
    if !matches!(law.variant, Haar) {
        forbid(&law.order, "order", name)?;
        forbid(&law.elements, "elements", name)?;
    }
    if let Some(env) = &law.envelope {
        if !(env.c > 0.0 && env.alpha.is_finite()) {
            return Err(Error::config("law.envelope", "needs c > 0 and a finite alpha"));
        }
    }
    if let Some(env) = &law.lower_envelope {
        if !(env.c > 0.0 && env.alpha.is_finite() && env.from >= 1) {
            return Err(Error::config("law.lower_envelope", "needs c > 0, a finite alpha and from >= 1"));
        }
    }

    let scale = law.scale.clone().unwrap_or(Scale::Constant { value: 1.0 });
    // the term generator maps s_n to a law; past a table the factor is I
    let make: Box<dyn Fn(f64) -> Result<LawTerm> + Send + Sync> = match law.variant {
        Gaussian | ExpGaussian => {
            let scale = require(&law.scale, "scale", name)?;
            check_scale(scale, horizon, None)?;
            let exp = matches!(law.variant, ExpGaussian);
            Box::new(move |s| {
                if exp {
                    LawTerm::exp_gaussian(k, s)
                } else {
                    LawTerm::gaussian(k, s)
                }
            })
        }
        UniformBall => {
            let scale = require(&law.scale, "scale", name)?;
            check_scale(scale, horizon, Some(1.0))?;
            Box::new(move |s| LawTerm::uniform_ball(k, s))
        }
        Atomic => {
            check_scale(&scale, horizon, None)?;
            let atoms = require(&law.atoms, "atoms", name)?.clone();
            if atoms.is_empty() {
                return Err(Error::config("law.atoms", "need at least one atom"));
            }
            if let Some(bad) = atoms.iter().find(|a| a.y.dim() != k) {
                return Err(Error::config(
                    "law.atoms.y",
                    format!("expected {k} x {k}, got {0} x {0}", bad.y.dim()),
                ));
            }
            Box::new(move |s| {
                let list = atoms
                    .iter()
                    .map(|a| Ok((GroupElement::perturbation(&a.y.scale(s))?, a.p)))
                    .collect::<Result<Vec<_>>>()?;
                LawTerm::atomic(list)
            })
        }
        Scalar => {
            if k != 2 {
                return Err(Error::config("dim", "scalar laws embed in dimension 2"));
            }
            check_scale(&scale, horizon, None)?;
            let values = require(&law.values, "values", name)?.clone();
            let probs = require(&law.probs, "probs", name)?.clone();
            if values.len() != probs.len() || values.is_empty() {
                return Err(Error::config("law.probs", "need one probability per value"));
            }
            Box::new(move |s| {
                LawTerm::atomic(values.iter().zip(&probs).map(|(v, p)| (embed(v * s), *p)).collect())
            })
        }
        Haar => {
            forbid(&law.scale, "scale", name)?;
            let term = match (&law.order, &law.elements) {
                (Some(order), None) => {
                    if k != 2 {
                        return Err(Error::config("law.order", "rotation subgroups need dim = 2"));
                    }
                    LawTerm::haar_rotations(*order).map_err(|e| law_err("order", e))?
                }
                (None, Some(elements)) => {
                    let elements = elements
                        .iter()
                        .map(|m| GroupElement::new(m.clone()))
                        .collect::<Result<Vec<_>>>()
                        .map_err(|e| law_err("elements", e))?;
                    if elements.iter().any(|g| g.dim() != k) {
                        return Err(Error::config("law.elements", format!("elements must be {k} x {k}")));
                    }
                    LawTerm::haar(elements).map_err(|e| law_err("elements", e))?
                }
                _ => return Err(Error::config("law.order", "give exactly one of `order` or `elements`")),
            };
            Box::new(move |_| Ok(term.clone()))
        }
    };

    // fail early on the first term instead of mid-run
    let first = make(scale.at(1).unwrap_or(1.0)).map_err(|e| law_err("atoms", e))?;
    if matches!(law.variant, Atomic | Scalar) {
        if let Some(Scale::Table { values }) = &law.scale {
            for (i, s) in values.iter().enumerate() {
                make(*s).map_err(|e| Error::config("law.scale.values", format!("entry {}: {e}", i + 1)))?;
            }
        }
    }

    let mut seq = if scale.is_constant() || matches!(law.variant, Haar) {
        LawSequence::constant(first)
    } else {
        LawSequence::new(k, move |n| match scale.at(n) {
            Some(s) => make(s),
            None => Ok(LawTerm::constant(GroupElement::identity(k))),
        })
    };
    if let Some(env) = law.envelope {
        seq = seq.with_envelope(env.c, env.alpha);
    }
    if let Some(lower) = law.lower_envelope {
        seq = seq.with_lower_envelope(lower);
    }
    Ok(seq.with_horizon_hint(horizon))
}

const BUILTINS: [(&str, &str); 9] = [
    ("identity", include_str!("../scenarios/identity.toml")),
    ("gaussian-decay-q2", include_str!("../scenarios/gaussian-decay-q2.toml")),
    ("gaussian-harmonic", include_str!("../scenarios/gaussian-harmonic.toml")),
    ("uniform-ball", include_str!("../scenarios/uniform-ball.toml")),
    ("exp-gaussian", include_str!("../scenarios/exp-gaussian.toml")),
    ("haar-c4", include_str!("../scenarios/haar-c4.toml")),
    ("classical-harmonic-signs", include_str!("../scenarios/classical-harmonic-signs.toml")),
    ("classical-inverse-signs", include_str!("../scenarios/classical-inverse-signs.toml")),
    ("atomic-drift", include_str!("../scenarios/atomic-drift.toml")),
];

pub fn builtin_names() -> Vec<&'static str> {
    BUILTINS.iter().map(|(n, _)| *n).collect()
}

/// Source text of a built-in scenario.
pub fn builtin_source(name: &str) -> Option<&'static str> {
    BUILTINS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn builtin(name: &str) -> Option<ScenarioConfig> {
    builtin_source(name).map(|s| ScenarioConfig::from_toml_str(s).expect("built-in scenarios parse"))
}

/// Every built-in scenario keyed by name.
pub fn builtins() -> BTreeMap<&'static str, ScenarioConfig> {
    builtin_names()
        .into_iter()
        .map(|n| (n, builtin(n).expect("listed")))
        .collect()
}
