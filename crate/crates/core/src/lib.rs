//! Almost-sure convergence of products of independent random matrices.
//!
//! [`three_series::evaluate`] decides convergence of `x_1 x_2 ... x_n` from
//! per-term statistics of the laws of `x_n` in a chart around the identity;
//! [`simulator`] produces the Monte-Carlo ground truth it is checked against.

pub mod chart;
pub mod error;
pub mod group;
pub mod law;
pub mod linalg;
pub mod rng;
pub mod scenario;
pub mod simulator;
pub mod special;
pub mod three_series;

pub use chart::{ChartKind, ChartSpec};
pub use error::{Error, Result};
pub use group::{displacement, inverse, mat_exp, mat_log, multiply, GroupElement, TangentVector};
pub use law::{Envelope, EnvelopeSeries, LawSequence, LawTerm, LowerEnvelope, TermStats};
pub use linalg::Matrix;
pub use rng::{Purpose, Stream, StreamKey};
pub use three_series::{evaluate, Evidence, Overall, Policy, SeriesReport, SeriesVerdict, Status};
pub use scenario::{builtin, builtin_names, RunPolicy, Scenario, ScenarioConfig};
pub use simulator::{as_convergence_test, simulate_paths, PathVerdict, ProductTrace, SimOptions};
