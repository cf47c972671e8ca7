//! Batch front end: `analyze`, `simulate`, `verify` and `list-scenarios`.
//!
//! Every run writes the fully resolved scenario next to its outputs
//! (`config.toml`), so feeding that file back with `--config` reproduces the
//! run bit for bit.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use randprod_core::scenario::{builtin, builtin_names, ScenarioConfig};
use randprod_core::{
    as_convergence_test, evaluate, simulate_paths, Error, Overall, PathVerdict, ProductTrace, Scenario,
    SeriesReport,
};

/// Fraction of converged paths at or above which a simulation reads as convergent.
pub const DECISIVE_HIGH: f64 = 0.95;
/// Fraction at or below which it reads as divergent.
pub const DECISIVE_LOW: f64 = 0.05;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INCONCLUSIVE: i32 = 2;
pub const EXIT_DISAGREE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "randprod", version, about = "Almost-sure convergence of random matrix products")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Judge the three series and write report.json.
    Analyze(RunArgs),
    /// Simulate product paths and write traces.csv and verdict.json.
    Simulate(RunArgs),
    /// Run analyze and simulate and compare their verdicts.
    Verify(RunArgs),
    /// List the built-in scenarios with their documented verdicts.
    ListScenarios,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Scenario file (TOML).
    #[arg(long, value_name = "PATH", conflicts_with = "scenario", required_unless_present = "scenario")]
    pub config: Option<PathBuf>,
    /// Built-in scenario name.
    #[arg(long, value_name = "NAME")]
    pub scenario: Option<String>,
    #[arg(long, value_name = "INT")]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
    #[arg(long, value_name = "INT")]
    pub paths: Option<u64>,
    /// Also resets `m_star` to half the new horizon.
    #[arg(long, value_name = "INT")]
    pub horizon: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Agreement {
    Agree,
    Disagree,
    Undecided,
}

impl Agreement {
    pub fn exit_code(self) -> i32 {
        match self {
            Agreement::Agree => EXIT_OK,
            Agreement::Undecided => EXIT_INCONCLUSIVE,
            Agreement::Disagree => EXIT_DISAGREE,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct AnalyzeOutput<'a> {
    pub config: &'a ScenarioConfig,
    pub report: &'a SeriesReport,
}

#[derive(Debug, Serialize)]
pub struct SimulateOutput<'a> {
    pub config: &'a ScenarioConfig,
    pub verdict: &'a PathVerdict,
    pub escaped_paths: usize,
}

#[derive(Debug, Serialize)]
pub struct VerifyOutput<'a> {
    pub config: &'a ScenarioConfig,
    pub agreement: Agreement,
    pub analyzer: Overall,
    pub converged_fraction: f64,
    pub simulation: Option<Overall>,
}

/// Loads the scenario and applies the command-line overrides.
pub fn load(args: &RunArgs) -> anyhow::Result<Scenario> {
    let mut cfg = match (&args.config, &args.scenario) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ScenarioConfig::from_toml_str(&text)?
        }
        (None, Some(name)) => builtin(name).ok_or_else(|| {
            Error::config(
                "scenario",
                format!("unknown built-in `{name}`; known: {}", builtin_names().join(", ")),
            )
        })?,
        (None, None) => return Err(Error::config("scenario", "give --config or --scenario").into()),
    };
    if let Some(seed) = args.seed {
        cfg.policy.seed = Some(seed);
    }
    if let Some(paths) = args.paths {
        cfg.policy.paths = Some(paths);
    }
    if let Some(horizon) = args.horizon {
        // a burn-in tied to the old horizon would no longer fit
        cfg.policy.horizon = Some(horizon);
        cfg.policy.m_star = None;
    }
    Ok(cfg.build()?)
}

/// Three-way reading of a converged fraction.
pub fn simulation_verdict(fraction: f64) -> Option<Overall> {
    if fraction >= DECISIVE_HIGH {
        Some(Overall::Converges)
    } else if fraction <= DECISIVE_LOW {
        Some(Overall::Diverges)
    } else {
        None
    }
}

pub fn agreement(analyzer: Overall, simulation: Option<Overall>) -> Agreement {
    match (analyzer, simulation) {
        (Overall::Inconclusive, _) | (_, None) => Agreement::Undecided,
        (a, Some(s)) if a == s => Agreement::Agree,
        _ => Agreement::Disagree,
    }
}

pub fn analyze(sc: &Scenario) -> anyhow::Result<SeriesReport> {
    Ok(evaluate(&sc.sequence, &sc.chart, &sc.policy.analysis())?)
}

pub fn simulate(sc: &Scenario) -> anyhow::Result<(Vec<ProductTrace>, PathVerdict)> {
    let traces = simulate_paths(&sc.sequence, &sc.policy.simulation())?;
    let verdict = as_convergence_test(&traces, sc.policy.eps, sc.policy.m_star)?;
    Ok((traces, verdict))
}

/// `path,n,x11,...,xkk,D_m`: one row per checkpoint. Entries after an
/// escape are `NaN` and `D_m` is `inf`.
pub fn write_traces<W: Write>(traces: &[ProductTrace], dim: usize, out: W) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["path".to_string(), "n".to_string()];
    for i in 1..=dim {
        for j in 1..=dim {
            header.push(format!("x{i}{j}"));
        }
    }
    header.push("D_m".to_string());
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(header.len());
    for t in traces {
        for (m, d) in &t.tail_displacements {
            row.clear();
            row.push(t.path.to_string());
            row.push(m.to_string());
            match t.checkpoints.iter().find(|(n, _)| n == m) {
                Some((_, x)) => {
                    let x = x.matrix();
                    for i in 0..dim {
                        for j in 0..dim {
                            row.push(x[(i, j)].to_string());
                        }
                    }
                }
                None => row.extend(std::iter::repeat("NaN".to_string()).take(dim * dim)),
            }
            row.push(d.to_string());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn prepare_out(dir: &Path, sc: &Scenario) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_file(&dir.join("config.toml"), sc.config.to_toml_string().as_bytes())
}

fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub fn cmd_analyze(args: &RunArgs) -> anyhow::Result<i32> {
    let sc = load(args)?;
    let report = analyze(&sc)?;
    prepare_out(&args.out, &sc)?;
    write_json(
        &args.out.join("report.json"),
        &AnalyzeOutput {
            config: &sc.config,
            report: &report,
        },
    )?;
    println!(
        "{}: g1 {:?}, g2 {:?}, g3 {:?} => {:?}",
        sc.config.name, report.g1.status, report.g2.status, report.g3.status, report.overall
    );
    Ok(match report.overall {
        Overall::Inconclusive => EXIT_INCONCLUSIVE,
        _ => EXIT_OK,
    })
}

pub fn cmd_simulate(args: &RunArgs) -> anyhow::Result<i32> {
    let sc = load(args)?;
    let (traces, verdict) = simulate(&sc)?;
    prepare_out(&args.out, &sc)?;
    let path = args.out.join("traces.csv");
    let file = fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
    write_traces(&traces, sc.chart.dim(), std::io::BufWriter::new(file))?;
    write_json(
        &args.out.join("verdict.json"),
        &SimulateOutput {
            config: &sc.config,
            verdict: &verdict,
            escaped_paths: traces.iter().filter(|t| t.escaped_at.is_some()).count(),
        },
    )?;
    println!("converged_fraction = {}", verdict.converged_fraction);
    Ok(EXIT_OK)
}

pub fn cmd_verify(args: &RunArgs) -> anyhow::Result<i32> {
    let sc = load(args)?;
    let report = analyze(&sc)?;
    let (_, verdict) = simulate(&sc)?;
    let simulation = simulation_verdict(verdict.converged_fraction);
    let agreement = agreement(report.overall, simulation);
    prepare_out(&args.out, &sc)?;
    write_json(
        &args.out.join("verify.json"),
        &VerifyOutput {
            config: &sc.config,
            agreement,
            analyzer: report.overall,
            converged_fraction: verdict.converged_fraction,
            simulation,
        },
    )?;
    let agreement_text = serde_json::to_value(agreement)?;
    println!(
        "{}: {} (analyzer {:?}, converged_fraction = {})",
        sc.config.name,
        agreement_text.as_str().unwrap_or_default(),
        report.overall,
        verdict.converged_fraction
    );
    Ok(agreement.exit_code())
}

pub fn cmd_list() -> i32 {
    for name in builtin_names() {
        let cfg = builtin(name).expect("listed");
        let expected = cfg
            .expected
            .and_then(|e| serde_json::to_value(e).ok())
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_else(|| "-".into());
        println!("{name:<26} {expected}");
    }
    EXIT_OK
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match &cli.command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Verify(a) => cmd_verify(a),
        Command::ListScenarios => Ok(cmd_list()),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        EXIT_ERROR
    })
}
