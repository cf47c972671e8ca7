use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn randprod(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_randprod"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    let mut all = args.to_vec();
    all.extend(["--out", dir.to_str().unwrap()]);
    randprod(&all)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn report(dir: &Path, file: &str) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join(file)).unwrap()).unwrap()
}

#[test]
fn list_shows_every_builtin() {
    let o = randprod(&["list-scenarios"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for name in randprod_core::builtin_names() {
        assert!(text.contains(name), "{name} missing from {text}");
    }
}

#[test]
fn analyze_identity_converges() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["analyze", "--scenario", "identity"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = report(dir.path(), "report.json");
    assert_eq!(r["report"]["overall"], "converges");
    // every default is spelled out
    for key in ["horizon", "paths", "budget", "eps", "eps_c", "seed", "m_star"] {
        assert!(!r["config"]["policy"][key].is_null(), "{key}");
    }
    assert!(r["report"]["per_term_table"].as_array().unwrap().len() > 3);
}

#[test]
fn analyze_haar_diverges_through_g1() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["analyze", "--scenario", "haar-c4"]);
    assert_eq!(o.status.code(), Some(0));
    let r = report(dir.path(), "report.json");
    assert_eq!(r["report"]["overall"], "diverges");
    assert_eq!(r["report"]["g1"]["status"], "diverges");
    assert_eq!(r["report"]["per_term_table"][0]["stats"]["p_out"], 0.75);
}

#[test]
fn analyze_gaussian_decay_converges() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["analyze", "--scenario", "gaussian-decay-q2"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(report(dir.path(), "report.json")["report"]["overall"], "converges");
}

#[test]
fn inconclusive_analysis_exits_2_and_verify_is_undecided() {
    // n^-1.01 is summable but too close to harmonic for the tail comparison,
    // and the short horizon leaves the partial sums moving
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("slow.toml");
    fs::write(
        &cfg,
        "name = \"slow\"\ndim = 2\n[law]\nvariant = \"gaussian\"\n\
         scale = { mode = \"power\", c = 0.5, q = 0.505 }\n\
         [policy]\nhorizon = 200\npaths = 16\n",
    )
    .unwrap();
    let cfg = cfg.to_str().unwrap();
    let o = run_in(dir.path(), &["analyze", "--config", cfg]);
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
    assert_eq!(report(dir.path(), "report.json")["report"]["overall"], "inconclusive");
    let o = run_in(dir.path(), &["verify", "--config", cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("UNDECIDED"));
    assert_eq!(report(dir.path(), "verify.json")["agreement"], "UNDECIDED");
}

#[test]
fn config_errors_exit_1_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("[chart]\nkind = \"affine\"\nradius = 1.5\n[law]\nvariant = \"haar\"\norder = 4\n", "chart.radius"),
        ("[chart]\nkind = \"exponential\"\nradius = 0.5\n[law]\nvariant = \"haar\"\norder = 4\n", "chart.radius"),
        ("[law]\nvariant = \"gaussian\"\n", "law.scale"),
        ("[law]\nvariant = \"haar\"\norder = 4\n[policy]\npaths = \"many\"\n", "policy.paths"),
        ("[law]\nvariant = \"haar\"\norder = 4\n[policy]\neps = -1.0\n", "policy.eps"),
        ("[law]\nvariant = \"gaussian\"\nscale = { mode = \"power\", c = 0.1, q = 1.0 }\n", "dim"),
    ];
    for (i, (body, field)) in cases.iter().enumerate() {
        let dim = if *field == "dim" { 0 } else { 2 };
        let path = dir.path().join(format!("bad{i}.toml"));
        fs::write(&path, format!("name = \"bad\"\ndim = {dim}\n{body}")).unwrap();
        let o = run_in(dir.path(), &["analyze", "--config", path.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(1), "case {i}");
        let err = stderr(&o);
        assert!(err.contains(&format!("`{field}`")), "case {i}: {err}");
    }
    let o = run_in(dir.path(), &["analyze", "--scenario", "no-such"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("`scenario`"));
}

#[test]
fn simulate_identity_and_haar() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["simulate", "--scenario", "identity", "--seed", "99", "--paths", "8"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("converged_fraction = 1"));
    let v = report(dir.path(), "verdict.json");
    assert_eq!(v["verdict"]["converged_fraction"], 1.0);
    assert_eq!(v["config"]["policy"]["seed"], 99);

    let o = run_in(dir.path(), &["simulate", "--scenario", "haar-c4", "--horizon", "2000"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("converged_fraction = 0"));
    let text = fs::read_to_string(dir.path().join("traces.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("path,n,x11,x12,x21,x22,D_m"));
    let grid = randprod_core::simulator::checkpoint_grid(2000, 1000).len();
    assert_eq!(lines.count(), 256 * grid);
}

#[test]
fn resolved_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    let args = ["simulate", "--scenario", "uniform-ball", "--horizon", "500", "--paths", "32", "--seed", "3"];
    assert_eq!(run_in(&first, &args).status.code(), Some(0));
    let cfg = first.join("config.toml");
    let o = run_in(&second, &["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    for f in ["traces.csv", "verdict.json", "config.toml"] {
        assert_eq!(fs::read(first.join(f)).unwrap(), fs::read(second.join(f)).unwrap(), "{f}");
    }
    assert_eq!(run_in(&first, &["analyze", "--config", cfg.to_str().unwrap()]).status.code(), Some(0));
    assert_eq!(run_in(&second, &["analyze", "--config", cfg.to_str().unwrap()]).status.code(), Some(0));
    assert_eq!(fs::read(first.join("report.json")).unwrap(), fs::read(second.join("report.json")).unwrap());
}

#[test]
fn verify_agrees_on_classical_harmonic_signs() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["verify", "--scenario", "classical-harmonic-signs"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let v = report(dir.path(), "verify.json");
    assert_eq!(v["agreement"], "AGREE");
    assert_eq!(v["analyzer"], "diverges");
}

#[test]
fn agreement_policy() {
    use randprod_cli::{agreement, simulation_verdict, Agreement};
    use randprod_core::Overall::*;
    assert_eq!(simulation_verdict(0.95), Some(Converges));
    assert_eq!(simulation_verdict(0.05), Some(Diverges));
    assert_eq!(simulation_verdict(0.5), None);
    assert_eq!(agreement(Inconclusive, Some(Converges)), Agreement::Undecided);
    assert_eq!(agreement(Converges, None), Agreement::Undecided);
    assert_eq!(agreement(Diverges, Some(Diverges)), Agreement::Agree);
    assert_eq!(agreement(Converges, Some(Diverges)), Agreement::Disagree);
    assert_eq!(Agreement::Disagree.exit_code(), 3);
}
