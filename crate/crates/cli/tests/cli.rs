use std::fs;
use std::path::Path;
use std::process::Command;

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_risk-eigen"))
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> i32 {
    let o = bin()
        .arg(cmd)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap();
    o.status.code().unwrap()
}

const CONST: &str = r#"
seed = 1
[model]
builtin = "const"
[grid]
radius = 3.0
nodes_per_axis = 31
[sweep]
radii = [1.0, 2.0]
[sim]
horizon = 2.0
paths = 200
boundary_radius = 3.0
"#;

#[test]
fn solve_writes_reports_with_header() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), CONST);
    let out = tmp.path().join("out");
    assert_eq!(run("solve", &cfg, &out, &["--seed", "9"]), 0);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("eigenpair.json")).unwrap()).unwrap();
    assert!((json["value"].as_f64().unwrap() - 0.5).abs() < 1e-10);
    assert_eq!(json["seed"], 9);
    assert_eq!(json["config"]["model"]["builtin"], "const");
    let csv = fs::read_to_string(out.join("phi.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("# config: {"));
    assert_eq!(lines[1], "# seed: 9");
    assert_eq!(lines[2], "x1,phi");
    assert_eq!(lines.len(), 3 + 31);
}

#[test]
fn every_command_on_const() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), CONST);
    let out = tmp.path().join("out");
    let lp = tmp.path().join("model.lp");
    assert_eq!(run("sweep", &cfg, &out, &[]), 0);
    assert_eq!(run("lp", &cfg, &out, &["--export-lp", lp.to_str().unwrap()]), 0);
    assert_eq!(run("verify", &cfg, &out, &["--trace"]), 0);
    for f in ["sweep.csv", "sweep.json", "lp_report.json", "verify.json", "trace_direct.csv", "trace_twisted.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let text = fs::read_to_string(&lp).unwrap();
    assert!(text.contains("Maximize") && text.contains("mass:") && text.trim_end().ends_with("End"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("lp_report.json")).unwrap()).unwrap();
    assert!((report["lp_value"].as_f64().unwrap() - 0.5).abs() < 1e-6);
    assert_eq!(report["bracket_holds"], true);
}

#[test]
fn configuration_errors_exit_with_one() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let missing = tmp.path().join("nope.toml");
    assert_eq!(run("solve", &missing, &out, &[]), 1);
    for bad in [
        CONST.replace("radius = 3.0", "radius = -1.0"),
        CONST.replace("nodes_per_axis = 31", "nodes_per_axis = 30"),
        CONST.replace("builtin = \"const\"", "builtin = \"nope\""),
        CONST.replace("seed = 1", "seed = 1\ncolour = 2"),
        CONST.replace("paths = 200", "paths = 10"),
        "not toml [".to_string(),
    ] {
        let cfg = write_config(tmp.path(), &bad);
        assert_eq!(run("solve", &cfg, &out, &[]), 1, "{bad}");
    }
    let cfg = write_config(tmp.path(), &CONST.replace("[sweep]\nradii = [1.0, 2.0]\n", ""));
    assert_eq!(run("sweep", &cfg, &out, &[]), 1);
    let cfg = write_config(tmp.path(), &CONST.replace("nodes_per_axis = 31", "nodes_per_axis = 31\nbc = \"dirichlet\""));
    assert_eq!(run("lp", &cfg, &out, &[]), 1);
    let cfg = write_config(tmp.path(), CONST);
    assert_eq!(run("minimize", &cfg, &out, &[]), 1);
    assert_eq!(bin().arg("bogus").output().unwrap().status.code(), Some(1));
    assert_eq!(bin().arg("solve").output().unwrap().status.code(), Some(1));
}

#[test]
fn non_convergence_exits_with_two() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        &(CONST.replace("builtin = \"const\"", "builtin = \"ou-quad\"") + "[solver]\ntol = 1e-300\n"),
    );
    assert_eq!(run("solve", &cfg, &tmp.path().join("out"), &[]), 2);
}

const MIN: &str = r#"
[model]
builtin = "min-1d"
[grid]
radius = 3.0
nodes_per_axis = 61
"#;

#[test]
fn minimize_pipeline() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(tmp.path(), MIN);
    assert_eq!(run("minimize", &cfg, &out, &[]), 0);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("minimize.json")).unwrap()).unwrap();
    assert!(json["value"].as_f64().unwrap() > 0.0);
    assert_eq!(json["policy_antisymmetry_mismatches"], 0);
    let policy = fs::read_to_string(out.join("policy.csv")).unwrap();
    assert_eq!(policy.lines().nth(2), Some("x1,control_index,u1"));
    assert_eq!(run("lp", &cfg, &out, &[]), 1);
}

#[test]
fn cost_unbounded_below_fails_the_assumption_check() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"
[model.poly]
dimension = 1
controls = [[0.0]]
direction = "minimize"
reward_upper_bound = 0.0
drift = [[{ coef = -1.0, x = [1] }]]
sigma = [[{ coef = 1.4142135623730951 }]]
reward = [{ coef = -1.0, x = [2] }]
[grid]
radius = 3.0
nodes_per_axis = 61
"#,
    );
    let out = tmp.path().join("out");
    assert_eq!(run("minimize", &cfg, &out, &[]), 2);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("minimize.json")).unwrap()).unwrap();
    assert_eq!(json["checks"][0]["name"], "coercivity_margin");
    assert_eq!(json["checks"][0]["pass"], false);
}

#[test]
fn outputs_are_byte_reproducible() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), CONST);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for cmd in ["solve", "sweep", "lp", "verify"] {
        assert_eq!(run(cmd, &cfg, &a, &["--trace"]), 0);
        assert_eq!(run(cmd, &cfg, &b, &["--trace"]), 0);
    }
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 8);
    for n in names {
        assert_eq!(fs::read(a.join(&n)).unwrap(), fs::read(b.join(&n)).unwrap(), "{n:?}");
    }
}
