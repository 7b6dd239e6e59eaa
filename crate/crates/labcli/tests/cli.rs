use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use liouville_lab::config::{BoundarySource, SweepParameter};
use liouville_lab::{ExperimentConfig, Mode};
use serde_json::Value;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_liouville-lab");

fn exact_config(degree: usize, k_max: usize, extra: &str) -> String {
    let s = degree - 1;
    let list = |v: String| vec![v; s].join(", ");
    let directions: Vec<String> = (0..s)
        .map(|j| {
            let t = std::f64::consts::TAU * j as f64 / s as f64;
            format!("[{}, {}]", t.cos(), t.sin())
        })
        .collect();
    format!(
        r#"schema = "liouville-lab/1"
seed = 11
{extra}

[grid]
n = 65

[family]
exponents = [{}]
directions = [{}]
multiplicities = [{}]
coefficients = [{}]
k_max = {k_max}

[family.lambda]
schedule = "geometric"
lambda0 = 1.0
ratio = 10.0
"#,
        list("1.0".into()),
        directions.join(", "),
        list("1".into()),
        list("0.05".into()),
    )
}

fn run(dir: &Path, config: &str, command: &str) -> Output {
    let path = dir.join("config.toml");
    fs::write(&path, config).unwrap();
    Command::new(BIN)
        .arg(command)
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn generate_writes_fields_and_manifest() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &exact_config(1, 4, ""), "generate");
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let root = dir.path().join("out");
    for k in 1..=4 {
        assert!(root.join(format!("fields/k{k:03}.csv")).is_file());
        assert!(root.join(format!("fields/k{k:03}.json")).is_file());
    }
    let m = json(&root.join("manifest.json"));
    let members = m["members"].as_array().unwrap();
    assert_eq!(members.len(), 4);
    assert_eq!(members[2]["lambda"].as_f64().unwrap(), 1000.0);
    assert_eq!(members[0]["degree"].as_u64().unwrap(), 1);
    for member in members {
        assert!(
            member["probe_residual"].as_f64().unwrap() < 1e-3,
            "{member}"
        );
    }
}

#[test]
fn generate_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = exact_config(2, 4, "");
    assert!(run(dir.path(), &cfg, "generate").status.success());
    let first = fs::read(dir.path().join("out/manifest.json")).unwrap();
    let field = fs::read(dir.path().join("out/fields/k003.csv")).unwrap();
    assert!(run(dir.path(), &cfg, "generate").status.success());
    assert_eq!(
        first,
        fs::read(dir.path().join("out/manifest.json")).unwrap()
    );
    assert_eq!(
        field,
        fs::read(dir.path().join("out/fields/k003.csv")).unwrap()
    );
}

#[test]
fn coincident_poles_exit_with_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = exact_config(3, 4, "").replace(
        &format!("[{}, {}]", -1.0, std::f64::consts::PI.sin()),
        "[1.0, 0.0]",
    );
    let out = run(dir.path(), &cfg, "generate");
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("pairwise distinct"), "{err}");
}

#[test]
fn missing_config_and_unknown_keys_are_config_errors() {
    let out = Command::new(BIN).arg("generate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &exact_config(1, 4, "colour = 1"), "generate");
    assert_eq!(out.status.code(), Some(2));
    let out = run(dir.path(), &exact_config(1, 3, ""), "generate");
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("family.k_max"));
}

#[test]
fn config_round_trips_through_toml() {
    let mut cfg = ExperimentConfig::from_toml(&exact_config(
        3,
        5,
        "mode = \"both\"\n[solve.boundary]\nsource = \"least_mass\"",
    ))
    .unwrap();
    assert_eq!(cfg.mode, Mode::Both);
    assert_eq!(
        cfg.solve.as_ref().unwrap().boundary,
        BoundarySource::LeastMass
    );
    cfg.out = Some("results".into());
    let again = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
    assert_eq!(cfg, again);
}

#[test]
fn degree_sweep_values_build_the_ring() {
    let cfg = ExperimentConfig::from_toml(&exact_config(1, 4, "")).unwrap();
    let c = cfg.with_sweep_value(SweepParameter::Degree, 4.0).unwrap();
    assert_eq!(c.family().unwrap().members[0].map.degree(), 4);
    assert!(cfg.with_sweep_value(SweepParameter::Degree, 2.5).is_err());
    assert!(cfg.with_sweep_value(SweepParameter::KMax, 3.0).is_err());
}

#[test]
fn diagnose_finds_two_bubbles_of_a_degree_two_family() {
    let dir = TempDir::new().unwrap();
    let cfg = exact_config(2, 6, "");
    assert!(run(dir.path(), &cfg, "generate").status.success());
    let out = run(dir.path(), &cfg, "diagnose");
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let root = dir.path().join("out");
    let report = json(&root.join("report.json"));
    let q = &report["quantization"]["Ok"];
    assert_eq!(q["n"].as_u64(), Some(2), "{q}");
    assert_eq!(q["status"], "plateau");
    let sigma = q["sigma_hat"].as_f64().unwrap();
    assert!((sigma - 16.0 * std::f64::consts::PI).abs() < 0.1, "{sigma}");
    let csv = fs::read_to_string(root.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
    assert!(root.join("plots/mass_k006.dat").is_file());
}

#[test]
fn diagnose_without_fields_is_an_io_error() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &exact_config(2, 4, ""), "diagnose");
    assert_eq!(out.status.code(), Some(4));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("k = 1, 2, 3, 4"), "{err}");
}

#[test]
fn cascade_of_a_symmetric_pair() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &exact_config(3, 5, ""), "cascade");
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let root = dir.path().join("out");
    let report = json(&root.join("cascade.json"));
    assert_eq!(report["s"].as_u64(), Some(2));
    assert_eq!(report["s1"].as_u64(), Some(2));
    let eps = report["eps"].as_array().unwrap();
    assert!((eps[4].as_f64().unwrap() - 0.01).abs() < 1e-12);
    assert!(root.join("plots/cascade_eps.dat").is_file());
    assert!(root.join("plots/cascade_ratio_j2.dat").is_file());
}

#[test]
fn degree_sweep_reproduces_the_mass_ladder() {
    let dir = TempDir::new().unwrap();
    let cfg = exact_config(1, 6, "") + "\n[sweep]\nparameter = \"degree\"\nvalues = [1, 2]\n";
    let out = run(dir.path(), &cfg, "sweep");
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let mut reader = csv::Reader::from_path(dir.path().join("out/sweep.csv")).unwrap();
    let header = reader.headers().unwrap().clone();
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 12);
    for row in &rows {
        let d: f64 = row[col("value")].parse().unwrap();
        assert_eq!(&row[col("n")], &format!("{d}"));
        assert_eq!(&row[col("status")], "plateau");
        let sigma: f64 = row[col("sigma_hat")].parse().unwrap();
        assert!(
            (sigma - 8.0 * std::f64::consts::PI * d).abs() < 0.1 * d,
            "{sigma}"
        );
    }
}

#[test]
fn empty_sweep_writes_only_the_header() {
    let dir = TempDir::new().unwrap();
    let cfg = exact_config(1, 4, "") + "\n[sweep]\nparameter = \"lambda0\"\nvalues = []\n";
    let out = run(dir.path(), &cfg, "sweep");
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("run,parameter,value,k,"));
}

const SOLVE_BASE: &str = r#"schema = "liouville-lab/1"
mode = "solve"

[grid]
n = 33

[family]
k_max = 4
"#;

#[test]
fn negligible_weight_solves_to_the_boundary_constant() {
    let dir = TempDir::new().unwrap();
    let cfg = format!(
        "{SOLVE_BASE}\n[family.lambda]\nschedule = \"power\"\nlambda0 = 1.0\ngamma = 1.0\n\n\
         [solve]\nweight_scale = 1e-300\ncontinuation = false\n\n\
         [solve.boundary]\nsource = \"constant\"\nvalue = 2.5\n"
    );
    let out = run(dir.path(), &cfg, "solve");
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let root = dir.path().join("out");
    let outcomes = json(&root.join("solve.json"));
    assert_eq!(outcomes.as_array().unwrap().len(), 4);
    let mut reader = csv::Reader::from_path(root.join("solved/k002.csv")).unwrap();
    for r in reader.records() {
        let v: f64 = r.unwrap()[4].parse().unwrap();
        assert!((v - 2.5).abs() < 1e-8, "{v}");
    }
}

#[test]
fn trace_solves_converge_and_record_iterations() {
    let dir = TempDir::new().unwrap();
    // λ < 1 keeps the traces on the branch reached from the harmonic extension.
    let cfg = format!(
        "{SOLVE_BASE}\n[family.lambda]\nschedule = \"list\"\nvalues = [0.5, 0.6, 0.7, 0.8]\n\n\
         [solve.boundary]\nsource = \"trace\"\n"
    );
    let out = run(dir.path(), &cfg, "solve");
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let root = dir.path().join("out");
    for o in json(&root.join("solve.json")).as_array().unwrap() {
        assert_eq!(o["status"], "converged", "{o}");
    }
    let log = fs::read_to_string(root.join("convergence/k004.jsonl")).unwrap();
    assert!(log.lines().count() >= 2);
    assert!(root.join("plots/convergence_k004.dat").is_file());
    let out = run(dir.path(), &cfg, "diagnose");
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn all_failed_solves_exit_with_solver_error() {
    let dir = TempDir::new().unwrap();
    let cfg = format!(
        "{SOLVE_BASE}\n[family.lambda]\nschedule = \"power\"\nlambda0 = 1.0\ngamma = 1.0\n\n\
         [solve]\ncontinuation = false\n\n[solve.newton]\nmax_iterations = 1\n\n\
         [solve.boundary]\nsource = \"constant\"\nvalue = 10.0\n"
    );
    let out = run(dir.path(), &cfg, "solve");
    assert_eq!(out.status.code(), Some(3));
    let root = dir.path().join("out");
    let outcomes = json(&root.join("solve.json"));
    assert!(outcomes
        .as_array()
        .unwrap()
        .iter()
        .all(|o| o["status"] == "failed" && o["message"].is_string()));
    assert!(root.join("solved/k001.csv").is_file());
}

#[test]
fn least_mass_boundary_solves_a_symmetric_pair() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"schema = "liouville-lab/1"
mode = "solve"

[grid]
n = 129

[family]
exponents = [1.0, 1.0]
directions = [[1.0, 0.0], [-1.0, 0.0]]
multiplicities = [1, 1]
coefficients = [0.5, 0.5]
k_max = 4

[family.lambda]
schedule = "power"
lambda0 = 12.49
gamma = 2.0

[solve.boundary]
source = "least_mass"
"#;
    let out = run(dir.path(), cfg, "solve");
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let outcomes = json(&dir.path().join("out/solve.json"));
    let first = &outcomes[0];
    assert_eq!(first["status"], "converged", "{first}");
    assert!(first["final_residual"].as_f64() <= first["tolerance"].as_f64());
    for o in outcomes.as_array().unwrap() {
        assert!(o["field"].is_string(), "{o}");
    }
}
