use std::path::Path;
use std::process::{Command, Output};

use aggdiff::cli::{config_hash, RunManifest};
use aggdiff::evolution::SimConfig;
use aggdiff::DensityField;

fn aggdiff(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aggdiff"))
        .args(args)
        .current_dir(dir)
        .env_remove("AGGDIFF_THREADS")
        .output()
        .unwrap()
}

fn manifest(path: &Path) -> RunManifest {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn steady_writes_symmetric_unit_mass_profile() {
    let dir = tempfile::tempdir().unwrap();
    let out = aggdiff(&["steady", "--epsilon", "0.5", "--kernel", "gaussian", "--m", "400", "--out", "rho.csv"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rho = DensityField::load_csv(&dir.path().join("rho.csv")).unwrap();
    assert!((rho.mass() - 1.0).abs() < 1e-10);
    let v = rho.values();
    assert!((0..v.len()).all(|i| v[i] == v[v.len() - 1 - i]));
    let m = manifest(&dir.path().join("rho.csv.manifest.json"));
    assert_eq!(m.subcommand, "steady");
    assert_eq!(m.tool_version, env!("CARGO_PKG_VERSION"));
    assert_eq!(m.config_hash.len(), 64);
    assert!(m.outputs.iter().all(|p| dir.path().join(p).exists()));
}

#[test]
fn supercritical_steady_request_exits_with_numerical_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = aggdiff(&["steady", "--epsilon", "1.2", "--out", "rho.csv"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("no nontrivial steady state") && msg.contains("epsilon < ||G||_1 = 1"), "{msg}");
    assert!(!dir.path().join("rho.csv").exists());
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(aggdiff(&["steady", "--out", "x.csv"], dir.path()).status.code(), Some(1));
    assert_eq!(aggdiff(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(aggdiff(&["simulate", "--config", "missing.json", "--out", "t.csv"], dir.path()).status.code(), Some(1));
    std::fs::write(dir.path().join("bad.json"), "{\"epsilon\": 0.5}").unwrap();
    let out = aggdiff(&["simulate", "--config", "bad.json", "--out", "t.csv"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.json"));
    assert_eq!(aggdiff(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn eigencurve_is_monotone_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["eigencurve", "--Lmin", "0.01", "--Lmax", "20", "--points", "50", "--m", "200", "--out", "a.csv", "--quiet"];
    assert_eq!(aggdiff(&args, dir.path()).status.code(), Some(0));
    let mut again = args;
    again[10] = "b.csv";
    assert_eq!(aggdiff(&again, dir.path()).status.code(), Some(0));
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.csv")).unwrap());

    let mut reader = csv::Reader::from_reader(&a[..]);
    assert_eq!(reader.headers().unwrap(), vec!["L", "epsilon", "lambda2"]);
    let rows: Vec<(f64, f64, f64)> = reader.deserialize().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 50);
    assert!(rows.windows(2).all(|w| w[1].1 > w[0].1));
    assert!(rows.iter().all(|r| r.1 < 1.0 && r.2 < r.1));
    let ma = manifest(&dir.path().join("a.csv.manifest.json"));
    let mb = manifest(&dir.path().join("b.csv.manifest.json"));
    assert_ne!(ma.config_hash, mb.config_hash);
}

#[test]
fn eigenfunctions_write_one_file_per_length() {
    let dir = tempfile::tempdir().unwrap();
    let out = aggdiff(&["eigenfunctions", "--L", "1,2,4,8", "--m", "100", "--out-dir", "ef"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    for l in ["1", "2", "4", "8"] {
        let text = std::fs::read_to_string(dir.path().join(format!("ef/eigenfunction_L{l}.csv"))).unwrap();
        assert!(text.starts_with("x,u,rho\n"));
        assert_eq!(text.lines().count(), 102);
    }
    assert_eq!(manifest(&dir.path().join("ef/manifest.json")).outputs.len(), 4);
}

#[test]
fn simulate_hash_matches_reserialized_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{
        "kernel": {"type": "gaussian", "sigma": 1.0},
        "epsilon": 0.5,
        "grid": {"a": -6, "b": 6, "n": 120},
        "dt": "auto",
        "t_end": 2.0,
        "record_every": 20,
        "initial_condition": {"type": "uniform", "a0": -1, "b0": 1}
    }"#;
    std::fs::write(dir.path().join("cfg.json"), cfg).unwrap();
    let out = aggdiff(&["simulate", "--config", "cfg.json", "--out", "trace.csv", "--final", "final.csv"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("t,mass,com,energy,l2\n"));
    let final_state = DensityField::load_csv(&dir.path().join("final.csv")).unwrap();
    assert!((final_state.mass() - 1.0).abs() < 1e-10);

    let parsed: SimConfig = serde_json::from_str(cfg).unwrap();
    let m = manifest(&dir.path().join("trace.csv.manifest.json"));
    assert_eq!(m.config_hash, config_hash(&parsed).unwrap());
    assert_eq!(m.outputs.len(), 2);
}

#[test]
fn simulate_reports_instability_with_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{
        "kernel": {"type": "gaussian"},
        "epsilon": 0.5,
        "grid": {"a": -5, "b": 5, "n": 200},
        "dt": 0.5,
        "t_end": 50.0,
        "initial_condition": {"type": "uniform", "a0": -1, "b0": 1}
    }"#;
    std::fs::write(dir.path().join("cfg.json"), cfg).unwrap();
    let out = aggdiff(&["simulate", "--config", "cfg.json", "--out", "trace.csv", "-q"], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn quick_verify_suite_writes_sorted_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_aggdiff"))
        .args(["verify", "--suite", "quick", "--out", "report.json", "--seed", "7"])
        .current_dir(dir.path())
        .env("AGGDIFF_THREADS", "1")
        .output()
        .unwrap();
    let code = out.status.code().unwrap();
    assert!(code == 0 || code == 2, "{}", String::from_utf8_lossy(&out.stderr));
    let reports: Vec<serde_json::Value> =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert!(!reports.is_empty());
    let ids: Vec<&str> = reports.iter().map(|r| r["check_id"].as_str().unwrap()).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
    assert!(reports.iter().all(|r| !r["paper_ref"].as_str().unwrap().is_empty()));
    let all_passed = reports.iter().all(|r| r["passed"].as_bool().unwrap());
    assert_eq!(code == 0, all_passed);
}
