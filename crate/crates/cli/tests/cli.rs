use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use levy_neumann_cli::{build_config, resolve_output_dir, run, Mode, Overrides, RunConfig, CSV_HEADER, OUT_ENV};

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn config(name: &str) -> PathBuf {
    configs_dir().join(name)
}

fn bin(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_levy-neumann"));
    cmd.args(args).env_remove(OUT_ENV);
    if let Some(dir) = env_out {
        cmd.env(OUT_ENV, dir);
    }
    cmd.output().expect("binary runs")
}

fn csv_rows(dir: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(dir.join("results.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    lines.map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn shipped_configs_round_trip_and_validate() {
    let mut seen = 0;
    for entry in std::fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        let c = RunConfig::load(&path).unwrap();
        c.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let again = RunConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(again, c, "{}", path.display());
        assert_eq!(again.to_json(), c.to_json());
        seen += 1;
    }
    assert!(seen >= 5);
}

#[test]
fn unknown_keys_are_rejected() {
    let err = RunConfig::from_json(r#"{"mode": "selftest", "colour": 1}"#).unwrap_err();
    assert_eq!(err.kind, "config");
    assert!(err.message.contains("colour"));
    let text = std::fs::read_to_string(config("constant_identity.json")).unwrap();
    let nested = text.replacen("\"lambda\": 1.0", "\"lambda\": 1.0, \"mu\": 2.0", 1);
    assert!(RunConfig::from_json(&nested).is_err());
}

#[test]
fn flags_override_scalar_fields() {
    let o = Overrides { mode: None, seed: Some(99), paths: Some(12), dump_trajectories: Some(1) };
    let c = build_config(Some(&config("constant_identity.json")), &o).unwrap();
    assert_eq!((c.mc.seed, c.mc.n_paths, c.dump_trajectories), (99, 12, 1));
    let c = build_config(None, &Overrides { mode: Some("selftest".into()), ..Default::default() }).unwrap();
    assert_eq!(c.mode, Mode::Selftest);
    assert_eq!(build_config(None, &Overrides::default()).unwrap_err().kind, "usage");
}

#[test]
fn output_directory_precedence() {
    let mut c = RunConfig::new(Mode::Selftest);
    let env = Some("from-env".into());
    assert_eq!(resolve_output_dir(None, &c, env.clone()), PathBuf::from("from-env"));
    c.output_dir = Some("from-config".into());
    assert_eq!(resolve_output_dir(None, &c, env.clone()), PathBuf::from("from-config"));
    assert_eq!(resolve_output_dir(Some("from-flag".into()), &c, env), PathBuf::from("from-flag"));
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["--mode", "selftest", "--out", dir.path().to_str().unwrap()], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().filter(|l| l.starts_with("ok ")).count() >= 10);
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert!(manifest["details"]["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));
}

#[test]
fn list_oracles_uses_the_environment_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["--mode", "list-oracles"], Some(dir.path()));
    assert!(out.status.success());
    let rows = csv_rows(dir.path());
    assert_eq!(rows.len(), 7);
    assert!(rows.iter().any(|r| r[0] == "disk-unit-g" && r[1] == "2.0;0.0" && r[2] == "1.0"));
}

#[test]
fn constant_identity_solve_is_within_three_standard_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("constant_identity.json");
    let out = bin(&[cfg.to_str().unwrap(), "--paths", "500", "--out", dir.path().to_str().unwrap()], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for r in csv_rows(dir.path()) {
        let (mean, se): (f64, f64) = (r[2].parse().unwrap(), r[3].parse().unwrap());
        assert_eq!(r[5], "500");
        assert!((mean - 1.0).abs() <= (3.0 * se).max((-10.0f64).exp()) + 1e-12, "{mean} ± {se}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["config"]["mc"]["n_paths"], 500);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert!(manifest["bias_bounds"].as_array().unwrap().len() == 2);
}

#[test]
fn manifest_reruns_bit_identically() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = config("constant_identity.json");
    assert!(bin(&[cfg.to_str().unwrap(), "--paths", "200", "--seed", "5", "--out", a.path().to_str().unwrap()], None).status.success());
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(a.path().join("manifest.json")).unwrap()).unwrap();
    let replay = b.path().join("replay.json");
    std::fs::write(&replay, serde_json::to_string(&manifest["config"]).unwrap()).unwrap();
    assert!(bin(&[replay.to_str().unwrap(), "--out", b.path().to_str().unwrap()], None).status.success());
    assert_eq!(std::fs::read(a.path().join("results.csv")).unwrap(), std::fs::read(b.path().join("results.csv")).unwrap());
}

#[test]
fn violated_assumption_exits_with_one_parsable_line() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config("constant_identity.json")).unwrap();
    let bad = text.replacen(
        r#""g": {"kind": "constant", "value": 0.0}"#,
        r#""g": {"kind": "polynomial", "coefficients": [0.0, 1.0], "coordinate": 0}"#,
        1,
    );
    assert_ne!(bad, text);
    let path = dir.path().join("bad.json");
    std::fs::write(&path, bad).unwrap();
    let out = bin(&[path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()], None);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(stderr.trim_end().lines().count(), 1, "{stderr}");
    assert!(stderr.starts_with("error kind=assumption-a4 message=\""), "{stderr}");
    assert!(!dir.path().join("results.csv").exists());
}

#[test]
fn malformed_config_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\"mode\": \"solve\",").unwrap();
    let out = bin(&[path.to_str().unwrap()], Some(dir.path()));
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error kind=config "));
    let out = bin(&["--mode", "fly"], Some(dir.path()));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error kind=config "));
}

#[test]
fn penalization_sweep_writes_table_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = RunConfig::load(&config("penalization_sweep.json")).unwrap();
    c.mc.n_paths = 300;
    let outcome = run(&c, dir.path()).unwrap();
    assert_eq!(outcome.rows.len(), 5);
    assert_eq!(outcome.rows[0].sweep_param, "target");
    let params: Vec<&str> = outcome.rows[1..].iter().map(|r| r.sweep_param.as_str()).collect();
    assert_eq!(params, ["4.0", "16.0", "64.0", "256.0"]);
    assert_eq!(outcome.plots.len(), 1);
    assert!(outcome.plots[0].exists());
    assert!(outcome.warnings.is_empty());
}

#[test]
fn alpha_and_coefficient_sweeps_run() {
    for (name, rows) in [("alpha_sweep.json", 4), ("coefficient_sweep.json", 4)] {
        let dir = tempfile::tempdir().unwrap();
        let mut c = RunConfig::load(&config(name)).unwrap();
        c.mc.n_paths = 100;
        let outcome = run(&c, dir.path()).unwrap();
        assert_eq!(outcome.rows.len(), rows, "{name}");
        assert_eq!(outcome.plots.len(), 1, "{name}");
    }
}

#[test]
fn skorokhod_mode_reflects_the_step_path() {
    let dir = tempfile::tempdir().unwrap();
    let c = RunConfig::load(&config("skorokhod_step.json")).unwrap();
    let outcome = run(&c, dir.path()).unwrap();
    assert_eq!(outcome.rows[0].mean, 0.5);
    assert!((outcome.rows[1].mean - 0.5).abs() < 1e-4);
    assert!((outcome.rows[2].mean - 0.5 * (1.0 - (-75.0f64).exp())).abs() < 1e-12);
    assert!(dir.path().join("skorokhod_x.csv").exists());
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&outcome.manifest_path).unwrap()).unwrap();
    assert!(manifest["details"]["sup_gap_to_reference"].as_f64().unwrap() < 1e-4);
}

#[test]
fn trajectory_dump_writes_paths() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = RunConfig::load(&config("constant_identity.json")).unwrap();
    c.mc.n_paths = 10;
    c.dump_trajectories = 2;
    let outcome = run(&c, dir.path()).unwrap();
    assert_eq!(outcome.trajectories.len(), 4);
    let text = std::fs::read_to_string(dir.path().join("trajectory_0_x.csv")).unwrap();
    assert!(text.starts_with("time,x1,x2,jump\n"));
}
