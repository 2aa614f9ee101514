use std::path::Path;
use std::process::{Command, Output};

use warpgreen_cli::{parse_config, run_verify, CliError, RunConfig};
use warpgreen_core::Error as CoreError;

fn warpgreen(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_warpgreen")).args(args).current_dir(dir).output().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn baseline_constant_config_is_valid() {
    let cfg = parse_config("[model]\nf = \"const:1\"\nkappa = \"const:1\"\nn = 1\n[grid]\nn = 256\n").unwrap();
    assert_eq!(cfg.grid.n(), 256);
    assert!(cfg.model.is_translation_invariant());
}

#[test]
fn running_example_is_valid() {
    let cfg = parse_config("[model]\nf = \"trig:2,1\"\n").unwrap();
    // positivity scan minimum of 2 + cos is 1
    let (_, min) = cfg.model.f().min_on_scan(4096);
    assert!((min - 1.0).abs() < 1e-6);
}

#[test]
fn negative_potential_is_rejected_as_non_coercive() {
    let err = parse_config("[model]\nkappa = \"const:-1\"\n").unwrap_err();
    match err {
        CliError::Validation(CoreError::CoercivityFailure { lambda_min }) => assert!(lambda_min < 0.0),
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(CliError::Validation(CoreError::CoercivityFailure { lambda_min: -1.0 }).exit_code(), 2);
}

#[test]
fn sign_changing_warping_is_rejected_with_the_scan_value() {
    let err = parse_config("[model]\nf = \"trig:0.5,1\"\n").unwrap_err();
    match err {
        CliError::Validation(CoreError::NonPositiveWarping { value, .. }) => assert!(value <= 0.0),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn parse_errors_name_the_line() {
    let err = parse_config("[grid]\nn = 64\n[model]\nn = \"one\"\n").unwrap_err();
    let text = err.to_string();
    assert!(text.contains("line 4"), "{text}");
    assert_eq!(err.exit_code(), 2);
    let err = parse_config("[model]\nwarping = \"const:1\"\n").unwrap_err();
    assert!(err.to_string().contains("unknown field"), "{err}");
}

#[test]
fn verify_constant_model_includes_closed_form() {
    let cfg = parse_config("[model]\nf = \"const:1\"\nkappa = \"const:4\"\n[grid]\nn = 256\n").unwrap();
    let report = run_verify(&cfg).unwrap();
    assert!(report.passed, "{report:?}");
    let closed = report.checks.iter().find(|c| c.name == "closed_form").unwrap();
    assert!(closed.fine < 1e-5 && closed.order.unwrap() > 1.9);
}

#[test]
fn verify_running_example_converges_at_second_order() {
    for n in [1, 2] {
        let cfg = parse_config(&format!("[model]\nn = {n}\n[grid]\nn = 256\n")).unwrap();
        let report = run_verify(&cfg).unwrap();
        assert!(report.passed, "{report:?}");
        assert_eq!(report.grids, [256, 512]);
        assert!(report.checks.iter().all(|c| c.name != "closed_form"));
        for c in report.checks.iter().filter(|c| c.required_order.is_some()) {
            if let Some(order) = c.order {
                assert!(order >= 1.9, "{} order {order}", c.name);
            }
        }
    }
}

#[test]
fn impossible_tolerance_fails_with_table_intact() {
    let cfg = parse_config("[grid]\nn = 128\n[verify]\nsymmetry = 1e-16\n").unwrap();
    let report = run_verify(&cfg).unwrap();
    assert!(!report.passed);
    assert_eq!(report.checks.len(), 6);
    assert_eq!(report.failed_checks(), vec!["symmetry"]);
    assert!(report.checks.iter().all(|c| c.fine.is_finite()));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), "[grid]\nn = 128\n[bubble]\neps = 0.2\ns = 0.25\n").unwrap();
    let out = warpgreen(&["bubble", "--config", "run.toml", "--eps", "0.1", "--out", "b.json"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = json(&dir.path().join("b.json"));
    assert_eq!(doc["config"]["bubble"]["eps"], 0.1);
    assert_eq!(doc["config"]["bubble"]["s"], 0.25);
    assert_eq!(doc["config"]["grid"]["n"], 128);
    assert_eq!(doc["result"]["r"].as_array().unwrap().len(), 128);
}

#[test]
fn json_embeds_version_and_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = warpgreen(&["locate", "--n-grid", "128", "--out", "l.json"], dir.path());
    assert!(out.status.success());
    let doc = json(&dir.path().join("l.json"));
    assert_eq!(doc["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(doc["command"], "locate");
    assert_eq!(doc["config"]["model"]["f"], "trig:2,1");
    assert_eq!(doc["config"]["output"]["format"], "json");
    assert_eq!(doc["config"]["solver"]["newton_tol"], 1e-10);
    let points = doc["result"]["critical_points"].as_array().unwrap();
    assert_eq!(points.len(), 2);
    assert_eq!(doc["result"]["scan_extrema"].as_array().unwrap().len(), 2);
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["genericity", "--n-grid", "64", "--trials", "8", "--seed", "7", "--out", "s.json"];
    assert!(warpgreen(&args, dir.path()).status.success());
    let first = std::fs::read(dir.path().join("s.json")).unwrap();
    assert!(warpgreen(&args, dir.path()).status.success());
    assert_eq!(first, std::fs::read(dir.path().join("s.json")).unwrap());
    // the rename leaves no temporary files behind
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn green_csv_writes_one_file_per_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = warpgreen(&["green", "--n-grid", "32", "--out", "tables.csv"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for suffix in ["G", "Gamma", "H", "diagonal"] {
        let text = std::fs::read_to_string(dir.path().join(format!("tables_{suffix}.csv"))).unwrap();
        assert_eq!(text.lines().count(), 34, "{suffix}");
    }
    let h = std::fs::read_to_string(dir.path().join("tables_H.csv")).unwrap();
    assert_eq!(h.lines().next().unwrap().split(',').count(), 34);
}

#[test]
fn bubble_csv_has_profile_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = warpgreen(&["bubble", "--n-grid", "512", "--eps", "0.05", "--s", "0.5", "--out", "p.csv"], dir.path());
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("p.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "r,U,PU,eps_PU,two_sqrt2_G");
    assert_eq!(lines.count(), 512);
}

#[test]
fn exit_codes_follow_failure_kind() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| warpgreen(args, dir.path()).status.code().unwrap();
    assert_eq!(code(&["green", "--kappa", "const:-1"]), 2);
    assert_eq!(code(&["locate", "--f", "const:1", "--n-grid", "64"]), 2);
    assert_eq!(code(&["bubble", "--n-grid", "64", "--eps", "0.01"]), 2);
    // a start beyond the fold of the exponential branch does not converge
    assert_eq!(code(&["solve-exp", "--n-grid", "512", "--eps0", "0.05", "--steps", "1", "--out", "e.json"]), 3);
    assert!(dir.path().join("e.json").exists());
    std::fs::write(dir.path().join("strict.toml"), "[verify]\nsymmetry = 1e-16\n").unwrap();
    assert_eq!(code(&["verify", "--config", "strict.toml", "--n-grid", "64", "--out", "v.json"]), 4);
    let report = json(&dir.path().join("v.json"));
    assert_eq!(report["result"]["passed"], false);
    assert_eq!(code(&["verify", "--n-grid", "64", "--format", "yaml"]), 2);
}

#[test]
fn power_branch_reports_every_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let out = warpgreen(&["solve-power", "--n-grid", "1024", "--p-list", "40,80", "--out", "p.json"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = json(&dir.path().join("p.json"));
    let steps = doc["result"]["branch"]["steps"].as_array().unwrap();
    assert_eq!(steps.len(), 2);
    assert_eq!(steps[1]["parameter"], 80.0);
    assert_eq!(steps[0]["v"]["values"].as_array().unwrap().len(), 1024);
    assert!(doc["result"]["branch"]["failure"].is_null());
}

#[test]
fn default_config_round_trips_through_toml() {
    let cfg = RunConfig::default();
    let text = toml::to_string(&cfg).unwrap();
    assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
}
