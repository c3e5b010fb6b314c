//! End-to-end tests of the config runner and the command-line tool.

use std::path::Path;
use std::process::Command;

use mixfield::experiment::{presets, run_in, simulate_in, ExperimentConfig, Status, PRESETS};
use mixfield::Error;
use sha2::{Digest, Sha256};

const BIN: &str = env!("CARGO_BIN_EXE_mixfield");

fn ou_config(extra: &str) -> String {
    format!(
        r#"
[model]
type = "mma"
l = 1
basis = {{ dim = 1, sigma = [[1.0]] }}
kernel = [{{ shape = {{ kind = "exponential", rates = [1.0] }} }}]

[simulation]
seed = 7
replicates = 200
{extra}
"#
    )
}

fn read_column(path: &Path, column: &str) -> Vec<f64> {
    let mut rd = csv::Reader::from_path(path).unwrap();
    let idx = rd.headers().unwrap().iter().position(|h| h == column).unwrap();
    rd.records().map(|r| r.unwrap()[idx].parse().unwrap()).collect()
}

#[test]
fn zero_kernel_gives_zero_traces() {
    let text = r#"
[model]
type = "mma"
l = 1
basis = { dim = 1, sigma = [[1.0]] }
kernel = [{ shape = { kind = "exponential", rates = [1.0] }, matrix = [[0.0]] }]

[diagnostics]
run = ["combined", "pair"]

[simulation]
seed = 3
"#;
    let cfg = ExperimentConfig::parse(text).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let rep = run_in(&cfg, "inline", tmp.path()).unwrap();
    for name in ["combined", "pair"] {
        let o = rep.outcome(name).unwrap();
        assert_eq!(o.status, Status::Ok);
        assert_eq!(o.verdict.as_deref(), Some("consistent"), "{name}");
    }
    assert!(read_column(&tmp.path().join("combined.csv"), "value").iter().all(|v| *v == 0.0));
    assert_eq!(rep.exit_code(), 0);
}

#[test]
fn ou_combined_csv_matches_closed_form() {
    let cfg = presets::config("ou-gaussian").unwrap();
    let mut cfg = cfg;
    cfg.diagnostics.run = vec!["combined".into()];
    let tmp = tempfile::tempdir().unwrap();
    run_in(&cfg, "ou-gaussian", tmp.path()).unwrap();
    let path = tmp.path().join("combined.csv");
    let values = read_column(&path, "value");
    let t = read_column(&path, "t0");
    assert_eq!(values.len(), 21);
    for (v, t) in values.iter().zip(&t) {
        assert!((v - (-t).exp() / 2.0).abs() <= 1e-9, "t = {t}: {v}");
    }
}

#[test]
fn unknown_diagnostic_is_a_validation_error() {
    let text = ou_config("").replace("[simulation]", "[diagnostics]\nrun = [\"combined\", \"bogus\"]\n\n[simulation]");
    match ExperimentConfig::parse(&text) {
        Err(Error::Validation { field, .. }) => assert_eq!(field, "diagnostics.run"),
        other => panic!("expected a validation error, got {other:?}"),
    }
}

#[test]
fn cli_rejects_invalid_config_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let text = ou_config("").replace("[simulation]", "[diagnostics]\nrun = [\"bogus\"]\n\n[simulation]");
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, text).unwrap();
    let status = Command::new(BIN).arg("run").arg(&cfg).env("OUTPUT_DIR", &out).status().unwrap();
    assert_eq!(status.code(), Some(1));
    assert!(!out.exists());
    let status = Command::new(BIN).arg("validate").arg(&cfg).status().unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn parse_errors_carry_line_numbers() {
    let text = "[model]\ntype = \"mma\"\nl = \n";
    match ExperimentConfig::parse(text) {
        Err(Error::Validation { field, .. }) => assert!(field.starts_with("line "), "{field}"),
        other => panic!("expected a validation error, got {other:?}"),
    }
}

#[test]
fn presets_cover_the_model_zoo() {
    let required = [
        "ou-gaussian",
        "ou-cp",
        "indicator-cp",
        "constant-field",
        "sum-of-ou",
        "subordinated-ou",
        "atom-2pi",
    ];
    assert!(PRESETS.len() >= required.len());
    for name in required {
        assert!(presets::find(name).is_some(), "{name}");
    }
    for p in PRESETS {
        p.config().validate().unwrap();
        let expected = if p.name == "constant-field" { "non-mixing" } else { "mixing" };
        assert_eq!(p.expected, expected, "{}", p.name);
    }
    let out = Command::new(BIN).arg("presets").output().unwrap();
    assert!(out.status.success());
    let listing = String::from_utf8(out.stdout).unwrap();
    assert!(PRESETS.iter().all(|p| listing.contains(p.name)));
}

#[test]
fn manifest_lists_every_file_with_its_hash() {
    let cfg = presets::config("ou-cp").unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let rep = run_in(&cfg, "ou-cp", tmp.path()).unwrap();
    let manifest: toml::Value = toml::from_str(&std::fs::read_to_string(tmp.path().join("manifest.toml")).unwrap()).unwrap();
    let files = manifest["files"].as_array().unwrap();
    assert_eq!(files.len(), rep.files.len());
    for f in files {
        let path = f["path"].as_str().unwrap();
        let bytes = std::fs::read(tmp.path().join(path)).unwrap();
        assert_eq!(f["sha256"].as_str().unwrap(), hex::encode(Sha256::digest(&bytes)), "{path}");
        assert_eq!(f["bytes"].as_integer().unwrap() as usize, bytes.len());
    }
    let mut listed: Vec<&str> = files.iter().map(|f| f["path"].as_str().unwrap()).collect();
    listed.sort();
    let mut on_disk = Vec::new();
    for e in walk(tmp.path()) {
        let rel = e.strip_prefix(tmp.path()).unwrap().to_string_lossy().into_owned();
        if rel != "manifest.toml" {
            on_disk.push(rel);
        }
    }
    on_disk.sort();
    assert_eq!(listed, on_disk.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(manifest["seed"].as_integer(), Some(1002));
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn inconclusive_only_run_exits_with_three() {
    let text = ou_config("").replace(
        "[simulation]",
        "[sequence]\nstep = 0.25\n\n[diagnostics]\nrun = [\"combined\"]\n\n[simulation]",
    );
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("short.toml");
    std::fs::write(&cfg_path, text).unwrap();
    let out = tmp.path().join("out");
    let status = Command::new(BIN).arg("run").arg(&cfg_path).env("OUTPUT_DIR", &out).status().unwrap();
    assert_eq!(status.code(), Some(3));
    assert!(out.join("summary.csv").exists());
}

#[test]
fn runtime_failure_exits_with_two() {
    let text = r#"
[model]
type = "constant"
l = 1
law = { dim = 1, atoms = [{ point = [1.0], mass = 1.0 }] }

[diagnostics]
run = ["combined", "integrability"]

[simulation]
seed = 1
"#;
    let cfg = ExperimentConfig::parse(text).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let rep = run_in(&cfg, "inline", tmp.path()).unwrap();
    assert!(matches!(rep.outcome("integrability").unwrap().status, Status::Failed(_)));
    assert_eq!(rep.exit_code(), 2);
    let cfg_path = tmp.path().join("constant.toml");
    std::fs::write(&cfg_path, text).unwrap();
    let status = Command::new(BIN)
        .arg("run")
        .arg(&cfg_path)
        .env("OUTPUT_DIR", tmp.path().join("cli"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn output_dir_variable_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("elsewhere");
    let status = Command::new(BIN)
        .arg("run")
        .arg("indicator-cp")
        .current_dir(tmp.path())
        .env("OUTPUT_DIR", &out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(out.join("manifest.toml").exists());
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn refused_pair_criterion_is_reported() {
    let cfg = presets::config("atom-2pi").unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let rep = run_in(&cfg, "atom-2pi", tmp.path()).unwrap();
    assert!(matches!(rep.outcome("pair").unwrap().status, Status::Refused(_)));
    assert_eq!(rep.outcome("rescaled").unwrap().verdict.as_deref(), Some("consistent"));
    assert_eq!(rep.exit_code(), 0);
}

#[test]
fn simulate_writes_a_reusable_realization() {
    let cfg = ExperimentConfig::parse(&ou_config("")).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    simulate_in(&cfg, "inline", tmp.path()).unwrap();
    assert!(tmp.path().join("realization.csv").exists());
    let cache: Vec<_> = std::fs::read_dir(tmp.path().join("cache")).unwrap().collect();
    assert_eq!(cache.len(), 1);
}

#[test]
fn config_round_trips_through_toml() {
    for p in PRESETS {
        let cfg = p.config();
        let again = ExperimentConfig::parse(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(again.to_toml().unwrap(), cfg.to_toml().unwrap(), "{}", p.name);
    }
}
