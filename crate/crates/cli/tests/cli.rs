use std::path::Path;
use std::process::{Command, Output};

fn detlab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_detlab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("DETLAB_OUT")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn oracle_defaults_report_all_trials() {
    let dir = tempfile::tempdir().unwrap();
    let o = detlab(&["oracle"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().next(), Some("500/500 trials TV < 1e-9"));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "oracle");
    assert_eq!(manifest["effective_params"]["trials"], 500);
    let files = manifest["files"].as_array().unwrap();
    assert!(files.iter().any(|f| f["name"] == "oracle_trials.csv"));
    for f in files {
        assert_eq!(f["sha256"].as_str().unwrap().len(), 64);
    }
}

#[test]
fn scaling_flags_give_strictly_decreasing_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = detlab(&["scaling", "--s", "0", "--n", "8,16,32,64"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("scaling.csv")).unwrap();
    let d: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(d.len(), 4);
    assert!(d.windows(2).all(|w| w[1] < w[0]), "{d:?}");
}

#[test]
fn empty_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("empty.json");
    std::fs::write(&cfg, "").unwrap();
    let o = detlab(&["--config", cfg.to_str().unwrap(), "induce"], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_str(stderr(&o).trim()).unwrap();
    assert_eq!(err["error"]["kind"], "config");
}

#[test]
fn unknown_param_field_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"suite":"scaling","params":{"nodez":10}}"#).unwrap();
    let o = detlab(&["--config", cfg.to_str().unwrap(), "scaling"], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nodez"), "{}", stderr(&o));
}

#[test]
fn suite_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"suite":"perturb"}"#).unwrap();
    let o = detlab(&["--config", cfg.to_str().unwrap(), "exhaust"], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn domain_errors_exit_with_module_payload() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"suite":"scaling","params":{"s":[-1.5]}}"#).unwrap();
    let o = detlab(&["--config", cfg.to_str().unwrap(), "scaling"], &dir.path().join("out"));
    assert_ne!(o.status.code(), Some(0));
    let err: serde_json::Value = serde_json::from_str(stderr(&o).trim()).unwrap();
    assert_ne!(err["error"]["kind"], "config");
}

#[test]
fn config_seed_and_params_apply_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"suite":"sample","seed":42,"params":{"count":50}}"#).unwrap();
    let o = detlab(&["--config", cfg.to_str().unwrap(), "sample"], &dir.path().join("a"));
    assert!(o.status.success(), "{}", stderr(&o));
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 42);
    assert_eq!(m["effective_params"]["count"], 50);
    assert!(m["config_sha256"].is_string());

    let o = detlab(
        &["--config", cfg.to_str().unwrap(), "--seed", "7", "sample", "--count", "9"],
        &dir.path().join("b"),
    );
    assert!(o.status.success());
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("b/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 7);
    assert_eq!(m["effective_params"]["count"], 9);
}

#[test]
fn repeated_runs_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        let o = detlab(&["--seed", "11", "weakconv", "--skip-calibration"], &dir.path().join(name));
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for file in ["weakconv.csv", "weakconv_summary.json"] {
        let a = std::fs::read(dir.path().join("a").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file}");
    }
}

#[test]
fn every_subcommand_writes_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    for (i, args) in [
        vec!["induce"],
        vec!["perturb"],
        vec!["exhaust"],
        vec!["tightness"],
        vec!["sample", "--count", "20"],
    ]
    .into_iter()
    .enumerate()
    {
        let out = dir.path().join(i.to_string());
        let o = detlab(&args, &out);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
        assert!(out.join("manifest.json").exists(), "{args:?}");
    }
}
