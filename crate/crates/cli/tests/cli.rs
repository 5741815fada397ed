//! End-to-end checks of the binary: exit codes, determinism of the results
//! bundle, the bound report contract, and synthesis reproducibility.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_priorlearn"))
}

fn tempdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("priorlearn_cli_{tag}_{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write(path: &Path, content: &str) {
    fs::write(path, content).unwrap();
}

const RUN_CONFIG: &str = r#"{
  "seed": 42,
  "data": {"synthetic": {"d": 5, "n_tasks": 10, "n_heldout": 0, "m_per_task": 12,
           "noise_std": 0.1, "mode": "shared_prototype", "kind": "classification"}},
  "methods": ["plg", "independent"],
  "sigma": 1.0,
  "delta": 0.05,
  "protocol": {"n_holdout": 3, "repetitions": 2, "observed_fractions": [0.5, 1.0], "c_grid": [1.0]}
}"#;

#[test]
fn missing_config_path_exits_one_with_stderr_message() {
    let out: Output = bin().args(["run"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn unreadable_config_exits_one() {
    let out = bin().args(["run", "--config", "/nonexistent/nope.json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("nope.json"), "stderr: {err}");
}

#[test]
fn invalid_config_values_exit_one() {
    let dir = tempdir("badcfg");
    let cfg = dir.join("run.json");
    write(&cfg, &RUN_CONFIG.replace("\"sigma\": 1.0", "\"sigma\": -3.0"));
    let out = bin().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn data_errors_exit_two() {
    let dir = tempdir("baddata");
    let cfg = dir.join("run.json");
    // manifest points at a missing file
    let config = r#"{
      "seed": 1,
      "data": {"manifest": "MISSING_DIR/manifest.json"},
      "methods": ["arr"],
      "sigma": 1.0, "delta": 0.05,
      "protocol": {"n_holdout": 1, "repetitions": 1, "c_grid": [1.0]}
    }"#;
    write(&cfg, config);
    let out = bin().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn smoke_run_writes_full_bundle() {
    let dir = tempdir("smoke");
    let cfg = dir.join("run.json");
    write(&cfg, RUN_CONFIG);
    let out_dir = dir.join("out");
    let start = std::time::Instant::now();
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(start.elapsed().as_secs() < 10, "smoke run too slow");

    let summary = fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert!(summary.starts_with("method,n_observed,metric,mean,stderr\n"));
    // classification: AUC + 0/1 per fraction per method = 2 reports/fraction
    let plg_rows: Vec<&str> = summary.lines().filter(|l| l.starts_with("plg,")).collect();
    assert_eq!(plg_rows.len(), 4, "2 metrics x 2 fractions: {summary}");

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 42);
    assert!(manifest["config"]["protocol"]["repetitions"].is_number());
    assert!(manifest["version"].is_string());

    let jsonl = fs::read_to_string(out_dir.join("reports.jsonl")).unwrap();
    for line in jsonl.lines() {
        let rec: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(rec["per_rep"].as_array().unwrap().len(), 2);
    }
    // inputs untouched
    assert_eq!(fs::read_to_string(&cfg).unwrap(), RUN_CONFIG);
}

#[test]
fn identical_configs_produce_byte_identical_summaries() {
    let dir = tempdir("det");
    let cfg = dir.join("run.json");
    write(&cfg, RUN_CONFIG);
    let mut outputs = Vec::new();
    for (i, threads) in ["1", "4"].iter().enumerate() {
        let out_dir = dir.join(format!("out{i}"));
        let out = bin()
            .args(["run", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out_dir)
            .args(["--threads", threads])
            .output()
            .unwrap();
        assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
        outputs.push(fs::read(out_dir.join("summary.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1], "summary differs across thread counts");

    // and a third run into a fresh directory, same thread count as the first
    let out_dir = dir.join("out_rerun");
    bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .args(["--threads", "1"])
        .output()
        .unwrap();
    assert_eq!(outputs[0], fs::read(out_dir.join("summary.csv")).unwrap());
}

#[test]
fn bound_report_contract_on_zero_prior() {
    let dir = tempdir("bound");
    let cfg = dir.join("bound.json");
    let config = r#"{
      "seed": 1,
      "data": {"synthetic": {"d": 4, "n_tasks": 6, "n_heldout": 0, "m_per_task": 10,
               "noise_std": 0.1, "mode": "shared_prototype", "kind": "regression"}},
      "sigma": 1.0, "delta": 0.05, "c": 2.0,
      "prior": "zero"
    }"#;
    write(&cfg, config);
    let out = bin().args(["bound", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    // zero prior with sigma = 1: the environment KL contribution vanishes
    assert_eq!(report["env_kl_term"].as_f64().unwrap(), 0.0);
    let total = report["total"].as_f64().unwrap();
    let sum = report["empirical_risk"].as_f64().unwrap()
        + report["env_kl_term"].as_f64().unwrap()
        + report["task_kl_term"].as_f64().unwrap()
        + report["delta_const"].as_f64().unwrap();
    assert!((total - sum).abs() < 1e-12);

    // tighter confidence makes the constant larger
    let loose = dir.join("bound_loose.json");
    write(&loose, &config.replace("\"delta\": 0.05", "\"delta\": 0.5"));
    let out2 = bin().args(["bound", "--config"]).arg(&loose).output().unwrap();
    let report2: serde_json::Value = serde_json::from_slice(&out2.stdout).unwrap();
    assert!(
        report["delta_const"].as_f64().unwrap() > report2["delta_const"].as_f64().unwrap(),
        "smaller delta must give a larger constant"
    );

    // a serialized hyperposterior file is accepted as the prior
    let wq_path = dir.join("wq.json");
    write(
        &wq_path,
        r#"{"w_q": [0.1, -0.2, 0.3, 0.0], "sigma": 1.0, "provenance": "closed_form"}"#,
    );
    let file_cfg = dir.join("bound_file.json");
    write(
        &file_cfg,
        &config.replace("\"prior\": \"zero\"", &format!("\"prior\": {{\"gaussian_file\": {wq_path:?}}}")),
    );
    let out3 = bin().args(["bound", "--config"]).arg(&file_cfg).output().unwrap();
    assert!(out3.status.success(), "stderr: {}", String::from_utf8_lossy(&out3.stderr));
    let report3: serde_json::Value = serde_json::from_slice(&out3.stdout).unwrap();
    assert!(report3["env_kl_term"].as_f64().unwrap() > 0.0);
}

#[test]
fn bound_accepts_subspace_prior_file() {
    let dir = tempdir("bound_sub");
    // orthonormal 4x2 basis, row-major
    let point = serde_json::json!({
        "d": 4, "k": 2,
        "data": [1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]
    });
    let prior_path = dir.join("m.json");
    write(&prior_path, &point.to_string());
    let cfg = dir.join("bound.json");
    let config = format!(
        r#"{{
          "seed": 2,
          "data": {{"synthetic": {{"d": 4, "n_tasks": 5, "n_heldout": 0, "m_per_task": 9,
                   "noise_std": 0.1, "mode": "shared_subspace", "k": 2, "kind": "regression"}}}},
          "sigma": 1.0, "delta": 0.1, "c": 1.0,
          "prior": {{"subspace_file": {:?}}}
        }}"#,
        prior_path
    );
    write(&cfg, &config);
    let out = bin().args(["bound", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["env_kl_unevaluated"], true);
    assert_eq!(report["env_kl_term"].as_f64().unwrap(), 0.0);
}

#[test]
fn synth_is_reproducible_and_loadable() {
    let dir = tempdir("synth");
    let cfg = dir.join("synth.json");
    let config = r#"{
      "seed": 9, "d": 4, "k": 2, "n_tasks": 3, "n_heldout": 1, "m_per_task": 5,
      "noise_std": 0.0, "mode": "shared_subspace", "kind": "regression"
    }"#;
    write(&cfg, config);
    let mut bytes = Vec::new();
    for i in 0..2 {
        let out_dir = dir.join(format!("s{i}"));
        let out = bin()
            .args(["synth", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out_dir)
            .output()
            .unwrap();
        assert!(out.status.success());
        let mut blob = Vec::new();
        for name in ["obs-000.csv", "obs-001.csv", "obs-002.csv", "held-000.csv", "manifest.json", "ground_truth.json"] {
            blob.extend(fs::read(out_dir.join(name)).unwrap());
        }
        bytes.push(blob);
    }
    assert_eq!(bytes[0], bytes[1], "synthesis not byte-reproducible");

    // the emitted bundle is itself a loadable manifest environment
    let run_cfg = dir.join("run.json");
    let manifest_path = dir.join("s0").join("manifest.json");
    let config = format!(
        r#"{{
          "seed": 3,
          "data": {{"manifest": {manifest_path:?}}},
          "methods": ["arr"],
          "sigma": 1.0, "delta": 0.05,
          "protocol": {{"n_holdout": 1, "repetitions": 1, "observed_fractions": [1.0], "c_grid": [1.0]}}
        }}"#
    );
    write(&run_cfg, &config);
    let out = bin()
        .args(["run", "--config"])
        .arg(&run_cfg)
        .arg("--out")
        .arg(dir.join("runout"))
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn synth_rejects_invalid_spec_with_exit_one() {
    let dir = tempdir("synth_bad");
    let cfg = dir.join("synth.json");
    write(
        &cfg,
        r#"{"seed": 1, "d": 3, "k": 9, "n_tasks": 2, "m_per_task": 4,
            "noise_std": 0.0, "mode": "shared_subspace", "kind": "regression"}"#,
    );
    let out = bin().args(["synth", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1), "k > d must be a config error");
}

#[test]
fn help_exits_zero() {
    let out = bin().args(["--help"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("run") && text.contains("bound") && text.contains("synth"));
}
