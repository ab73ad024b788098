use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn oec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oec")).args(args).env_remove("OEC_LOG").output().unwrap()
}

fn ok(args: &[&str]) {
    let out = oec(args);
    assert!(out.status.success(), "oec {args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn error_record(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("an error line on stderr");
    serde_json::from_str(line).unwrap()
}

fn error_fields(out: &Output) -> Vec<String> {
    error_record(out)["fields"]
        .as_array()
        .map(|a| a.iter().map(|f| f["field"].as_str().unwrap().to_string()).collect())
        .unwrap_or_default()
}

/// Two small studies plus a target, written in the studies CSV layout.
fn two_study_fixture(path: &Path) {
    let mut text = String::from("study_id,y,x1,x2\n");
    for (id, shift) in [("a", 0.0), ("b", 1.5), ("t", 0.7)] {
        for i in 0..15 {
            let x1 = (i as f64 * 0.37).sin() * 2.0;
            let x2 = ((i * 7) % 5) as f64 - 2.0;
            let y = 1.0 + shift + 0.8 * x1 - 0.4 * x2 + ((i * 13) % 7) as f64 * 0.05;
            text.push_str(&format!("{id},{y},{x1},{x2}\n"));
        }
    }
    fs::write(path, text).unwrap();
}

#[test]
fn no_arguments_prints_usage_and_fails() {
    let out = oec(&[]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn fit_trace_is_non_increasing() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("studies.csv");
    two_study_fixture(&data);
    let out = dir.path().join("out");
    ok(&[
        "fit", "--data", data.to_str().unwrap(), "--variant", "oec-sn", "--target", "t", "--eta", "0.5",
        "--mu", "0.01", "--lambda", "0.01", "--output-dir", out.to_str().unwrap(),
    ]);
    let model: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("model.json")).unwrap()).unwrap();
    let trace: Vec<f64> = model["objective_trace"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!(trace.len() >= 2);
    for w in trace.windows(2) {
        assert!(w[1] <= w[0] + 1e-12 * w[0].abs(), "{trace:?}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "fit");
    assert!(manifest.get("output_dir").is_none());
}

#[test]
fn eta_endpoints_dispatch_to_limiting_methods() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("studies.csv");
    two_study_fixture(&data);
    for eta in ["0", "1"] {
        let out = dir.path().join(format!("eta{eta}"));
        ok(&[
            "fit", "--data", data.to_str().unwrap(), "--variant", "oec-s", "--target", "t", "--eta", eta,
            "--output-dir", out.to_str().unwrap(),
        ]);
        let model: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join("model.json")).unwrap()).unwrap();
        // eta = 0 is stacking (weights, no trace); eta = 1 is a single linear model
        assert_eq!(model.get("weights").is_some(), eta == "0");
        assert!(model.get("objective_trace").is_none());
    }
}

#[test]
fn baselines_have_unit_self_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    ok(&[
        "simulate-general", "--seed", "5", "--replicates", "2", "--methods", "oec-g,mss-g,tom,ssm",
        "--output-dir", out.to_str().unwrap(),
    ]);
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let mut lines = summary.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    for col in ["tom/tom", "ssm/ssm"] {
        let i = header.iter().position(|h| *h == col).unwrap();
        assert_eq!(row[i], "1.0000");
    }
    assert!(fs::read_to_string(out.join("summary.txt")).unwrap().contains("completed 2 failed 0"));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "seed = 1\nkind = \"general\"\nC = 6\nsigma2_x = 0.5\n").unwrap();
    let out = dir.path().join("fx");
    ok(&["make-fixture", "--config", cfg.to_str().unwrap(), "--seed", "9", "--output-dir", out.to_str().unwrap()]);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 9);
    assert_eq!(manifest["settings"]["kind"], "general");
    assert_eq!(manifest["settings"]["general"]["clusters"], 6);
    assert_eq!(manifest["settings"]["general"]["sigma2_x"], 0.5);
}

#[test]
fn manifest_replays_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    ok(&["simulate-general", "--seed", "8", "--replicates", "1", "--methods", "mss-g,tom", "--output-dir", first.to_str().unwrap()]);
    let again = dir.path().join("again");
    let manifest = first.join("manifest.json");
    ok(&["simulate-general", "--config", manifest.to_str().unwrap(), "--output-dir", again.to_str().unwrap()]);
    for f in ["replicates.csv", "summary.csv", "manifest.json"] {
        assert_eq!(fs::read(first.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "seed = 1\nreplicate = 3\n").unwrap();
    let out = oec(&["simulate-general", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let rec = error_record(&out);
    assert_eq!(rec["error"], "config");
    assert!(rec["message"].as_str().unwrap().contains("replicate"));
}

#[test]
fn every_invalid_field_is_reported() {
    let out = oec(&["simulate-general", "--replicates", "0", "--C", "4", "--sigma2-x=-1"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_fields(&out), ["seed", "replicates", "C", "sigma2_x"]);
}

#[test]
fn malformed_flag_is_a_config_error() {
    let out = oec(&["simulate-general", "--seed", "x"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_record(&out)["error"], "config");
}

#[test]
fn eta_outside_unit_interval_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("studies.csv");
    two_study_fixture(&data);
    let out = oec(&["fit", "--data", data.to_str().unwrap(), "--variant", "oec-g", "--eta", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_fields(&out), ["eta"]);
    assert!(error_record(&out)["message"].as_str().unwrap().contains("(0,1)"));
}

#[test]
fn runtime_failures_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.csv");
    fs::write(&data, "study_id,y,x1\na,1.0,not-a-number\n").unwrap();
    let out = oec(&["fit", "--data", data.to_str().unwrap(), "--variant", "tom", "--output-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_record(&out)["error"], "runtime");
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        ok(&["simulate-datadriven", "--seed", "7", "--replicates", "2", "--methods", "oec-s,mss-s,ssm", "--output-dir", out.to_str().unwrap()]);
        ["replicates.csv", "summary.csv", "summary.txt", "manifest.json"].map(|f| fs::read(out.join(f)).unwrap())
    };
    assert_eq!(run("a"), run("b"));
}
