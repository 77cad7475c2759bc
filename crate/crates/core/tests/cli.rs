use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fetalguard::ingest;
use fetalguard::synth::{generate_record, SynthParams};

fn fetalguard(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fetalguard"))
        .current_dir(dir)
        .env("FETALGUARD_LOG", "error")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = fetalguard(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const CONFIG: &str = r#"{
  "data": {"kind": "directory", "signal_dir": "data", "metadata_file": "data/metadata.csv"},
  "preprocess": {"feature_dim": 96},
  "model": {"ae": {"max_epochs": 80}}
}"#;

#[test]
fn staged_commands_and_scoring() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("cfg.json"), CONFIG).unwrap();

    let out = ok(dir, &["synth", "--normal", "60", "--abnormal", "30", "--seed", "3", "--out", "data"]);
    assert!(out.contains("90 records"));
    let out = ok(dir, &["ingest", "--signals", "data", "--metadata", "data/metadata.csv", "--out", "ing"]);
    assert!(out.contains("abnormal=30 normal=60"), "{out}");

    ok(dir, &["preprocess", "--config", "cfg.json", "--out", "w"]);
    let out = ok(dir, &["split", "--config", "cfg.json", "--model", "ae", "--features", "w/features.json", "--out", "w"]);
    assert!(out.contains("test=9"), "{out}");
    ok(dir, &["train", "--config", "cfg.json", "--model", "ae", "--split", "w/split.json", "--out", "w"]);
    assert!(dir.join("w/loss.csv").exists());
    let out = ok(dir, &["evaluate", "--model-file", "w/model.json", "--split", "w/split.json", "--out", "w"]);
    assert!(out.starts_with("f1="), "{out}");
    ok(dir, &["curves", "--report", "w/report.json", "--out", "w"]);
    for f in ["pr.csv", "roc.csv", "curves.svg"] {
        assert!(dir.join("w").join(f).exists(), "{f}");
    }

    // Fresh recordings the model has never seen.
    let mut verdicts = Vec::new();
    for (i, abnormal) in [false, false, false, false, false, true, true, true, true, true].into_iter().enumerate() {
        let (rec, _) = generate_record(&SynthParams::default().with_abnormal(abnormal), 1000 + i as u64).unwrap();
        let path = dir.join(format!("fresh{i}.csv"));
        fs::write(&path, ingest::write_record_csv(&rec)).unwrap();
        let line = ok(dir, &["score", "--model-file", "w/model.json", "--signal", path.to_str().unwrap()]);
        let fields: Vec<&str> = line.trim().split(',').collect();
        assert_eq!(fields.len(), 4, "{line}");
        assert_eq!(fields[0], format!("fresh{i}"));
        let score: f64 = fields[1].parse().unwrap();
        let tau: f64 = fields[2].parse().unwrap();
        assert_eq!(fields[3], if score > tau { "abnormal" } else { "normal" });
        verdicts.push((abnormal, fields[3].to_string()));
    }
    let normal_ok = verdicts.iter().filter(|(a, v)| !a && v == "normal").count();
    let abnormal_ok = verdicts.iter().filter(|(a, v)| *a && v == "abnormal").count();
    assert!(normal_ok >= 4, "{verdicts:?}");
    assert_eq!(abnormal_ok, 5, "{verdicts:?}");

    // Fewer samples than feature components cannot be scored.
    let (mut rec, _) = generate_record(&SynthParams::default(), 1).unwrap();
    rec.fhr.truncate(40);
    fs::write(dir.join("short.csv"), ingest::write_record_csv(&rec)).unwrap();
    let out = fetalguard(dir, &["score", "--model-file", "w/model.json", "--signal", "short.csv"]);
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());
}

#[test]
fn invalid_config_fails_loudly() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("bad.json"), "{\n  \"model\": {\n    \"svm\": {}\n  }\n}\n").unwrap();
    let out = fetalguard(dir, &["run", "--config", "bad.json"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
    for name in ["iforest", "ae", "ganomaly"] {
        assert!(err.contains(name), "{err}");
    }

    let out = fetalguard(dir, &["run", "--model", "svm"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("valid options"));

    let out = fetalguard(dir, &["score", "--model-file", "missing.json", "--signal", "x.csv"]);
    assert!(!out.status.success());
}

#[test]
fn run_command_writes_seed_scoped_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = r#"{
      "data": {"kind": "synthetic", "n_normal": 40, "n_abnormal": 20, "params": {"duration_min": 21}},
      "preprocess": {"feature_dim": 48},
      "model": {"iforest": {"n_trees": 25}},
      "eval": {"models": ["iforest"]},
      "output": {"dir": "runs"}
    }"#;
    fs::write(dir.join("cfg.json"), cfg).unwrap();
    let table = ok(dir, &["run", "--config", "cfg.json", "--seeds", "3"]);
    assert!(table.contains("| iforest | 3 |"), "{table}");
    for seed in 0..3 {
        assert!(dir.join(format!("runs/iforest/seed_{seed}/report.json")).exists());
    }
    assert!(dir.join("runs/iforest/aggregate.json").exists());
}
