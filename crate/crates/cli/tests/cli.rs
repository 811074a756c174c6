use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_causal-ttt")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = cli(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn stages_chain_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let inst = root.join("inst");
    ok(&["generate", "--spec", "Linear_U_ER", "--d", "5", "--n", "150", "--seed", "4", "--out", p(&inst)]);
    for f in ["data.csv", "graph.csv", "meta.json"] {
        assert!(inst.join(f).is_file(), "{f}");
    }

    let refine_cfg = root.join("refine.json");
    fs::write(&refine_cfg, r#"{"n_steps": 150, "collect_k": 20, "score_config": {"regressor": {"basis": "linear"}}}"#).unwrap();
    let refined = root.join("refine");
    let summary = ok(&["refine", "--data", p(&inst.join("data.csv")), "--config", p(&refine_cfg), "--out", p(&refined)]);
    let summary: serde_json::Value = serde_json::from_str(&summary).unwrap();
    assert_eq!(summary["collected"], 20);
    assert!(summary["best_total"].as_f64().unwrap() >= summary["seed_total"].as_f64().unwrap());

    let trainset = root.join("trainset");
    ok(&["make-trainset", "--data", p(&inst.join("data.csv")), "--graphs", p(&refined.join("graphs")), "--out", p(&trainset)]);
    assert_eq!(fs::read_dir(&trainset).unwrap().count(), 40);

    let train_cfg = root.join("train.json");
    fs::write(&train_cfg, r#"{"epochs": 10}"#).unwrap();
    let model = root.join("model");
    ok(&["train", "--trainset", p(&trainset), "--config", p(&train_cfg), "--out", p(&model)]);

    let pred = root.join("pred");
    ok(&["predict", "--predictor", p(&model.join("predictor.json")), "--data", p(&inst.join("data.csv")), "--out", p(&pred)]);
    let report = ok(&["eval", "--prediction", p(&pred.join("prediction.csv")), "--truth", p(&inst.join("graph.csv")), "--out", p(&pred)]);
    let report: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert!((0.0..=1.0).contains(&report["auroc"].as_f64().unwrap()));
    assert!(pred.join("metrics.json").is_file());
}

#[test]
fn malformed_input_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.csv");
    fs::write(&data, "1,2\n3,x\n").unwrap();
    let out = cli(&["refine", "--data", p(&data), "--out", p(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("column 2"), "{err}");

    let missing = cli(&["eval", "--prediction", "nope.csv", "--truth", "nope.csv"]);
    assert_eq!(missing.status.code(), Some(2));

    let bad_cfg = dir.path().join("cfg.json");
    fs::write(&bad_cfg, r#"{"threshold": 3.0}"#).unwrap();
    assert_eq!(cli(&["pipeline", "--config", p(&bad_cfg)]).status.code(), Some(2));
}

#[test]
fn pipeline_runs_from_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("pipeline.json");
    fs::write(
        &cfg,
        r#"{
  "data": {"kind": "generate", "spec": "RFF_G_ER", "d": 4, "n": 120},
  "refine": {"n_steps": 100, "collect_k": 10},
  "train": {"epochs": 5},
  "save_trainset": false
}"#,
    )
    .unwrap();
    let run = dir.path().join("run");
    let stdout = ok(&["--threads", "1", "pipeline", "--config", p(&cfg), "--seed", "5", "--out", p(&run)]);
    let summary: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert!(summary["metrics"]["prediction"]["auroc"].is_number());
    for f in ["run.json", "prediction.csv", "metrics.json", "timings.json", "trace.jsonl"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    let snapshot: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("config.json")).unwrap()).unwrap();
    assert_eq!(snapshot["seed"], 5);

    let knn = dir.path().join("knn");
    ok(&["pipeline", "--config", p(&cfg), "--out", p(&knn), "--stages", "knn-only"]);
    assert!(!knn.join("predictor.json").exists());
}

#[test]
fn benchmark_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bench.json");
    fs::write(
        &cfg,
        r#"{
  "test_spec": "Linear_G_ER", "d": 4, "n": 100, "instances": 2,
  "pipeline": {"refine": {"n_steps": 60, "collect_k": 10}, "train": {"epochs": 3}}
}"#,
    )
    .unwrap();
    let out = dir.path().join("bench");
    let stdout = ok(&["benchmark", "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(stdout.lines().count(), 12);
    assert!(out.join("summary.csv").is_file() && out.join("instances.csv").is_file());
}
