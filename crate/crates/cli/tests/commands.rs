use std::path::Path;

use apifk_cli::cli::{EXIT_OK, EXIT_RUNTIME, EXIT_USAGE};
use apifk_cli::{execute, run_from, Cli};
use apifk_core::knowledge;
use apifk_core::log_model::load_log;
use clap::Parser;
use serde_json::Value;

fn run(args: &[&str], env_dir: Option<&Path>) -> anyhow::Result<Vec<Value>> {
    let cli = Cli::try_parse_from(std::iter::once("apifk").chain(args.iter().copied()))?;
    let mut out = Vec::new();
    execute(cli.command, env_dir.map(Path::to_path_buf), &mut out)?;
    Ok(String::from_utf8(out)?
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_mine_train_predict_sr() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("l.jsonl");
    let kdir = dir.path().join("knowledge");
    let model = dir.path().join("m.bin");

    let out = run(&["simulate", "--out", s(&log), "--n", "600", "--seed", "4"], None).unwrap();
    assert_eq!(out[0]["records"], 600);
    assert_eq!(load_log(&log).unwrap().records.len(), 600);

    let out = run(&["mine", "--log", s(&log), "--out", s(&kdir)], None).unwrap();
    assert_eq!(out[0]["documents"].as_array().unwrap().len(), 4);
    assert_eq!(knowledge::load_all(&kdir).unwrap().len(), 4);

    let out = run(
        &["train", "--log", s(&log), "--out", s(&model), "--variant", "tiny", "--epochs", "1", "--seed", "2"],
        None,
    )
    .unwrap();
    assert_eq!(out.len(), 2);
    assert_eq!(out[0]["epoch"], 0);
    assert!(out[1]["holdout"]["overall"].is_number());
    assert!(model.exists());

    let request = dir.path().join("r.json");
    std::fs::write(&request, r#"{"api":"SendSms","params":{"PhoneNumbers":"13800138000","SignName":"Aliyun"}}"#).unwrap();
    let out = run(&["predict", "--model", s(&model), "--request", s(&request)], None).unwrap();
    assert!(out[0]["label"].is_string());
    let total: f64 = out[0]["probabilities"].as_array().unwrap().iter().map(|p| p["probability"].as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-6);

    let out = run(&["sr", "--log", s(&log)], None).unwrap();
    assert_eq!(out[0]["call_number"], 600);
    assert!(out[0]["sr"].as_f64().unwrap() > 0.5);
}

#[test]
fn knowledge_env_overrides_out_flag() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("l.jsonl");
    let flag_dir = dir.path().join("flag");
    let env_dir = dir.path().join("env");
    run(&["simulate", "--out", s(&log), "--n", "100"], None).unwrap();
    run(&["mine", "--log", s(&log), "--out", s(&flag_dir)], Some(&env_dir)).unwrap();
    assert!(!flag_dir.exists());
    assert_eq!(knowledge::load_all(&env_dir).unwrap().len(), 4);
    run(&["mine", "--log", s(&log)], Some(&env_dir)).unwrap();
    assert!(run(&["mine", "--log", s(&log)], None).is_err());
}

#[test]
fn exit_codes() {
    assert_eq!(run_from(["apifk", "--help"]), EXIT_OK);
    assert_eq!(run_from(["apifk", "frobnicate"]), EXIT_USAGE);
    assert_eq!(run_from(["apifk", "sr"]), EXIT_USAGE);
    assert_eq!(run_from(["apifk", "train", "--log", "x", "--out", "y", "--variant", "huge"]), EXIT_USAGE);
    assert_eq!(run_from(["apifk", "sr", "--log", "/nonexistent/log.jsonl"]), EXIT_RUNTIME);
}
