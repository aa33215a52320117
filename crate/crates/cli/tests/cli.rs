//! End-to-end runs of the `advtraj` binary on a tiny corpus.

use std::path::{Path, PathBuf};
use std::process::Command;

use advtraj_cli::io::sha256_hex;
use advtraj_cli::ExperimentConfig;
use serde_json::{json, Value};

fn small_config(out: &Path) -> Value {
    json!({
        "seed": 11,
        "out": out,
        "dataset": { "count": 4, "train_count": 8 },
        "models": [
            { "name": "cv", "kind": "constant_velocity" },
            { "name": "nn", "kind": "neural", "hidden": 8, "epochs": 3 }
        ],
        "attack": {
            "objectives": ["ade", "left"],
            "pgd": { "max_iter": 8 },
            "pso": { "max_iter": 8, "particles": 4 }
        },
        "mitigation": { "variants": ["detect_then_smooth"], "detector": { "kind": "rule_based" } }
    })
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn advtraj(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_advtraj")).args(args).output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn run_ok(cmd: &str, config: &Path, extra: &[&str]) {
    let mut args = vec![cmd, "--config", config.to_str().unwrap()];
    args.extend_from_slice(extra);
    let (code, err) = advtraj(&args);
    assert_eq!(code, 0, "{cmd} failed: {err}");
}

fn csv_rows(path: &Path) -> usize {
    csv::Reader::from_path(path).unwrap().records().count()
}

#[test]
fn full_pipeline_writes_verified_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = write_config(dir.path(), "cfg.json", &small_config(&out));
    for cmd in ["generate", "train", "attack", "mitigate", "report"] {
        run_ok(cmd, &cfg, &[]);
        let manifest: Value =
            serde_json::from_str(&std::fs::read_to_string(out.join(format!("manifests/{cmd}.json"))).unwrap()).unwrap();
        assert_eq!(manifest["seed"], 11);
        let recorded = ExperimentConfig::from_json(&manifest.to_string()).unwrap();
        assert_eq!(manifest["config_hash"], sha256_hex(recorded.canonical_json().as_bytes()));
        for entry in manifest["outputs"].as_array().unwrap() {
            let bytes = std::fs::read(out.join(entry["path"].as_str().unwrap())).unwrap();
            assert_eq!(entry["sha256"], sha256_hex(&bytes), "{}", entry["path"]);
        }
    }
    assert!(out.join("report/summary.md").exists());
    assert!(out.join("mitigation/roc_rule_based.csv").exists());
    // 4 scenes x 2 models x 2 objectives x 2 optimizers, none failed.
    assert_eq!(csv_rows(&out.join("attack/cells.csv")), 32);
    assert_eq!(std::fs::read_to_string(out.join("attack/errors.json")).unwrap().trim(), "[]");
}

#[test]
fn generate_is_idempotent_and_honours_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let mut cfg = small_config(&out);
    cfg["dataset"] = json!({ "count": 1, "train_count": 0 });
    cfg["models"] = json!([{ "name": "cv", "kind": "constant_velocity" }]);
    let cfg = write_config(dir.path(), "cfg.json", &cfg);
    run_ok("generate", &cfg, &[]);
    let scenes: Vec<_> = std::fs::read_dir(out.join("scenes"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("scene_"))
        .collect();
    assert_eq!(scenes.len(), 1);
    let first = std::fs::read(out.join("scenes").join(&scenes[0])).unwrap();
    run_ok("generate", &cfg, &[]);
    assert_eq!(std::fs::read(out.join("scenes").join(&scenes[0])).unwrap(), first);
}

#[test]
fn flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = write_config(dir.path(), "cfg.json", &small_config(&out));
    run_ok("generate", &cfg, &["--seed", "4"]);
    run_ok("train", &cfg, &["--seed", "4"]);
    run_ok(
        "attack",
        &cfg,
        &["--seed", "4", "--lp", "1,2", "--max-deviation", "0.5", "--objective", "rear", "--optimizer", "pgd"],
    );
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifests/attack.json")).unwrap()).unwrap();
    let attack = &manifest["config"]["attack"];
    assert_eq!(manifest["seed"], 4);
    assert_eq!(attack["l_ps"], json!([1, 2]));
    assert_eq!(attack["max_deviations"], json!([0.5]));
    assert_eq!(attack["objectives"], json!(["rear"]));
    assert_eq!(attack["optimizers"], json!(["pgd"]));
    assert_eq!(csv_rows(&out.join("attack/cells.csv")), 4 * 2 * 2);
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let mut bad = small_config(&out);
    bad["unexpected"] = json!(true);
    let bad = write_config(dir.path(), "bad.json", &bad);
    assert_eq!(advtraj(&["generate", "--config", bad.to_str().unwrap()]).0, 1);

    let missing = dir.path().join("nope.json");
    assert_eq!(advtraj(&["generate", "--config", missing.to_str().unwrap()]).0, 1);

    let cfg = write_config(dir.path(), "cfg.json", &small_config(&out));
    // No corpus or checkpoints yet.
    assert_eq!(advtraj(&["attack", "--config", cfg.to_str().unwrap()]).0, 1);
    assert_eq!(advtraj(&["report", "--config", cfg.to_str().unwrap()]).0, 1);
    // An empty grid dimension.
    let mut empty = small_config(&out);
    empty["attack"]["objectives"] = json!([]);
    let empty = write_config(dir.path(), "empty.json", &empty);
    assert_eq!(advtraj(&["generate", "--config", empty.to_str().unwrap()]).0, 1);
}

#[test]
fn failed_cells_exit_with_two_and_are_listed() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = write_config(dir.path(), "cfg.json", &small_config(&out));
    run_ok("generate", &cfg, &[]);
    run_ok("train", &cfg, &[]);
    // Scenes support l_p up to 6 at 2 Hz, so l_p 7 fails every cell.
    let (code, _) = advtraj(&["attack", "--config", cfg.to_str().unwrap(), "--lp", "1,7"]);
    assert_eq!(code, 2);
    let errors: Vec<Value> =
        serde_json::from_str(&std::fs::read_to_string(out.join("attack/errors.json")).unwrap()).unwrap();
    let cells = csv_rows(&out.join("attack/cells.csv"));
    assert_eq!(errors.len(), 32);
    assert!(errors.iter().all(|e| e["l_p"] == 7));
    assert_eq!(cells + errors.len(), 4 * 2 * 2 * 2 * 2);
}

#[test]
fn mitigation_without_variants_reproduces_the_attack() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let mut cfg = small_config(&out);
    cfg["models"] = json!([{ "name": "nn", "kind": "neural", "hidden": 8, "epochs": 3 }]);
    cfg["mitigation"]["variants"] = json!([]);
    let cfg = write_config(dir.path(), "cfg.json", &cfg);
    for cmd in ["generate", "train", "attack", "mitigate"] {
        run_ok(cmd, &cfg, &[]);
    }
    for file in ["cells.csv", "aggregate.csv", "cells.jsonl"] {
        assert_eq!(
            std::fs::read(out.join("attack").join(file)).unwrap(),
            std::fs::read(out.join("mitigation/baseline").join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn a_manifest_replays_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = write_config(dir.path(), "cfg.json", &small_config(&out));
    for cmd in ["generate", "train", "attack"] {
        run_ok(cmd, &cfg, &["--jobs", "2"]);
    }
    let first = std::fs::read(out.join("attack/aggregate.csv")).unwrap();
    let manifest = dir.path().join("attack_manifest.json");
    std::fs::copy(out.join("manifests/attack.json"), &manifest).unwrap();
    std::fs::remove_dir_all(&out).unwrap();
    for cmd in ["generate", "train", "attack"] {
        run_ok(cmd, &manifest, &[]);
    }
    assert_eq!(std::fs::read(out.join("attack/aggregate.csv")).unwrap(), first);
}
