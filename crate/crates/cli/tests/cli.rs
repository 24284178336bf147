use std::fs;
use std::path::Path;
use std::process::Command;

use cddm::datagen::GpConfig;
use cddm::experiment::{ExperimentConfig, Profile, RunResult};

fn cddm(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_cddm"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = cddm(args);
    assert!(
        out.status.success(),
        "cddm {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn tiny_config(dir: &Path) -> String {
    let mut cfg = ExperimentConfig::profile(Profile::Desk);
    cfg.data.gp = GpConfig {
        steps: 20,
        ..GpConfig::default()
    };
    cfg.data.n_paths = 30;
    cfg.data.n_test = 10;
    cfg.first_budget = 12;
    cfg.budgets = vec![12, 6];
    cfg.architecture.hidden_size = 6;
    cfg.training.training_epochs = 4;
    cfg.training.retraining_epochs = 2;
    cfg.training.batch_size = 8;
    let p = dir.join("tiny.toml");
    fs::write(&p, cfg.to_toml_string().unwrap()).unwrap();
    p.to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_is_byte_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    ok(&["generate", "--config", &cfg, "--seed", "3", "--out", s(&a)]);
    ok(&["generate", "--config", &cfg, "--seed", "3", "--out", s(&b)]);
    ok(&["generate", "--config", &cfg, "--seed", "4", "--out", s(&c)]);
    for t in ["A", "B", "C", "D"] {
        let name = format!("task_{t}.csv");
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap());
        assert_ne!(fs::read(a.join(&name)).unwrap(), fs::read(c.join(&name)).unwrap());
    }
    assert_eq!(fs::read(a.join("task_meta.json")).unwrap(), fs::read(b.join("task_meta.json")).unwrap());
}

#[test]
fn single_path_generation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("one");
    ok(&["generate", "--config", &cfg, "--n-paths", "1", "--out", s(&out)]);
    let text = fs::read_to_string(out.join("task_A.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 20);
    assert!(text.lines().skip(1).all(|l| l.starts_with("0,")));
}

#[test]
fn paper_profile_generates_full_sized_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("full");
    ok(&["generate", "--profile", "paper", "--out", s(&out)]);
    for t in ["A", "B", "C", "D"] {
        let text = fs::read_to_string(out.join(format!("task_{t}.csv"))).unwrap();
        assert_eq!(text.lines().count(), 1 + 1000 * 100);
    }
}

#[test]
fn train_evaluate_report_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let data = dir.path().join("data");
    let runs = dir.path().join("runs");
    ok(&["generate", "--config", &cfg, "--out", s(&data)]);
    ok(&["train", "--config", &cfg, "--data", s(&data), "--ordering", "4", "--out", s(&runs)]);
    ok(&["train", "--config", &cfg, "--data", s(&data), "--ordering", "4", "--mode", "standard", "--out", s(&runs)]);

    let cddm_run = runs.join("cddm_o4_l2_h6_b6_s0");
    let result: RunResult = serde_json::from_str(&fs::read_to_string(cddm_run.join("result.json")).unwrap()).unwrap();
    assert_eq!(result.order, ["D", "C", "B", "A"]);
    assert_eq!(result.tasks.len(), 4);
    for t in &result.tasks {
        assert_eq!(t.test_error, t.error_at_finalization, "task {} forgot", t.task_id);
    }
    let standard_run = runs.join("standard_o4_l2_h6_b6_s0");
    for t in ["A", "B", "C", "D"] {
        assert!(standard_run.join(format!("checkpoint_{t}")).join("params.bin").exists());
    }

    let ck = cddm_run.join("checkpoint");
    let (e1, e2) = (dir.path().join("eval1"), dir.path().join("eval2"));
    ok(&["evaluate", "--checkpoint", s(&ck), "--data", s(&data), "--out", s(&e1), "--predictions"]);
    ok(&["evaluate", "--checkpoint", s(&ck), "--data", s(&data), "--out", s(&e2), "--predictions"]);
    for f in ["errors_A.csv", "errors_D.csv", "summary.json", "predictions_B.csv"] {
        assert_eq!(fs::read(e1.join(f)).unwrap(), fs::read(e2.join(f)).unwrap(), "{f}");
    }
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(e1.join("summary.json")).unwrap()).unwrap();
    let err_a = summary["errors"]["A"]["error_percent"].as_f64().unwrap();
    assert_eq!(err_a, result.task("A").unwrap().test_error);
    let rows = fs::read_to_string(e1.join("errors_A.csv")).unwrap();
    let per_path: Vec<f64> = rows.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(per_path.len(), 10);
    let mean = per_path.iter().sum::<f64>() / per_path.len() as f64;
    assert!((mean - err_a).abs() <= 1e-12 * err_a);

    let missing = cddm(&["evaluate", "--checkpoint", s(&ck), "--data", s(&data), "--out", s(&e1), "--task", "Q"]);
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("Q"));

    let rep = dir.path().join("report");
    ok(&["report", "--out", s(&rep), s(&runs)]);
    let grid = fs::read_to_string(rep.join("grid_ordering4_l2_h6.csv")).unwrap();
    let lines: Vec<&str> = grid.lines().collect();
    assert_eq!(lines.len(), 1 + 4);
    assert_eq!(lines[0], "task,cddm_12,standard_12,delta_12,cddm_6,standard_6,delta_6");
    for l in &lines[1..] {
        let v: Vec<f64> = l.split(',').skip(1).map(|x| x.parse().unwrap()).collect();
        assert!((v[2] - (v[0] - v[1])).abs() < 1e-12);
        assert!((v[5] - (v[3] - v[4])).abs() < 1e-12);
    }
    assert!(rep.join("occupancy.csv").exists() && rep.join("report.json").exists());
}

#[test]
fn bad_arguments_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = cddm(&["train", "--config", &cfg, "--data", s(&dir.path().join("nowhere")), "--out", s(dir.path())]);
    assert!(!out.status.success());
    let out = cddm(&["generate", "--profile", "huge", "--out", s(dir.path())]);
    assert!(!out.status.success());
    let out = cddm(&["train", "--config", &cfg, "--data", s(dir.path()), "--ordering", "9", "--out", s(dir.path())]);
    assert!(!out.status.success());
}
