use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::json;

use cddm::cps::{load_checkpoint, save_checkpoint};
use cddm::datagen::{generate_tasks, read_datasets, write_datasets, PathDataset};
use cddm::experiment::{build_report, evaluate as evaluate_task, run_all, ExperimentConfig, Mode, RunResult};
use cddm::metrics::{subnet_report, task_distance_matrix};
use cddm::parallel::Execution;

fn write_config(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    fs::write(dir.join("config.toml"), cfg.to_toml_string()?)?;
    Ok(())
}

pub fn generate(cfg: &ExperimentConfig, out: &Path, exec: Execution) -> Result<()> {
    cfg.data.validate()?;
    let datasets = generate_tasks(&cfg.tasks, &cfg.data, exec)?;
    let files = write_datasets(out, &cfg.data, &datasets)?;
    write_config(cfg, out)?;
    log::info!("wrote {} files to {}", files.len(), out.display());
    Ok(())
}

fn load_data(dir: &Path) -> Result<Vec<PathDataset>> {
    let (_, datasets) = read_datasets(dir).with_context(|| format!("loading datasets from {}", dir.display()))?;
    Ok(datasets)
}

pub fn run_dir_name(r: &RunResult) -> String {
    let mode = match r.mode {
        Mode::Cddm => "cddm",
        Mode::Standard => "standard",
    };
    let a = r.config.architecture;
    format!(
        "{mode}_o{}_l{}_h{}_b{}_s{}",
        r.ordering, a.num_layers, a.hidden_size, r.budget, r.seed
    )
}

pub fn train(cfg: &ExperimentConfig, data: &Path, out: &Path, exec: Execution) -> Result<()> {
    cfg.validate()?;
    let datasets = load_data(data)?;
    for id in cfg.task_order()? {
        if !datasets.iter().any(|d| d.task_id == id) {
            bail!("dataset in {} has no task `{id}`", data.display());
        }
    }
    fs::create_dir_all(out)?;
    write_config(cfg, out)?;
    let runs = run_all(cfg, &datasets, exec).context("training failed")?;
    for (models, result) in runs {
        let dir = out.join(run_dir_name(&result));
        fs::create_dir_all(&dir)?;
        match result.mode {
            Mode::Cddm => save_checkpoint(&models[0], Some(&cfg.training), &dir.join("checkpoint"))?,
            Mode::Standard => {
                for (m, t) in models.iter().zip(&result.tasks) {
                    save_checkpoint(m, Some(&cfg.training), &dir.join(format!("checkpoint_{}", t.task_id)))?;
                }
            }
        }
        fs::write(dir.join("result.json"), serde_json::to_string_pretty(&result)?)?;
        write_config(cfg, &dir)?;
        for t in &result.tasks {
            log::info!("{}: task {} error {:.3}%", dir.file_name().unwrap().to_string_lossy(), t.task_id, t.test_error);
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    checkpoints: &[PathBuf],
    data: &Path,
    out: &Path,
    only: &[String],
    test_split: bool,
    predictions: bool,
    exec: Execution,
) -> Result<()> {
    let datasets = load_data(data)?;
    fs::create_dir_all(out)?;
    let mut errors = BTreeMap::new();
    let mut subnets = BTreeMap::new();
    let mut seen = Vec::new();
    for ck in checkpoints {
        let model = load_checkpoint(ck)?.model;
        let reg = model.registry();
        if !reg.is_empty() {
            subnets.insert(ck.display().to_string(), subnet_report(&reg.masks())?);
        }
        for id in reg.task_ids() {
            if !only.is_empty() && !only.iter().any(|t| t == id) {
                continue;
            }
            let d = datasets
                .iter()
                .find(|d| d.task_id == id)
                .with_context(|| format!("checkpoint task `{id}` is missing from {}", data.display()))?;
            let paths = if test_split { &d.split.test } else { &d.split.train };
            if paths.is_empty() {
                bail!("task `{id}` has no {} paths", if test_split { "test" } else { "train" });
            }
            let eval = evaluate_task(&model, d, paths, exec)?;
            let mut w = csv::Writer::from_path(out.join(format!("errors_{id}.csv")))?;
            w.write_record(["path_id", "error_percent", "guarded_components"])?;
            for (p, e) in eval.paths.iter().zip(&eval.per_path) {
                w.write_record([p.to_string(), format!("{:.16e}", e.percent), e.guarded.to_string()])?;
            }
            w.flush()?;
            if predictions {
                let mut w = csv::Writer::from_path(out.join(format!("predictions_{id}.csv")))?;
                w.write_record(["path_id", "step", "sig11", "sig22", "sig12", "true11", "true22", "true12"])?;
                for (p, pred) in eval.paths.iter().zip(&eval.predictions) {
                    for t in 0..pred.rows() {
                        let mut rec = vec![p.to_string(), t.to_string()];
                        rec.extend(pred.row(t).iter().chain(d.stresses[*p].row(t)).map(|v| format!("{v:.16e}")));
                        w.write_record(&rec)?;
                    }
                }
                w.flush()?;
            }
            errors.insert(id.to_string(), json!({ "error_percent": eval.error, "paths": paths.len(), "guarded_components": eval.guarded() }));
            seen.push(id.to_string());
        }
    }
    for t in only {
        if !seen.contains(t) {
            bail!("no checkpoint holds task `{t}`");
        }
    }
    let distances = task_distance_matrix(&datasets)?;
    let summary = json!({
        "split": if test_split { "test" } else { "train" },
        "errors": errors,
        "subnetworks": subnets,
        "distances": distances,
    });
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}

fn collect_results(p: &Path, into: &mut Vec<PathBuf>) -> Result<()> {
    if p.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(p)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
        entries.sort();
        for e in entries {
            if e.is_dir() || e.file_name().is_some_and(|n| n == "result.json") {
                collect_results(&e, into)?;
            }
        }
    } else {
        into.push(p.to_path_buf());
    }
    Ok(())
}

pub fn report(inputs: &[PathBuf], out: &Path) -> Result<()> {
    let mut files = Vec::new();
    for p in inputs {
        collect_results(p, &mut files)?;
    }
    if files.is_empty() {
        bail!("no result.json files found");
    }
    let results = files
        .iter()
        .map(|f| -> Result<RunResult> {
            let text = fs::read_to_string(f).with_context(|| format!("reading {}", f.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", f.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(out)?;
    let report = build_report(&results);
    for g in &report.grids {
        g.write_csv(&out.join(format!("{}.csv", g.file_stem())))?;
    }
    report.write_architecture_csv(&out.join("architectures.csv"))?;
    report.write_occupancy_csv(&out.join("occupancy.csv"))?;
    fs::write(out.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    log::info!("{} runs summarized into {}", results.len(), out.display());
    Ok(())
}
