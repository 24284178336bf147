use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ArchitectureConfig, Mode};
use super::runner::RunResult;
use crate::error::Result;

/// Seed-averaged errors for one (task, budget) pair. `None` marks a missing run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub cddm: Option<f64>,
    pub standard: Option<f64>,
    /// `cddm - standard` when both exist.
    pub delta: Option<f64>,
}

/// Budgets across, tasks down, for one ordering and architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorGrid {
    pub ordering: usize,
    pub architecture: ArchitectureConfig,
    pub tasks: Vec<String>,
    pub budgets: Vec<usize>,
    /// `cells[task][budget]`.
    pub cells: Vec<Vec<GridCell>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyRow {
    pub ordering: usize,
    pub architecture: ArchitectureConfig,
    pub budget: usize,
    pub seed: u64,
    pub tasks: usize,
    pub task_id: String,
    pub occupied_fraction: f64,
    pub shared_fraction_of_total: f64,
    pub shared_fraction_of_occupied: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub grids: Vec<ErrorGrid>,
    pub occupancy: Vec<OccupancyRow>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

type GridKey = (usize, usize, usize);

pub fn build_report(results: &[RunResult]) -> Report {
    // (ordering, layers, hidden) -> (task, budget, mode) -> errors over seeds
    let mut groups: BTreeMap<GridKey, BTreeMap<(String, usize, Mode), Vec<f64>>> = BTreeMap::new();
    let mut orders: BTreeMap<GridKey, Vec<String>> = BTreeMap::new();
    let mut budgets: BTreeMap<GridKey, Vec<usize>> = BTreeMap::new();
    let mut occupancy = Vec::new();
    for r in results {
        let a = r.config.architecture;
        let key = (r.ordering, a.num_layers, a.hidden_size);
        orders.entry(key).or_insert_with(|| r.order.clone());
        let b = budgets.entry(key).or_default();
        if !b.contains(&r.budget) {
            b.push(r.budget);
        }
        let g = groups.entry(key).or_default();
        for t in &r.tasks {
            g.entry((t.task_id.clone(), r.budget, r.mode)).or_default().push(t.test_error);
        }
        if let Some(s) = &r.subnet {
            for step in &s.steps {
                occupancy.push(OccupancyRow {
                    ordering: r.ordering,
                    architecture: a,
                    budget: r.budget,
                    seed: r.seed,
                    tasks: step.tasks,
                    task_id: step.task_id.clone(),
                    occupied_fraction: step.occupied_fraction,
                    shared_fraction_of_total: step.shared_fraction_of_total,
                    shared_fraction_of_occupied: step.shared_fraction_of_occupied,
                });
            }
        }
    }
    let grids = groups
        .into_iter()
        .map(|(key, g)| {
            let tasks = orders.remove(&key).unwrap_or_default();
            let mut bs = budgets.remove(&key).unwrap_or_default();
            bs.sort_unstable_by(|a, b| b.cmp(a));
            let cells = tasks
                .iter()
                .map(|t| {
                    bs.iter()
                        .map(|&b| {
                            let get = |m| g.get(&(t.clone(), b, m)).and_then(|v| mean(v));
                            let (cddm, standard) = (get(Mode::Cddm), get(Mode::Standard));
                            GridCell {
                                cddm,
                                standard,
                                delta: cddm.zip(standard).map(|(c, s)| c - s),
                            }
                        })
                        .collect()
                })
                .collect();
            ErrorGrid {
                ordering: key.0,
                architecture: ArchitectureConfig {
                    num_layers: key.1,
                    hidden_size: key.2,
                },
                tasks,
                budgets: bs,
                cells,
            }
        })
        .collect();
    Report { grids, occupancy }
}

fn cell_text(v: Option<f64>) -> String {
    v.map(crate::datagen::fmt_f64).unwrap_or_default()
}

impl ErrorGrid {
    pub fn file_stem(&self) -> String {
        format!(
            "grid_ordering{}_l{}_h{}",
            self.ordering, self.architecture.num_layers, self.architecture.hidden_size
        )
    }

    /// One row per task; empty fields mark absent cells.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["task".to_string()];
        for b in &self.budgets {
            header.extend(["cddm", "standard", "delta"].map(|m| format!("{m}_{b}")));
        }
        w.write_record(&header)?;
        for (t, row) in self.tasks.iter().zip(&self.cells) {
            let mut rec = vec![t.clone()];
            for c in row {
                rec.extend([cell_text(c.cddm), cell_text(c.standard), cell_text(c.delta)]);
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

impl Report {
    /// Long-format table of every grid cell, for architecture comparisons.
    pub fn write_architecture_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["ordering", "num_layers", "hidden_size", "task", "budget", "cddm", "standard", "delta"])?;
        for g in &self.grids {
            for (t, row) in g.tasks.iter().zip(&g.cells) {
                for (b, c) in g.budgets.iter().zip(row) {
                    w.write_record([
                        g.ordering.to_string(),
                        g.architecture.num_layers.to_string(),
                        g.architecture.hidden_size.to_string(),
                        t.clone(),
                        b.to_string(),
                        cell_text(c.cddm),
                        cell_text(c.standard),
                        cell_text(c.delta),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_occupancy_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for row in &self.occupancy {
            w.serialize(row_flat(row))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Serialize)]
struct FlatOccupancy<'a> {
    ordering: usize,
    num_layers: usize,
    hidden_size: usize,
    budget: usize,
    seed: u64,
    tasks: usize,
    task_id: &'a str,
    occupied_fraction: f64,
    shared_fraction_of_total: f64,
    shared_fraction_of_occupied: f64,
}

fn row_flat(r: &OccupancyRow) -> FlatOccupancy<'_> {
    FlatOccupancy {
        ordering: r.ordering,
        num_layers: r.architecture.num_layers,
        hidden_size: r.architecture.hidden_size,
        budget: r.budget,
        seed: r.seed,
        tasks: r.tasks,
        task_id: &r.task_id,
        occupied_fraction: r.occupied_fraction,
        shared_fraction_of_total: r.shared_fraction_of_total,
        shared_fraction_of_occupied: r.shared_fraction_of_occupied,
    }
}
