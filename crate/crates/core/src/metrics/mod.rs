//! Error measures, subnetwork occupancy and task distances.

use serde::{Deserialize, Serialize};

use crate::datagen::PathDataset;
use crate::error::{Error, Result};
use crate::mask::TaskMask;
use crate::nn::Tensor2;

/// Denominator used when a truth component has zero norm.
pub const NORM_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathError {
    pub percent: f64,
    /// Components whose truth norm fell below [`NORM_GUARD`].
    pub guarded: usize,
}

/// Mean over components of `‖pred_c − truth_c‖ / ‖truth_c‖`, in percent.
pub fn path_error(pred: &Tensor2, truth: &Tensor2) -> Result<PathError> {
    if pred.shape() != truth.shape() {
        return Err(Error::shape(format!(
            "prediction {:?} vs truth {:?}",
            pred.shape(),
            truth.shape()
        )));
    }
    let cols = truth.cols();
    if cols == 0 || truth.rows() == 0 {
        return Err(Error::Empty("path has no entries".into()));
    }
    let mut diff = vec![0.0; cols];
    let mut norm = vec![0.0; cols];
    for r in 0..truth.rows() {
        for c in 0..cols {
            let (p, t) = (pred.get(r, c), truth.get(r, c));
            diff[c] += (p - t) * (p - t);
            norm[c] += t * t;
        }
    }
    let mut guarded = 0;
    let mut sum = 0.0;
    for c in 0..cols {
        let mut den = norm[c].sqrt();
        if den < NORM_GUARD {
            den = NORM_GUARD;
            guarded += 1;
        }
        sum += diff[c].sqrt() / den;
    }
    Ok(PathError {
        percent: 100.0 * sum / cols as f64,
        guarded,
    })
}

pub fn test_error(per_path: &[f64]) -> Result<f64> {
    if per_path.is_empty() {
        return Err(Error::Empty("no per-path errors to average".into()));
    }
    Ok(per_path.iter().sum::<f64>() / per_path.len() as f64)
}

/// Occupancy after the first `tasks` masks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyStep {
    pub tasks: usize,
    pub task_id: String,
    pub task_active: usize,
    pub occupied: usize,
    /// Parameters used by at least two of the first `tasks` masks.
    pub shared: usize,
    pub occupied_fraction: f64,
    pub shared_fraction_of_total: f64,
    pub shared_fraction_of_occupied: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubnetReport {
    pub total: usize,
    pub steps: Vec<OccupancyStep>,
}

impl SubnetReport {
    pub fn final_step(&self) -> Option<&OccupancyStep> {
        self.steps.last()
    }
}

/// Exact bit counts over masks given in training order.
pub fn subnet_report(masks: &[(String, &TaskMask)]) -> Result<SubnetReport> {
    let total = masks
        .first()
        .ok_or_else(|| Error::Empty("no finalized tasks".into()))?
        .1
        .len();
    let mut uses = vec![0u32; total];
    let mut steps = Vec::with_capacity(masks.len());
    for (k, (id, m)) in masks.iter().enumerate() {
        if m.len() != total {
            return Err(Error::shape("masks disagree on length"));
        }
        for (u, b) in uses.iter_mut().zip(m.iter()) {
            *u += u32::from(b);
        }
        let occupied = uses.iter().filter(|&&u| u >= 1).count();
        let shared = uses.iter().filter(|&&u| u >= 2).count();
        let frac = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        steps.push(OccupancyStep {
            tasks: k + 1,
            task_id: id.clone(),
            task_active: m.count_ones(),
            occupied,
            shared,
            occupied_fraction: frac(occupied, total),
            shared_fraction_of_total: frac(shared, total),
            shared_fraction_of_occupied: frac(shared, occupied),
        });
    }
    Ok(SubnetReport { total, steps })
}

/// Pairwise distances between task stress sets, on scaled data.
///
/// `relative[i][j]` treats task `i` as truth and `j` as prediction, so it is
/// not symmetric; `mse[i][j]` is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub tasks: Vec<String>,
    pub relative: Vec<Vec<f64>>,
    pub mse: Vec<Vec<f64>>,
}

/// Each task's training stresses are scaled with its own output scaler.
pub fn task_distance_matrix(datasets: &[PathDataset]) -> Result<DistanceMatrix> {
    let first = datasets.first().ok_or_else(|| Error::Empty("no datasets".into()))?;
    for d in datasets {
        if d.split != first.split || d.strains.len() != first.strains.len() {
            return Err(Error::config(format!("task {} does not share the path set", d.task_id)));
        }
        if d.strains.iter().zip(&first.strains).any(|(a, b)| !a.bit_eq(b)) {
            return Err(Error::config(format!("task {} uses different strain paths", d.task_id)));
        }
    }
    let scaled: Vec<Vec<Tensor2>> = datasets
        .iter()
        .map(|d| d.split.train.iter().map(|&i| d.output_scaler.transform(&d.stresses[i])).collect())
        .collect();
    let n = datasets.len();
    let mut relative = vec![vec![0.0; n]; n];
    let mut mse = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut rel = Vec::with_capacity(scaled[i].len());
            let mut sq = 0.0;
            let mut count = 0usize;
            for (t, p) in scaled[i].iter().zip(&scaled[j]) {
                rel.push(path_error(p, t)?.percent);
                sq += t.data().iter().zip(p.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                count += t.data().len();
            }
            relative[i][j] = test_error(&rel)?;
            mse[i][j] = sq / count as f64;
        }
    }
    Ok(DistanceMatrix {
        tasks: datasets.iter().map(|d| d.task_id.clone()).collect(),
        relative,
        mse,
    })
}
