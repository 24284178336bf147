use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::registry::{TaskRecord, TaskRegistry, TrainingSummary};
use crate::datagen::StandardScaler;
use crate::error::{Error, Result};
use crate::mask::TaskMask;
use crate::nn::{fit, trainer, AdamConfig, Architecture, EffectiveWeights, FitConfig, ParameterStore, SequenceSet, Tensor2};
use crate::parallel::Execution;
use crate::pruning::{importance_scores_gru, prune, validate_alpha};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpsConfig {
    pub training_epochs: usize,
    pub retraining_epochs: usize,
    pub prune_iterations: usize,
    pub alpha: f64,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Redraw free entries before a new task instead of reusing their values.
    #[serde(default)]
    pub reinit_free: bool,
    /// Stop pruning early once the retrained loss (scaled MSE) is at or
    /// below this value.
    #[serde(default)]
    pub acceptable_loss: Option<f64>,
    /// Score on at most this many training paths.
    #[serde(default)]
    pub score_paths: Option<usize>,
}

impl Default for CpsConfig {
    fn default() -> Self {
        Self {
            training_epochs: 1000,
            retraining_epochs: 200,
            prune_iterations: 1,
            alpha: 0.95,
            batch_size: 128,
            adam: AdamConfig::default(),
            reinit_free: false,
            acceptable_loss: None,
            score_paths: None,
        }
    }
}

impl CpsConfig {
    pub fn validate(&self) -> Result<()> {
        validate_alpha(self.alpha)?;
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        if self.score_paths == Some(0) {
            return Err(Error::config("score path cap must be positive"));
        }
        Ok(())
    }

    fn fit_config(&self, epochs: usize) -> FitConfig {
        FitConfig {
            epochs,
            batch_size: self.batch_size,
            adam: self.adam,
        }
    }
}

/// Scaled training data for one task together with its scalers.
#[derive(Debug, Clone)]
pub struct TaskData {
    pub task_id: String,
    pub train: SequenceSet,
    pub input_scaler: StandardScaler,
    pub output_scaler: StandardScaler,
}

/// A finalized task's mask and scalers.
#[derive(Debug, Clone, Copy)]
pub struct Subnetwork<'a> {
    pub mask: &'a TaskMask,
    pub input_scaler: &'a StandardScaler,
    pub output_scaler: &'a StandardScaler,
}

/// One shared GRU holding every learned task.
#[derive(Debug, Clone, PartialEq)]
pub struct CpsModel {
    pub(crate) params: ParameterStore,
    pub(crate) registry: TaskRegistry,
    pub(crate) seed: u64,
}

impl CpsModel {
    pub fn new<R: Rng + ?Sized>(arch: Architecture, seed: u64, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let params = ParameterStore::init_uniform(arch, rng);
        Ok(Self::from_parts(params, TaskRegistry::new(arch.param_count()), seed))
    }

    pub fn from_parts(params: ParameterStore, registry: TaskRegistry, seed: u64) -> Self {
        Self { params, registry, seed }
    }

    pub fn arch(&self) -> Architecture {
        self.params.arch()
    }

    pub fn params(&self) -> &ParameterStore {
        &self.params
    }

    pub fn registry(&self) -> &TaskRegistry {
        &self.registry
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Train, prune and retrain a subnetwork for a new task, then freeze it.
    pub fn train_task<R: Rng + ?Sized>(
        &mut self,
        data: &TaskData,
        config: &CpsConfig,
        rng: &mut R,
        exec: Execution,
    ) -> Result<&TaskRecord> {
        config.validate()?;
        if self.registry.contains(&data.task_id) {
            return Err(Error::DuplicateTask(data.task_id.clone()));
        }
        if data.train.is_empty() {
            return Err(Error::Empty(format!("task {} has no training paths", data.task_id)));
        }
        let started = Instant::now();
        let n = self.params.len();
        let free = self.registry.free();
        let free_at_start = free.count_ones();
        if free_at_start == 0 {
            return Err(Error::Saturated {
                task: data.task_id.clone(),
                reason: format!("all {n} connections belong to earlier tasks"),
            });
        }
        if config.reinit_free && !self.registry.is_empty() {
            self.params.reinit_selected(&free, rng);
        }

        let all = TaskMask::full(n);
        let report = fit(
            &mut self.params,
            &all,
            &free,
            &data.train,
            &config.fit_config(config.training_epochs),
            rng,
            exec,
        )?;
        let initial_loss = report.final_loss().unwrap_or(f64::NAN);
        log::info!(
            "task {}: initial phase done, loss {initial_loss:.4e}, {free_at_start}/{n} free",
            data.task_id
        );

        let score_set = match config.score_paths {
            Some(cap) if cap < data.train.len() => &data.train.inputs[..cap],
            _ => &data.train.inputs[..],
        };
        let mut mask = all;
        let mut kept_per_iteration = Vec::new();
        let mut retrain_loss = Vec::new();
        for it in 0..config.prune_iterations {
            let scores = importance_scores_gru(&self.params, &mask, score_set, exec)?;
            mask = prune(&self.params, &mask, &scores, config.alpha)?;
            kept_per_iteration.push(mask.count_ones());
            let trainable = free.intersection(&mask)?;
            let report = fit(
                &mut self.params,
                &mask,
                &trainable,
                &data.train,
                &config.fit_config(config.retraining_epochs),
                rng,
                exec,
            )?;
            let loss = match report.final_loss() {
                Some(l) => l,
                None => trainer::evaluate_loss(&self.params, &mask, &data.train, exec)?,
            };
            retrain_loss.push(loss);
            log::info!(
                "task {}: pruning iteration {it} keeps {}/{n}, loss {loss:.4e}",
                data.task_id,
                mask.count_ones()
            );
            if config.acceptable_loss.is_some_and(|bound| loss <= bound) {
                break;
            }
        }

        let record = TaskRecord {
            task_id: data.task_id.clone(),
            mask,
            input_scaler: data.input_scaler.clone(),
            output_scaler: data.output_scaler.clone(),
            summary: Some(TrainingSummary {
                train_paths: data.train.len(),
                free_at_start,
                initial_loss,
                kept_per_iteration,
                retrain_loss,
                seconds: started.elapsed().as_secs_f64(),
            }),
        };
        self.registry.register(record)?;
        Ok(self.registry.records().last().expect("just registered"))
    }

    pub fn select_subnetwork(&self, task_id: &str) -> Result<Subnetwork<'_>> {
        let r = self.registry.get(task_id)?;
        Ok(Subnetwork {
            mask: &r.mask,
            input_scaler: &r.input_scaler,
            output_scaler: &r.output_scaler,
        })
    }

    /// Physical stresses for physical strain paths using one task's subnetwork.
    pub fn predict_many(&self, task_id: &str, strains: &[Tensor2], exec: Execution) -> Result<Vec<Tensor2>> {
        let sub = self.select_subnetwork(task_id)?;
        let arch = self.arch();
        for s in strains {
            if s.cols() != arch.input_size || s.rows() == 0 {
                return Err(Error::shape(format!(
                    "strain path must be T x {} with T >= 1, got {:?}",
                    arch.input_size,
                    s.shape()
                )));
            }
        }
        let eff = EffectiveWeights::new(&self.params, sub.mask)?;
        let scaled: Vec<Tensor2> = strains.iter().map(|s| sub.input_scaler.transform(s)).collect();
        let preds = trainer::predict_many(&eff, &scaled, exec)?;
        Ok(preds.iter().map(|p| sub.output_scaler.inverse(p)).collect())
    }

    pub fn predict(&self, task_id: &str, strain: &Tensor2) -> Result<Tensor2> {
        Ok(self
            .predict_many(task_id, std::slice::from_ref(strain), Execution::Sequential)?
            .remove(0))
    }
}
