use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Mode};
use crate::cps::{CpsConfig, CpsModel, TaskData};
use crate::datagen::{PathDataset, StandardScaler};
use crate::error::{Error, Result};
use crate::metrics::{path_error, subnet_report, test_error, PathError, SubnetReport};
use crate::nn::Tensor2;
use crate::parallel::Execution;

/// Scaled training data for `budget` paths, with scalers fitted on exactly
/// those paths.
pub fn prepare_task(d: &PathDataset, budget: usize, seed: u64) -> Result<TaskData> {
    let idx = d.budget_paths(budget, seed)?;
    let input_scaler = StandardScaler::fit(idx.iter().map(|&i| &d.strains[i]))?;
    let output_scaler = StandardScaler::fit(idx.iter().map(|&i| &d.stresses[i]))?;
    Ok(TaskData {
        task_id: d.task_id.clone(),
        train: d.scaled(&idx, &input_scaler, &output_scaler),
        input_scaler,
        output_scaler,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub paths: Vec<usize>,
    pub predictions: Vec<Tensor2>,
    pub per_path: Vec<PathError>,
    pub error: f64,
}

impl Evaluation {
    pub fn guarded(&self) -> usize {
        self.per_path.iter().map(|e| e.guarded).sum()
    }
}

/// Error of `task_id`'s subnetwork on the given paths of `d`, in physical units.
pub fn evaluate(model: &CpsModel, d: &PathDataset, paths: &[usize], exec: Execution) -> Result<Evaluation> {
    let strains: Vec<Tensor2> = paths.iter().map(|&i| d.strains[i].clone()).collect();
    let predictions = model.predict_many(&d.task_id, &strains, exec)?;
    let per_path = predictions
        .iter()
        .zip(paths)
        .map(|(p, &i)| path_error(p, &d.stresses[i]))
        .collect::<Result<Vec<_>>>()?;
    let percents: Vec<f64> = per_path.iter().map(|e| e.percent).collect();
    Ok(Evaluation {
        paths: paths.to_vec(),
        predictions,
        error: test_error(&percents)?,
        per_path,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task_id: String,
    pub position: usize,
    pub train_paths: usize,
    /// Test error at the end of the run, in percent.
    pub test_error: f64,
    /// Test error right after this task was finalized.
    pub error_at_finalization: f64,
    pub guarded_components: usize,
    pub active_connections: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config: ExperimentConfig,
    pub mode: Mode,
    pub ordering: usize,
    pub order: Vec<String>,
    /// Budget of every task after the first.
    pub budget: usize,
    pub seed: u64,
    pub tasks: Vec<TaskResult>,
    pub subnet: Option<SubnetReport>,
    pub wall_clock_seconds: f64,
}

impl RunResult {
    /// The run with every timing field zeroed; what remains is a pure
    /// function of the configuration.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        r.wall_clock_seconds = 0.0;
        for t in &mut r.tasks {
            t.seconds = 0.0;
        }
        r
    }

    pub fn task(&self, id: &str) -> Option<&TaskResult> {
        self.tasks.iter().find(|t| t.task_id == id)
    }
}

pub fn find_dataset<'a>(datasets: &'a [PathDataset], id: &str) -> Result<&'a PathDataset> {
    datasets
        .iter()
        .find(|d| d.task_id == id)
        .ok_or_else(|| Error::UnknownTask(id.to_string()))
}

fn task_stream(task_id: &str) -> u64 {
    task_id
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

/// Sequential training state after the first task of an ordering.
///
/// [`CddmSession::finish`] clones the state, so one session serves every
/// budget of the later tasks.
#[derive(Debug, Clone)]
pub struct CddmSession<'a> {
    config: &'a ExperimentConfig,
    datasets: Vec<&'a PathDataset>,
    seed: u64,
    model: CpsModel,
    rng: ChaCha8Rng,
    tasks: Vec<TaskResult>,
    seconds: f64,
}

impl<'a> CddmSession<'a> {
    pub fn start(config: &'a ExperimentConfig, datasets: &'a [PathDataset], seed: u64, exec: Execution) -> Result<Self> {
        config.validate()?;
        let datasets = config
            .task_order()?
            .iter()
            .map(|id| find_dataset(datasets, id))
            .collect::<Result<Vec<_>>>()?;
        let started = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = CpsModel::new(config.architecture.build(), seed, &mut rng)?;
        let mut s = Self {
            config,
            datasets,
            seed,
            model,
            rng,
            tasks: Vec::new(),
            seconds: 0.0,
        };
        s.seconds = started.elapsed().as_secs_f64();
        s.learn(0, config.first_budget, exec)?;
        Ok(s)
    }

    fn learn(&mut self, position: usize, budget: usize, exec: Execution) -> Result<()> {
        let d = self.datasets[position];
        let started = Instant::now();
        let data = prepare_task(d, budget, self.seed)?;
        let record = self.model.train_task(&data, &self.config.training, &mut self.rng, exec)?;
        let active = record.mask.count_ones();
        let eval = evaluate(&self.model, d, &d.split.test, exec)?;
        self.tasks.push(TaskResult {
            task_id: d.task_id.clone(),
            position,
            train_paths: budget,
            test_error: eval.error,
            error_at_finalization: eval.error,
            guarded_components: eval.guarded(),
            active_connections: active,
            seconds: started.elapsed().as_secs_f64(),
        });
        self.seconds += started.elapsed().as_secs_f64();
        Ok(())
    }

    pub fn model(&self) -> &CpsModel {
        &self.model
    }

    /// Tasks learned so far, in order.
    pub fn tasks(&self) -> &[TaskResult] {
        &self.tasks
    }

    /// Dataset of the next task, if any remain.
    pub fn next_task(&self) -> Option<&'a PathDataset> {
        self.datasets.get(self.tasks.len()).copied()
    }

    /// Learn the next task of the ordering on `budget` paths.
    pub fn learn_next(&mut self, budget: usize, exec: Execution) -> Result<&TaskResult> {
        let position = self.tasks.len();
        if position >= self.datasets.len() {
            return Err(Error::config("every task of the ordering is already learned"));
        }
        self.learn(position, budget, exec)?;
        Ok(self.tasks.last().expect("just pushed"))
    }

    /// Learn the remaining tasks on `budget` paths each, leaving `self` as is.
    pub fn finish(&self, budget: usize, exec: Execution) -> Result<(CpsModel, RunResult)> {
        let mut s = self.clone();
        while s.next_task().is_some() {
            s.learn_next(budget, exec)?;
        }
        s.into_result(budget, exec)
    }

    /// Re-evaluate every learned task on the final model.
    pub fn into_result(mut self, budget: usize, exec: Execution) -> Result<(CpsModel, RunResult)> {
        let started = Instant::now();
        for t in &mut self.tasks {
            let d = self.datasets[t.position];
            t.test_error = evaluate(&self.model, d, &d.split.test, exec)?.error;
        }
        let subnet = subnet_report(&self.model.registry().masks())?;
        let result = RunResult {
            config: self.config.clone(),
            mode: Mode::Cddm,
            ordering: self.config.ordering,
            order: self.datasets.iter().map(|d| d.task_id.clone()).collect(),
            budget,
            seed: self.seed,
            tasks: self.tasks,
            subnet: Some(subnet),
            wall_clock_seconds: self.seconds + started.elapsed().as_secs_f64(),
        };
        Ok((self.model, result))
    }
}

pub fn run_cddm(
    config: &ExperimentConfig,
    datasets: &[PathDataset],
    budget: usize,
    seed: u64,
    exec: Execution,
) -> Result<(CpsModel, RunResult)> {
    CddmSession::start(config, datasets, seed, exec)?.finish(budget, exec)
}

/// A fresh network trained on one task alone. Depends only on the task,
/// budget and seed, never on the ordering.
pub fn run_standard_task(
    config: &ExperimentConfig,
    d: &PathDataset,
    budget: usize,
    seed: u64,
    exec: Execution,
) -> Result<(CpsModel, TaskResult)> {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(task_stream(&d.task_id));
    let mut model = CpsModel::new(config.architecture.build(), seed, &mut rng)?;
    let training = CpsConfig {
        training_epochs: config.standard_epochs(),
        prune_iterations: 0,
        ..config.training
    };
    let data = prepare_task(d, budget, seed)?;
    model.train_task(&data, &training, &mut rng, exec)?;
    let eval = evaluate(&model, d, &d.split.test, exec)?;
    let result = TaskResult {
        task_id: d.task_id.clone(),
        position: 0,
        train_paths: budget,
        test_error: eval.error,
        error_at_finalization: eval.error,
        guarded_components: eval.guarded(),
        active_connections: model.params().len(),
        seconds: started.elapsed().as_secs_f64(),
    };
    Ok((model, result))
}

pub fn run_standard(
    config: &ExperimentConfig,
    datasets: &[PathDataset],
    budget: usize,
    seed: u64,
    exec: Execution,
) -> Result<(Vec<CpsModel>, RunResult)> {
    config.validate()?;
    let started = Instant::now();
    let order = config.task_order()?;
    let mut models = Vec::new();
    let mut tasks = Vec::new();
    for (position, id) in order.iter().enumerate() {
        let b = if position == 0 { config.first_budget } else { budget };
        let (m, mut t) = run_standard_task(config, find_dataset(datasets, id)?, b, seed, exec)?;
        t.position = position;
        models.push(m);
        tasks.push(t);
    }
    let result = RunResult {
        config: config.clone(),
        mode: Mode::Standard,
        ordering: config.ordering,
        order,
        budget,
        seed,
        tasks,
        subnet: None,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    Ok((models, result))
}

/// Every (budget, seed) run of the configured mode.
pub fn run_all(config: &ExperimentConfig, datasets: &[PathDataset], exec: Execution) -> Result<Vec<(Vec<CpsModel>, RunResult)>> {
    let mut out = Vec::new();
    for &seed in &config.seeds {
        match config.mode {
            Mode::Cddm => {
                let session = CddmSession::start(config, datasets, seed, exec)?;
                for &b in &config.budgets {
                    let (m, r) = session.finish(b, exec)?;
                    out.push((vec![m], r));
                }
            }
            Mode::Standard => {
                for &b in &config.budgets {
                    out.push(run_standard(config, datasets, b, seed, exec)?);
                }
            }
        }
    }
    Ok(out)
}
