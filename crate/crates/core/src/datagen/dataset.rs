use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gp::{GpConfig, StrainPathSampler};
use super::plasticity::{integrate_path, MaterialSpec};
use super::scaler::StandardScaler;
use crate::error::{Error, Result};
use crate::nn::{SequenceSet, Tensor2};
use crate::parallel::Execution;

pub const META_FILE: &str = "task_meta.json";
const META_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub gp: GpConfig,
    pub strain_amplitude: f64,
    pub n_paths: usize,
    /// Held-out paths; capped at `n_paths - 1` so at least one path trains.
    pub n_test: usize,
    /// Seeds the strain paths; path `i` draws from stream `i`.
    pub path_seed: u64,
    pub split_seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            gp: GpConfig::default(),
            strain_amplitude: 0.02,
            n_paths: 1000,
            n_test: 200,
            path_seed: 0,
            split_seed: 1,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        self.gp.validate()?;
        if self.n_paths == 0 {
            return Err(Error::config("need at least one path"));
        }
        if !(self.strain_amplitude >= 0.0) {
            return Err(Error::config("strain amplitude must be non-negative"));
        }
        Ok(())
    }

    pub fn test_count(&self) -> usize {
        self.n_test.min(self.n_paths - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Seeded permutation: the first `n_test` entries are held out.
    pub fn seeded(n_paths: usize, n_test: usize, seed: u64) -> Self {
        let mut idx: Vec<usize> = (0..n_paths).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let train = idx.split_off(n_test.min(n_paths));
        Self { train, test: idx }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    pub material: MaterialSpec,
}

impl TaskSpec {
    pub fn new(id: impl Into<String>, material: MaterialSpec) -> Self {
        Self {
            id: id.into(),
            material,
        }
    }
}

/// Tasks A to D: three similar materials and one soft, weak outlier.
pub fn default_tasks() -> Vec<TaskSpec> {
    vec![
        TaskSpec::new("A", MaterialSpec::new(100.0, 0.3, 0.60)),
        TaskSpec::new("B", MaterialSpec::new(95.0, 0.3, 0.55)),
        TaskSpec::new("C", MaterialSpec::new(105.0, 0.3, 0.65)),
        TaskSpec::new("D", MaterialSpec::new(60.0, 0.3, 0.30)),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathDataset {
    pub task_id: String,
    pub material: MaterialSpec,
    pub strains: Vec<Tensor2>,
    pub stresses: Vec<Tensor2>,
    pub split: Split,
    /// Fitted on the full training split.
    pub input_scaler: StandardScaler,
    pub output_scaler: StandardScaler,
}

impl PathDataset {
    pub fn new(task_id: impl Into<String>, material: MaterialSpec, strains: Vec<Tensor2>, split: Split) -> Result<Self> {
        let stresses = strains
            .iter()
            .map(|s| integrate_path(s, &material))
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(task_id.into(), material, strains, stresses, split)
    }

    fn from_parts(
        task_id: String,
        material: MaterialSpec,
        strains: Vec<Tensor2>,
        stresses: Vec<Tensor2>,
        split: Split,
    ) -> Result<Self> {
        if strains.len() != stresses.len() {
            return Err(Error::shape("strain and stress path counts differ"));
        }
        for (e, s) in strains.iter().zip(&stresses) {
            if e.shape() != s.shape() || e.cols() != 3 {
                return Err(Error::shape("strain and stress paths must both be T x 3"));
            }
        }
        let mut seen = vec![false; strains.len()];
        for &i in split.train.iter().chain(&split.test) {
            if i >= strains.len() || std::mem::replace(&mut seen[i], true) {
                return Err(Error::config(format!("split index {i} is out of range or repeated")));
            }
        }
        if split.train.is_empty() {
            return Err(Error::Empty(format!("task {task_id} has no training paths")));
        }
        let input_scaler = StandardScaler::fit(split.train.iter().map(|&i| &strains[i]))?;
        let output_scaler = StandardScaler::fit(split.train.iter().map(|&i| &stresses[i]))?;
        Ok(Self {
            task_id,
            material,
            strains,
            stresses,
            split,
            input_scaler,
            output_scaler,
        })
    }

    pub fn len(&self) -> usize {
        self.strains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strains.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.strains.first().map_or(0, Tensor2::rows)
    }

    /// The first `budget` training paths of a seeded shuffle of the
    /// training split. Smaller budgets are prefixes of larger ones.
    pub fn budget_paths(&self, budget: usize, seed: u64) -> Result<Vec<usize>> {
        if budget == 0 || budget > self.split.train.len() {
            return Err(Error::config(format!(
                "budget {budget} outside 1..={} training paths of task {}",
                self.split.train.len(),
                self.task_id
            )));
        }
        let mut idx = self.split.train.clone();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        idx.truncate(budget);
        Ok(idx)
    }

    /// Scaled sequences for the given paths.
    pub fn scaled(&self, idx: &[usize], input: &StandardScaler, output: &StandardScaler) -> SequenceSet {
        SequenceSet {
            inputs: idx.iter().map(|&i| input.transform(&self.strains[i])).collect(),
            targets: idx.iter().map(|&i| output.transform(&self.stresses[i])).collect(),
        }
    }
}

/// The shared strain paths, one derived rng stream per path.
pub fn generate_strain_paths(cfg: &GenerationConfig, exec: Execution) -> Result<Vec<Tensor2>> {
    cfg.validate()?;
    let sampler = StrainPathSampler::new(cfg.gp, cfg.strain_amplitude)?;
    Ok(exec.map_range(cfg.n_paths, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.path_seed);
        rng.set_stream(i as u64);
        sampler.sample(&mut rng)
    }))
}

pub fn generate_task(task: &TaskSpec, cfg: &GenerationConfig, exec: Execution) -> Result<PathDataset> {
    Ok(generate_tasks(std::slice::from_ref(task), cfg, exec)?.remove(0))
}

/// Every task integrates the same strain paths with its own material.
pub fn generate_tasks(tasks: &[TaskSpec], cfg: &GenerationConfig, exec: Execution) -> Result<Vec<PathDataset>> {
    let strains = generate_strain_paths(cfg, exec)?;
    let split = Split::seeded(cfg.n_paths, cfg.test_count(), cfg.split_seed);
    tasks
        .iter()
        .map(|t| {
            t.material.validate()?;
            let stresses = exec
                .map(&strains, |s| integrate_path(s, &t.material))
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
            PathDataset::from_parts(t.id.clone(), t.material, strains.clone(), stresses, split.clone())
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct TaskMeta {
    task_id: String,
    csv: String,
    material: MaterialSpec,
    input_scaler: StandardScaler,
    output_scaler: StandardScaler,
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetMeta {
    format_version: u32,
    generation: GenerationConfig,
    split: Split,
    tasks: Vec<TaskMeta>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    path_id: usize,
    step: usize,
    eps11: f64,
    eps22: f64,
    eps12: f64,
    sig11: f64,
    sig22: f64,
    sig12: f64,
}

pub fn csv_name(task_id: &str) -> String {
    format!("task_{task_id}.csv")
}

/// Round-trippable with 17 significant digits.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write one CSV per task plus `task_meta.json` into `dir`.
pub fn write_datasets(dir: &Path, cfg: &GenerationConfig, datasets: &[PathDataset]) -> Result<Vec<PathBuf>> {
    let first = datasets.first().ok_or_else(|| Error::Empty("no datasets to write".into()))?;
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut tasks = Vec::new();
    for d in datasets {
        if d.split != first.split {
            return Err(Error::config("datasets written together must share a split"));
        }
        let name = csv_name(&d.task_id);
        let path = dir.join(&name);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["path_id", "step", "eps11", "eps22", "eps12", "sig11", "sig22", "sig12"])?;
        for (p, (e, s)) in d.strains.iter().zip(&d.stresses).enumerate() {
            for t in 0..e.rows() {
                let mut rec = vec![p.to_string(), t.to_string()];
                rec.extend(e.row(t).iter().chain(s.row(t)).map(|&v| fmt_f64(v)));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        written.push(path);
        tasks.push(TaskMeta {
            task_id: d.task_id.clone(),
            csv: name,
            material: d.material,
            input_scaler: d.input_scaler.clone(),
            output_scaler: d.output_scaler.clone(),
        });
    }
    let meta = DatasetMeta {
        format_version: META_VERSION,
        generation: *cfg,
        split: first.split.clone(),
        tasks,
    };
    let meta_path = dir.join(META_FILE);
    fs::write(&meta_path, serde_json::to_string_pretty(&meta)?)?;
    written.push(meta_path);
    Ok(written)
}

/// Load everything written by [`write_datasets`], in the original task order.
pub fn read_datasets(dir: &Path) -> Result<(GenerationConfig, Vec<PathDataset>)> {
    let meta: DatasetMeta = serde_json::from_str(&fs::read_to_string(dir.join(META_FILE))?)?;
    if meta.format_version != META_VERSION {
        return Err(Error::config(format!(
            "dataset format version {} is not supported (expected {META_VERSION})",
            meta.format_version
        )));
    }
    let mut out = Vec::with_capacity(meta.tasks.len());
    for t in meta.tasks {
        let mut paths: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
        let mut rdr = csv::Reader::from_path(dir.join(&t.csv))?;
        for row in rdr.deserialize() {
            let row: CsvRow = row?;
            let entry = paths.entry(row.path_id).or_default();
            if row.step != entry.0.len() / 3 {
                return Err(Error::config(format!("{}: path {} steps out of order", t.csv, row.path_id)));
            }
            entry.0.extend([row.eps11, row.eps22, row.eps12]);
            entry.1.extend([row.sig11, row.sig22, row.sig12]);
        }
        if paths.len() != meta.generation.n_paths || paths.keys().copied().ne(0..meta.generation.n_paths) {
            return Err(Error::config(format!(
                "{}: expected paths 0..{}, found {}",
                t.csv,
                meta.generation.n_paths,
                paths.len()
            )));
        }
        let mut strains = Vec::with_capacity(paths.len());
        let mut stresses = Vec::with_capacity(paths.len());
        for (_, (e, s)) in paths {
            let rows = e.len() / 3;
            strains.push(Tensor2::new(rows, 3, e)?);
            stresses.push(Tensor2::new(rows, 3, s)?);
        }
        let mut d = PathDataset::from_parts(t.task_id, t.material, strains, stresses, meta.split.clone())?;
        d.input_scaler = t.input_scaler;
        d.output_scaler = t.output_scaler;
        out.push(d);
    }
    if let Some(first) = out.first() {
        if out.iter().any(|d| d.strains != first.strains) {
            return Err(Error::config("tasks in one directory must share strain paths"));
        }
    }
    Ok((meta.generation, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GenerationConfig {
        GenerationConfig {
            gp: GpConfig {
                steps: 30,
                ..GpConfig::default()
            },
            n_paths: 12,
            n_test: 4,
            ..GenerationConfig::default()
        }
    }

    #[test]
    fn tasks_share_bit_identical_strains() {
        let ds = generate_tasks(&default_tasks(), &small(), Execution::Parallel).unwrap();
        assert_eq!(ds.len(), 4);
        for d in &ds[1..] {
            assert!(d.strains.iter().zip(&ds[0].strains).all(|(a, b)| a.bit_eq(b)));
            assert_eq!(d.split, ds[0].split);
        }
        assert_eq!(ds[0].split.test.len(), 4);
        assert_eq!(ds[0].split.train.len(), 8);
    }

    #[test]
    fn generation_ignores_thread_count() {
        let a = generate_strain_paths(&small(), Execution::Sequential).unwrap();
        let b = generate_strain_paths(&small(), Execution::Parallel).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.bit_eq(y)));
    }

    #[test]
    fn yield_stress_does_not_touch_elastic_prefix() {
        let cfg = small();
        let lo = TaskSpec::new("lo", MaterialSpec::new(100.0, 0.3, 0.3));
        let hi = TaskSpec::new("hi", MaterialSpec::new(100.0, 0.3, 0.9));
        let ds = generate_tasks(&[lo.clone(), hi], &cfg, Execution::Sequential).unwrap();
        let mut compared = 0;
        for p in 0..cfg.n_paths {
            // `ds[0]` has the lower yield stress, so it leaves elasticity first.
            for t in 0..cfg.gp.steps {
                let sig = ds[0].stresses[p].row(t);
                let full = [sig[0], sig[1], 0.3 * (sig[0] + sig[1]), sig[2], 0.0, 0.0];
                if super::super::plasticity::von_mises(&full) >= 0.3 * (1.0 - 1e-9) {
                    break;
                }
                assert_eq!(sig, ds[1].stresses[p].row(t));
                compared += 1;
            }
        }
        assert!(compared > 0);
    }

    #[test]
    fn budgets_are_nested_prefixes() {
        let d = generate_task(&default_tasks()[0], &small(), Execution::Sequential).unwrap();
        let big = d.budget_paths(8, 9).unwrap();
        let small = d.budget_paths(3, 9).unwrap();
        assert_eq!(&big[..3], &small[..]);
        assert!(big.iter().all(|i| d.split.train.contains(i)));
        assert!(d.budget_paths(9, 9).is_err());
        assert!(d.budget_paths(0, 9).is_err());
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small();
        let ds = generate_tasks(&default_tasks(), &cfg, Execution::Sequential).unwrap();
        write_datasets(dir.path(), &cfg, &ds).unwrap();
        let (cfg2, back) = read_datasets(dir.path()).unwrap();
        assert_eq!(cfg2, cfg);
        assert_eq!(back, ds);
        let text = fs::read_to_string(dir.path().join("task_A.csv")).unwrap();
        assert!(text.starts_with("path_id,step,eps11,eps22,eps12,sig11,sig22,sig12\n"));
        assert_eq!(text.lines().count(), 1 + cfg.n_paths * cfg.gp.steps);
    }

    #[test]
    fn truncated_csv_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small();
        let ds = generate_tasks(&default_tasks()[..1], &cfg, Execution::Sequential).unwrap();
        write_datasets(dir.path(), &cfg, &ds).unwrap();
        let p = dir.path().join("task_A.csv");
        let text = fs::read_to_string(&p).unwrap();
        let keep: Vec<&str> = text.lines().take(1 + 5 * cfg.gp.steps).collect();
        fs::write(&p, keep.join("\n")).unwrap();
        assert!(read_datasets(dir.path()).is_err());
    }

    #[test]
    fn single_path_config_trains_on_it() {
        let cfg = GenerationConfig {
            n_paths: 1,
            ..small()
        };
        let d = generate_task(&default_tasks()[0], &cfg, Execution::Sequential).unwrap();
        assert_eq!(d.split.train, vec![0]);
        assert!(d.split.test.is_empty());
    }
}
