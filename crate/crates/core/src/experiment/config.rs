use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cps::CpsConfig;
use crate::datagen::{default_tasks, GenerationConfig, GpConfig, TaskSpec};
use crate::error::{Error, Result};
use crate::nn::Architecture;

/// The four task orders used throughout, numbered from 1.
pub const ORDERINGS: [[&str; 4]; 4] = [
    ["A", "B", "C", "D"],
    ["B", "D", "A", "C"],
    ["C", "A", "D", "B"],
    ["D", "C", "B", "A"],
];

pub fn ordering(index: usize) -> Result<Vec<String>> {
    index
        .checked_sub(1)
        .and_then(|i| ORDERINGS.get(i))
        .map(|o| o.iter().map(|s| s.to_string()).collect())
        .ok_or_else(|| Error::config(format!("ordering must be 1..=4, got {index}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Cddm,
    Standard,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cddm" => Ok(Mode::Cddm),
            "standard" => Ok(Mode::Standard),
            _ => Err(Error::config(format!("mode must be cddm or standard, got `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Small enough for CI on one core.
    Desk,
    /// The full-size hyperparameters.
    Paper,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            _ => Err(Error::config(format!("profile must be desk or paper, got `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureConfig {
    pub num_layers: usize,
    pub hidden_size: usize,
}

impl ArchitectureConfig {
    pub fn build(&self) -> Architecture {
        Architecture::new(self.num_layers, self.hidden_size)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub profile: Profile,
    pub mode: Mode,
    /// Index into [`ORDERINGS`], from 1.
    pub ordering: usize,
    /// Training paths for the first task of the ordering.
    pub first_budget: usize,
    /// Training paths for every later task; one run per entry.
    pub budgets: Vec<usize>,
    pub seeds: Vec<u64>,
    pub architecture: ArchitectureConfig,
    pub training: CpsConfig,
    pub data: GenerationConfig,
    pub tasks: Vec<TaskSpec>,
}

impl ExperimentConfig {
    pub fn profile(profile: Profile) -> Self {
        match profile {
            Profile::Desk => Self {
                profile,
                mode: Mode::Cddm,
                ordering: 1,
                first_budget: 200,
                budgets: vec![200, 100, 50],
                seeds: vec![0],
                architecture: ArchitectureConfig {
                    num_layers: 2,
                    hidden_size: 32,
                },
                training: CpsConfig {
                    training_epochs: 200,
                    retraining_epochs: 50,
                    ..CpsConfig::default()
                },
                data: GenerationConfig {
                    gp: GpConfig {
                        steps: 50,
                        ..GpConfig::default()
                    },
                    ..GenerationConfig::default()
                },
                tasks: default_tasks(),
            },
            Profile::Paper => Self {
                profile,
                mode: Mode::Cddm,
                ordering: 1,
                first_budget: 800,
                budgets: vec![800, 400, 200, 100, 50],
                seeds: vec![0],
                architecture: ArchitectureConfig {
                    num_layers: 2,
                    hidden_size: 128,
                },
                training: CpsConfig::default(),
                data: GenerationConfig::default(),
                tasks: default_tasks(),
            },
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Toml(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Toml(e.to_string()))
    }

    /// Task ids in training order.
    pub fn task_order(&self) -> Result<Vec<String>> {
        ordering(self.ordering)
    }

    /// Epochs for an independently trained network: the same optimizer
    /// budget a subnetwork receives.
    pub fn standard_epochs(&self) -> usize {
        self.training.training_epochs + self.training.prune_iterations * self.training.retraining_epochs
    }

    pub fn validate(&self) -> Result<()> {
        self.architecture.build().validate()?;
        self.training.validate()?;
        self.data.validate()?;
        let order = self.task_order()?;
        let mut ids: Vec<&str> = self.tasks.iter().map(|t| t.id.as_str()).collect();
        ids.sort_unstable();
        let mut wanted: Vec<&str> = order.iter().map(String::as_str).collect();
        wanted.sort_unstable();
        if ids != wanted {
            return Err(Error::config(format!("ordering {order:?} is not a permutation of tasks {ids:?}")));
        }
        for t in &self.tasks {
            t.material.validate()?;
        }
        if self.seeds.is_empty() {
            return Err(Error::config("need at least one seed"));
        }
        let available = self.data.n_paths - self.data.test_count();
        for &b in self.budgets.iter().chain([&self.first_budget]) {
            if b == 0 || b > available {
                return Err(Error::config(format!("budget {b} outside 1..={available} training paths")));
            }
        }
        if self.budgets.is_empty() {
            return Err(Error::config("need at least one budget"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_validate_and_round_trip_through_toml() {
        for p in [Profile::Desk, Profile::Paper] {
            let cfg = ExperimentConfig::profile(p);
            cfg.validate().unwrap();
            let text = cfg.to_toml_string().unwrap();
            assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
        }
    }

    #[test]
    fn paper_profile_matches_reported_hyperparameters() {
        let cfg = ExperimentConfig::profile(Profile::Paper);
        let t = cfg.training;
        assert_eq!((t.training_epochs, t.retraining_epochs, t.prune_iterations), (1000, 200, 1));
        assert_eq!((t.alpha, t.adam.learning_rate, t.adam.weight_decay), (0.95, 0.01, 1e-6));
        assert_eq!((cfg.architecture.num_layers, cfg.architecture.hidden_size), (2, 128));
        assert_eq!(cfg.first_budget, 800);
        assert_eq!(cfg.standard_epochs(), 1200);
    }

    #[test]
    fn orderings_are_permutations() {
        for i in 1..=4 {
            let mut o = ordering(i).unwrap();
            o.sort();
            assert_eq!(o, ["A", "B", "C", "D"]);
        }
        assert!(ordering(0).is_err() && ordering(5).is_err());
    }

    #[test]
    fn bad_configs_are_rejected() {
        let base = ExperimentConfig::profile(Profile::Desk);
        let mut c = base.clone();
        c.budgets = vec![900];
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.tasks.pop();
        assert!(c.validate().is_err());
        let mut c = base;
        c.ordering = 7;
        assert!(c.validate().is_err());
        assert!("fast".parse::<Mode>().is_err());
        assert!(matches!(ExperimentConfig::from_toml_str("profile = 3"), Err(Error::Toml(_))));
    }
}
