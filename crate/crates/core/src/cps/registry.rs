use serde::{Deserialize, Serialize};

use crate::datagen::StandardScaler;
use crate::error::{Error, Result};
use crate::mask::TaskMask;

/// What happened while a task's subnetwork was carved out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub train_paths: usize,
    pub free_at_start: usize,
    /// Final epoch loss of the initial phase (scaled units).
    pub initial_loss: f64,
    /// Active entries after each pruning iteration.
    pub kept_per_iteration: Vec<usize>,
    /// Final epoch loss of each retraining phase.
    pub retrain_loss: Vec<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task_id: String,
    pub mask: TaskMask,
    pub input_scaler: StandardScaler,
    pub output_scaler: StandardScaler,
    pub summary: Option<TrainingSummary>,
}

/// Finalized tasks in arrival order plus the union of their masks.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskRegistry {
    records: Vec<TaskRecord>,
    frozen: TaskMask,
}

impl TaskRegistry {
    pub fn new(param_count: usize) -> Self {
        Self {
            records: Vec::new(),
            frozen: TaskMask::empty(param_count),
        }
    }

    pub fn records(&self) -> &[TaskRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn task_ids(&self) -> Vec<&str> {
        self.records.iter().map(|r| r.task_id.as_str()).collect()
    }

    pub fn contains(&self, task_id: &str) -> bool {
        self.records.iter().any(|r| r.task_id == task_id)
    }

    pub fn get(&self, task_id: &str) -> Result<&TaskRecord> {
        self.records
            .iter()
            .find(|r| r.task_id == task_id)
            .ok_or_else(|| Error::UnknownTask(task_id.to_string()))
    }

    /// Entries owned by at least one finalized task.
    pub fn frozen_union(&self) -> &TaskMask {
        &self.frozen
    }

    /// Entries no finalized task uses.
    pub fn free(&self) -> TaskMask {
        self.frozen.complement()
    }

    pub fn register(&mut self, record: TaskRecord) -> Result<()> {
        if self.contains(&record.task_id) {
            return Err(Error::DuplicateTask(record.task_id));
        }
        self.frozen = self.frozen.union(&record.mask)?;
        self.records.push(record);
        Ok(())
    }

    pub fn masks(&self) -> Vec<(String, &TaskMask)> {
        self.records.iter().map(|r| (r.task_id.clone(), &r.mask)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, bits: &[bool]) -> TaskRecord {
        TaskRecord {
            task_id: id.into(),
            mask: TaskMask::from_bits(bits.to_vec()),
            input_scaler: StandardScaler::identity(3),
            output_scaler: StandardScaler::identity(3),
            summary: None,
        }
    }

    #[test]
    fn union_grows_and_duplicates_fail() {
        let mut reg = TaskRegistry::new(3);
        reg.register(record("A", &[true, false, false])).unwrap();
        reg.register(record("B", &[false, true, false])).unwrap();
        assert_eq!(reg.frozen_union().bits(), &[true, true, false]);
        assert_eq!(reg.free().bits(), &[false, false, true]);
        assert!(matches!(reg.register(record("A", &[false; 3])), Err(Error::DuplicateTask(_))));
        assert!(reg.register(record("C", &[true; 4])).is_err());
        assert_eq!(reg.task_ids(), vec!["A", "B"]);
        assert!(matches!(reg.get("Z"), Err(Error::UnknownTask(_))));
    }
}
