//! Directory checkpoints: `meta.json`, `params.bin` and one `mask_<task>.bin`
//! per task. Binary payloads carry FNV-1a checksums in `meta.json`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{CpsConfig, CpsModel};
use super::registry::{TaskRecord, TaskRegistry, TrainingSummary};
use crate::datagen::StandardScaler;
use crate::error::{Error, Result};
use crate::mask::TaskMask;
use crate::nn::{Architecture, ParameterStore};

pub const FORMAT_VERSION: u32 = 1;
pub const META_FILE: &str = "meta.json";
pub const PARAMS_FILE: &str = "params.bin";

#[derive(Debug, Serialize, Deserialize)]
struct TaskEntry {
    task_id: String,
    mask_file: String,
    mask_checksum: String,
    active: usize,
    input_scaler: StandardScaler,
    output_scaler: StandardScaler,
    summary: Option<TrainingSummary>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    format_version: u32,
    architecture: Architecture,
    seed: u64,
    param_count: usize,
    params_file: String,
    params_checksum: String,
    hyperparameters: Option<CpsConfig>,
    tasks: Vec<TaskEntry>,
}

fn fnv1a(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    format!("{h:016x}")
}

pub fn mask_file(task_id: &str) -> String {
    format!("mask_{task_id}.bin")
}

fn check_task_id(task_id: &str) -> Result<()> {
    let ok = !task_id.is_empty()
        && task_id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    if ok {
        Ok(())
    } else {
        Err(Error::config(format!(
            "task id `{task_id}` must be non-empty ASCII letters, digits, `-` or `_`"
        )))
    }
}

/// A loaded checkpoint.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: CpsModel,
    pub hyperparameters: Option<CpsConfig>,
}

pub fn save_checkpoint(model: &CpsModel, hyperparameters: Option<&CpsConfig>, dir: &Path) -> Result<()> {
    for id in model.registry.task_ids() {
        check_task_id(id)?;
    }
    fs::create_dir_all(dir)?;
    let params: Vec<u8> = model
        .params
        .values()
        .iter()
        .flat_map(|v| v.to_le_bytes())
        .collect();
    fs::write(dir.join(PARAMS_FILE), &params)?;
    let mut tasks = Vec::new();
    for r in model.registry.records() {
        let packed = r.mask.to_packed();
        let name = mask_file(&r.task_id);
        fs::write(dir.join(&name), &packed)?;
        tasks.push(TaskEntry {
            task_id: r.task_id.clone(),
            mask_file: name,
            mask_checksum: fnv1a(&packed),
            active: r.mask.count_ones(),
            input_scaler: r.input_scaler.clone(),
            output_scaler: r.output_scaler.clone(),
            summary: r.summary.clone(),
        });
    }
    let meta = Meta {
        format_version: FORMAT_VERSION,
        architecture: model.arch(),
        seed: model.seed,
        param_count: model.params.len(),
        params_file: PARAMS_FILE.into(),
        params_checksum: fnv1a(&params),
        hyperparameters: hyperparameters.copied(),
        tasks,
    };
    fs::write(dir.join(META_FILE), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

/// Everything is validated before the model is assembled.
pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let meta_path = dir.join(META_FILE);
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::checkpoint(&meta_path, e.to_string()))?;
    let meta: Meta = serde_json::from_str(&text).map_err(|e| Error::checkpoint(&meta_path, e.to_string()))?;
    if meta.format_version != FORMAT_VERSION {
        return Err(Error::checkpoint(
            &meta_path,
            format!("format version {} is not supported (expected {FORMAT_VERSION})", meta.format_version),
        ));
    }
    let arch = meta.architecture;
    arch.validate().map_err(|e| Error::checkpoint(&meta_path, e.to_string()))?;
    if arch.param_count() != meta.param_count {
        return Err(Error::checkpoint(&meta_path, "parameter count does not match architecture"));
    }

    let params_path = dir.join(&meta.params_file);
    let bytes = fs::read(&params_path).map_err(|e| Error::checkpoint(&params_path, e.to_string()))?;
    if bytes.len() != 8 * meta.param_count {
        return Err(Error::checkpoint(
            &params_path,
            format!("expected {} bytes, found {}", 8 * meta.param_count, bytes.len()),
        ));
    }
    if fnv1a(&bytes) != meta.params_checksum {
        return Err(Error::checkpoint(&params_path, "checksum mismatch"));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let params = ParameterStore::from_values(arch, values)?;

    let mut registry = TaskRegistry::new(meta.param_count);
    for t in meta.tasks {
        check_task_id(&t.task_id).map_err(|e| Error::checkpoint(&meta_path, e.to_string()))?;
        let path = dir.join(&t.mask_file);
        let packed = fs::read(&path).map_err(|e| Error::checkpoint(&path, e.to_string()))?;
        if fnv1a(&packed) != t.mask_checksum {
            return Err(Error::checkpoint(&path, "checksum mismatch"));
        }
        let mask = TaskMask::from_packed(&packed, meta.param_count).map_err(|e| Error::checkpoint(&path, e.to_string()))?;
        if mask.count_ones() != t.active {
            return Err(Error::checkpoint(&path, "active count does not match metadata"));
        }
        for s in [&t.input_scaler, &t.output_scaler] {
            if s.cols() != 3 || s.std.len() != 3 || s.std.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::checkpoint(&meta_path, format!("bad scaler for task {}", t.task_id)));
            }
        }
        registry
            .register(TaskRecord {
                task_id: t.task_id,
                mask,
                input_scaler: t.input_scaler,
                output_scaler: t.output_scaler,
                summary: t.summary,
            })
            .map_err(|e| Error::checkpoint(&meta_path, e.to_string()))?;
    }
    Ok(Checkpoint {
        model: CpsModel::from_parts(params, registry, meta.seed),
        hyperparameters: meta.hyperparameters,
    })
}
