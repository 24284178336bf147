//! Continual prune-and-select over one shared GRU.
//!
//! Each task gets a binary mask carved out of the network: train the
//! connections no earlier task owns (forward passes use everything), prune
//! by importance, retrain the free survivors, then freeze the mask. A
//! frozen entry is never written again, so every earlier task predicts
//! exactly as it did when it was finalized.

mod checkpoint;
mod model;
mod registry;

pub use crate::mask::TaskMask;
pub use checkpoint::{load_checkpoint, mask_file, save_checkpoint, Checkpoint, FORMAT_VERSION, META_FILE, PARAMS_FILE};
pub use model::{CpsConfig, CpsModel, Subnetwork, TaskData};
pub use registry::{TaskRecord, TaskRegistry, TrainingSummary};
