//! Continual prune-and-select (CP&S) for recurrent constitutive models.
//!
//! A single stacked GRU learns a sequence of strain-to-stress laws. Each task
//! carves its own subnetwork out of the shared parameters by importance-score
//! pruning, then freezes it, so earlier tasks are never forgotten while later
//! tasks may reuse (but not modify) their connections.
//!
//! Module map:
//!
//! - [`nn`]: dense kernels, the GRU forward/backward passes, MSE loss and a
//!   mask-gated Adam optimizer.
//! - [`pruning`]: importance scores and the cumulative-α prune rule.
//! - [`cps`]: task masks, the task registry, the per-task train/prune/retrain
//!   lifecycle and checkpoints.
//! - [`datagen`]: Gaussian-process strain paths and a von Mises return-mapping
//!   oracle producing per-material datasets.
//! - [`metrics`]: relative path error, subnetwork occupancy and task distances.
//! - [`experiment`]: configuration and drivers shared by the CLI and tests.

pub mod cps;
pub mod datagen;
pub mod error;
pub mod experiment;
pub mod mask;
pub mod metrics;
pub mod nn;
pub mod parallel;
pub mod pruning;

pub use error::{Error, Result};
pub use mask::TaskMask;
