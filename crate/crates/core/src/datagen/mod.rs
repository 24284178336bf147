//! Synthetic strain-to-stress tasks.
//!
//! Strain paths are Gaussian-process draws that start at rest; each task
//! pushes the same paths through its own J2 perfectly plastic material.

mod dataset;
mod gp;
mod plasticity;
mod scaler;

pub use dataset::{
    csv_name, default_tasks, generate_strain_paths, generate_task, generate_tasks, read_datasets, write_datasets,
    GenerationConfig, PathDataset, Split, TaskSpec, META_FILE,
};
pub(crate) use dataset::fmt_f64;
pub use gp::{linspace01, make_strain_path, sample_gp_path, GpConfig, GpPosterior, SquaredExponential, StrainPathSampler};
pub use plasticity::{
    deviator, integrate_path, mean_stress, radial_return, radial_return_step, von_mises, MaterialSpec, PlasticState,
    StressUpdate,
};
pub use scaler::StandardScaler;
