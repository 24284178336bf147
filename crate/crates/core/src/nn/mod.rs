//! Dense kernels, the GRU and its optimizer.

pub mod adam;
pub mod gru;
pub mod loss;
pub mod params;
pub mod tensor;
pub mod trainer;

pub use adam::{AdamConfig, AdamState};
pub use gru::{gru_backward, gru_forward, EffectiveWeights, ForwardTrace};
pub use loss::mse_loss;
pub use params::{Architecture, Gate, Gradients, ParamAddress, ParamGroup, ParamKind, ParameterStore};
pub use tensor::Tensor2;
pub use trainer::{fit, FitConfig, FitReport, SequenceSet};
