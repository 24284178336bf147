//! Importance-score pruning (NNrelief) for dense and GRU layers.
//!
//! The score of connection `i → j` is its share of the mean absolute signal
//! arriving at neuron `j`:
//!
//! ```text
//! s_ij = mean_n |w_ij x_ni| / (Σ_k mean_n |w_kj x_nk| + |b_j|),   s_bias,j = |b_j| / (same)
//! ```
//!
//! Each neuron keeps the smallest set of its highest-scoring connections whose
//! scores sum to at least `α`.

mod rule;
mod scores;

pub use rule::{prune, prune_neuron, validate_alpha};
pub use scores::{
    importance_from_mean_abs, importance_scores_gru, importance_scores_linear, GruImportance, LayerScores,
    NeuronScores,
};
