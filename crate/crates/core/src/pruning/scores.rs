use crate::error::{Error, Result};
use crate::mask::TaskMask;
use crate::nn::gru::EffectiveWeights;
use crate::nn::params::{Gate, ParamGroup, ParamKind, ParameterStore};
use crate::nn::tensor::Tensor2;
use crate::nn::trainer::CHUNK_PATHS;
use crate::parallel::Execution;

#[derive(Debug, Clone, PartialEq)]
pub struct NeuronScores {
    /// One score per incoming connection, in the weight row's column order.
    pub connections: Vec<f64>,
    pub bias: f64,
    /// No signal reaches this neuron (zero denominator); every score is zero.
    pub dead: bool,
}

impl NeuronScores {
    pub fn total(&self) -> f64 {
        self.connections.iter().sum::<f64>() + self.bias
    }

    /// Connection scores followed by the bias score.
    pub fn with_bias(&self) -> Vec<f64> {
        let mut v = self.connections.clone();
        v.push(self.bias);
        v
    }
}

/// Scores for every target neuron of one layer (or one GRU gate).
#[derive(Debug, Clone, PartialEq)]
pub struct LayerScores {
    pub neurons: Vec<NeuronScores>,
}

/// Score a layer given the per-feature mean absolute input signal.
///
/// `weights` is `targets × inputs`. Because the weight is constant over
/// samples, `mean |w x| = |w| · mean |x|`.
pub fn importance_from_mean_abs(weights: &Tensor2, bias: &[f64], mean_abs: &[f64]) -> Result<LayerScores> {
    let (n_out, n_in) = weights.shape();
    if bias.len() != n_out || mean_abs.len() != n_in {
        return Err(Error::shape(format!(
            "weights {n_out}x{n_in}, bias {}, signal width {}",
            bias.len(),
            mean_abs.len()
        )));
    }
    let neurons = (0..n_out)
        .map(|j| {
            let contrib: Vec<f64> = weights
                .row(j)
                .iter()
                .zip(mean_abs)
                .map(|(w, x)| w.abs() * x)
                .collect();
            normalize(contrib, bias[j].abs())
        })
        .collect();
    Ok(LayerScores { neurons })
}

fn normalize(contrib: Vec<f64>, bias_abs: f64) -> NeuronScores {
    let denom = contrib.iter().sum::<f64>() + bias_abs;
    if denom > 0.0 && denom.is_finite() {
        NeuronScores {
            connections: contrib.into_iter().map(|c| c / denom).collect(),
            bias: bias_abs / denom,
            dead: false,
        }
    } else {
        NeuronScores {
            connections: vec![0.0; contrib.len()],
            bias: 0.0,
            dead: true,
        }
    }
}

/// Score a dense layer from its actual input samples (`N × inputs`).
pub fn importance_scores_linear(weights: &Tensor2, bias: &[f64], signals: &Tensor2) -> Result<LayerScores> {
    let (n_out, n_in) = weights.shape();
    if signals.rows() == 0 {
        return Err(Error::Empty("no input samples for importance scores".into()));
    }
    if signals.cols() != n_in || bias.len() != n_out {
        return Err(Error::shape(format!(
            "weights {n_out}x{n_in}, bias {}, signals {}x{}",
            bias.len(),
            signals.rows(),
            signals.cols()
        )));
    }
    let n = signals.rows() as f64;
    let neurons = (0..n_out)
        .map(|j| {
            let w = weights.row(j);
            let contrib: Vec<f64> = (0..n_in)
                .map(|i| (0..signals.rows()).map(|s| (w[i] * signals.get(s, i)).abs()).sum::<f64>() / n)
                .collect();
            normalize(contrib, bias[j].abs())
        })
        .collect();
    Ok(LayerScores { neurons })
}

/// Per-gate scores of a GRU plus the output head.
///
/// For gates `z` and `r` the incoming signal of hidden unit `j` is
/// `[x_t ; h_{t-1}]` against `[W_g ; U_g]` row `j`; for the candidate gate the
/// recurrent part is `r_t ⊙ h_{t-1}`. Means pool over every (path, step) of a
/// masked forward pass. The head is scored on the top layer's hidden states.
#[derive(Debug, Clone, PartialEq)]
pub struct GruImportance {
    /// `layers[l][gate.index()]`.
    pub layers: Vec<[LayerScores; 3]>,
    pub head: LayerScores,
}

impl GruImportance {
    pub fn gate(&self, layer: usize, gate: Gate) -> &LayerScores {
        &self.layers[layer][gate.index()]
    }
}

#[derive(Clone)]
struct SignalSums {
    input: Vec<Vec<f64>>,
    prev_hidden: Vec<Vec<f64>>,
    reset_hidden: Vec<Vec<f64>>,
    top_hidden: Vec<f64>,
    rows: usize,
}

fn add_abs_columns(acc: &mut [f64], block: &[f64]) {
    let w = acc.len();
    for row in block.chunks_exact(w) {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v.abs();
        }
    }
}

pub fn importance_scores_gru(
    params: &ParameterStore,
    mask: &TaskMask,
    inputs: &[Tensor2],
    exec: Execution,
) -> Result<GruImportance> {
    if inputs.is_empty() {
        return Err(Error::Empty("no training paths for importance scores".into()));
    }
    let arch = params.arch();
    let hsz = arch.hidden_size;
    let eff = EffectiveWeights::new(params, mask)?;
    let n_chunks = inputs.len().div_ceil(CHUNK_PATHS);
    let parts = exec.map_range(n_chunks, |c| -> Result<SignalSums> {
        let lo = c * CHUNK_PATHS;
        let hi = (lo + CHUNK_PATHS).min(inputs.len());
        let refs: Vec<&Tensor2> = inputs[lo..hi].iter().collect();
        let (_, trace) = eff.forward(&refs)?;
        let batch = hi - lo;
        let steps = trace.steps();
        let mut sums = SignalSums {
            input: Vec::new(),
            prev_hidden: Vec::new(),
            reset_hidden: Vec::new(),
            top_hidden: vec![0.0; hsz],
            rows: steps * batch,
        };
        for l in 0..arch.num_layers {
            let mut x = vec![0.0; arch.layer_input(l)];
            add_abs_columns(&mut x, trace.raw_input(l));
            // h_{t-1} over all steps: h_0 = 0 contributes nothing
            let mut hp = vec![0.0; hsz];
            add_abs_columns(&mut hp, &trace.raw_hidden(l)[..(steps - 1) * batch * hsz]);
            let mut rh = vec![0.0; hsz];
            add_abs_columns(&mut rh, trace.raw_reset_hidden(l));
            sums.input.push(x);
            sums.prev_hidden.push(hp);
            sums.reset_hidden.push(rh);
        }
        add_abs_columns(&mut sums.top_hidden, trace.raw_hidden(arch.num_layers - 1));
        Ok(sums)
    });

    let mut total: Option<SignalSums> = None;
    for part in parts {
        let part = part?;
        match total.as_mut() {
            None => total = Some(part),
            Some(t) => {
                t.rows += part.rows;
                for l in 0..arch.num_layers {
                    add_into(&mut t.input[l], &part.input[l]);
                    add_into(&mut t.prev_hidden[l], &part.prev_hidden[l]);
                    add_into(&mut t.reset_hidden[l], &part.reset_hidden[l]);
                }
                add_into(&mut t.top_hidden, &part.top_hidden);
            }
        }
    }
    let total = total.expect("at least one chunk");
    let n = total.rows as f64;
    let mean = |v: &[f64]| v.iter().map(|s| s / n).collect::<Vec<f64>>();

    let masked_group = |group: ParamGroup| -> Vec<f64> {
        let r = arch.range(group);
        params.values()[r.clone()]
            .iter()
            .zip(&mask.bits()[r])
            .map(|(&v, &m)| if m { v } else { 0.0 })
            .collect()
    };

    let mut layers = Vec::with_capacity(arch.num_layers);
    for l in 0..arch.num_layers {
        let n_in = arch.layer_input(l);
        let x_mean = mean(&total.input[l]);
        let gate_scores = |gate: Gate| -> Result<LayerScores> {
            let g = |kind| ParamGroup::Gru { layer: l, gate, kind };
            let w = masked_group(g(ParamKind::Input));
            let u = masked_group(g(ParamKind::Recurrent));
            let b = masked_group(g(ParamKind::Bias));
            // concatenate [W | U] row by row
            let mut joined = Vec::with_capacity(hsz * (n_in + hsz));
            for j in 0..hsz {
                joined.extend_from_slice(&w[j * n_in..(j + 1) * n_in]);
                joined.extend_from_slice(&u[j * hsz..(j + 1) * hsz]);
            }
            let recurrent = if gate == Gate::H {
                mean(&total.reset_hidden[l])
            } else {
                mean(&total.prev_hidden[l])
            };
            let mut signal = x_mean.clone();
            signal.extend(recurrent);
            importance_from_mean_abs(&Tensor2::new(hsz, n_in + hsz, joined)?, &b, &signal)
        };
        layers.push([gate_scores(Gate::Z)?, gate_scores(Gate::R)?, gate_scores(Gate::H)?]);
    }

    let head_w = Tensor2::new(arch.output_size, hsz, masked_group(ParamGroup::HeadWeight))?;
    let head = importance_from_mean_abs(&head_w, &masked_group(ParamGroup::HeadBias), &mean(&total.top_hidden))?;
    Ok(GruImportance { layers, head })
}

fn add_into(acc: &mut [f64], v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gru_forward;
    use crate::nn::params::Architecture;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ones(n: usize, m: usize) -> Tensor2 {
        Tensor2::from_fn(n, m, |_, _| 1.0)
    }

    #[test]
    fn hand_example_with_zero_bias() {
        let w = Tensor2::from_rows(&[[3.0, 1.0]]);
        let s = importance_scores_linear(&w, &[0.0], &ones(5, 2)).unwrap();
        let n = &s.neurons[0];
        assert!((n.connections[0] - 0.75).abs() < 1e-15);
        assert!((n.connections[1] - 0.25).abs() < 1e-15);
        assert_eq!(n.bias, 0.0);
    }

    #[test]
    fn hand_example_with_bias() {
        let w = Tensor2::from_rows(&[[1.0, 1.0]]);
        let s = importance_scores_linear(&w, &[-2.0], &ones(3, 2)).unwrap();
        let n = &s.neurons[0];
        assert!((n.connections[0] - 0.25).abs() < 1e-15);
        assert!((n.connections[1] - 0.25).abs() < 1e-15);
        assert!((n.bias - 0.5).abs() < 1e-15);
    }

    #[test]
    fn single_connection_takes_all_importance() {
        for w in [1e-6, 0.3, -42.0] {
            let s = importance_scores_linear(&Tensor2::from_rows(&[[w]]), &[0.0], &ones(4, 1)).unwrap();
            assert_eq!(s.neurons[0].connections[0], 1.0);
        }
    }

    #[test]
    fn zero_denominator_marks_neuron_dead() {
        let w = Tensor2::from_rows(&[[0.0, 0.0], [1.0, 0.0]]);
        let s = importance_scores_linear(&w, &[0.0, 0.0], &ones(2, 2)).unwrap();
        assert!(s.neurons[0].dead);
        assert_eq!(s.neurons[0].total(), 0.0);
        assert!(!s.neurons[1].dead);
    }

    #[test]
    fn linear_errors() {
        let w = Tensor2::from_rows(&[[1.0, 1.0]]);
        assert!(importance_scores_linear(&w, &[0.0], &Tensor2::zeros(0, 2)).is_err());
        assert!(importance_scores_linear(&w, &[0.0], &ones(3, 3)).is_err());
        assert!(importance_scores_linear(&w, &[0.0, 1.0], &ones(3, 2)).is_err());
    }

    fn small_gru(seed: u64) -> (ParameterStore, Vec<Tensor2>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = ParameterStore::init_uniform(Architecture::new(2, 3), &mut rng);
        let inputs = (0..5)
            .map(|_| Tensor2::from_fn(4, 3, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        (p, inputs)
    }

    #[test]
    fn gru_scores_normalize_per_neuron() {
        let (p, inputs) = small_gru(1);
        let s = importance_scores_gru(&p, &TaskMask::full(p.len()), &inputs, Execution::Sequential).unwrap();
        for gates in &s.layers {
            for g in gates {
                for n in &g.neurons {
                    assert!((n.total() - 1.0).abs() < 1e-12);
                    assert!(n.with_bias().iter().all(|&v| v >= 0.0));
                }
            }
        }
        for n in &s.head.neurons {
            assert!((n.total() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_recurrent_candidate_rows_get_zero_recurrent_scores() {
        let (mut p, inputs) = small_gru(2);
        p.group_mut(ParamGroup::Gru { layer: 0, gate: Gate::H, kind: ParamKind::Recurrent })
            .iter_mut()
            .for_each(|v| *v = 0.0);
        let s = importance_scores_gru(&p, &TaskMask::full(p.len()), &inputs, Execution::Sequential).unwrap();
        for n in &s.gate(0, Gate::H).neurons {
            assert!(n.connections[3..].iter().all(|&v| v == 0.0));
            let rest: f64 = n.connections[..3].iter().sum::<f64>() + n.bias;
            assert!((rest - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn masked_connection_scores_exactly_zero() {
        let (p, inputs) = small_gru(3);
        let arch = p.arch();
        let mut mask = TaskMask::full(p.len());
        let u_r = arch.range(ParamGroup::Gru { layer: 1, gate: Gate::R, kind: ParamKind::Recurrent });
        // U_r[1][2] of layer 1 is connection index 3 + 2 in the [W | U] row
        mask.set(u_r.start + 3 + 2, false);
        let s = importance_scores_gru(&p, &mask, &inputs, Execution::Sequential).unwrap();
        assert_eq!(s.gate(1, Gate::R).neurons[1].connections[3 + 2], 0.0);
        assert!(s.gate(1, Gate::R).neurons[0].connections[3 + 2] > 0.0);
    }

    #[test]
    fn pooled_gru_scores_match_linear_scores_on_dumped_signals() {
        // Rebuild the update gate of a 1-unit GRU as a dense layer over
        // [x_t ; h_{t-1}] samples collected by hand from forward traces.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let arch = Architecture::new(1, 1);
        let p = ParameterStore::init_uniform(arch, &mut rng);
        let mask = TaskMask::full(p.len());
        let inputs: Vec<Tensor2> = (0..3)
            .map(|_| {
                let row = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                Tensor2::from_rows(&[row; 6])
            })
            .collect();
        let mut samples = Vec::new();
        for seq in &inputs {
            let (_, trace) = gru_forward(&p, &mask, seq).unwrap();
            for t in 0..seq.rows() {
                let mut s = seq.row(t).to_vec();
                s.extend(trace.previous_hidden(0, t, 0));
                samples.push([s[0], s[1], s[2], s[3]]);
            }
        }
        let g = |kind| ParamGroup::Gru { layer: 0, gate: Gate::Z, kind };
        let mut w = p.group(g(ParamKind::Input)).to_vec();
        w.extend_from_slice(p.group(g(ParamKind::Recurrent)));
        let linear = importance_scores_linear(
            &Tensor2::new(1, 4, w).unwrap(),
            p.group(g(ParamKind::Bias)),
            &Tensor2::from_rows(&samples),
        )
        .unwrap();
        let pooled = importance_scores_gru(&p, &mask, &inputs, Execution::Sequential).unwrap();
        for (a, b) in pooled.gate(0, Gate::Z).neurons[0]
            .with_bias()
            .iter()
            .zip(linear.neurons[0].with_bias())
        {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn execution_strategies_agree_bitwise() {
        let (p, inputs) = small_gru(8);
        let many: Vec<Tensor2> = (0..70).map(|i| inputs[i % inputs.len()].clone()).collect();
        let mask = TaskMask::full(p.len());
        let a = importance_scores_gru(&p, &mask, &many, Execution::Sequential).unwrap();
        let b = importance_scores_gru(&p, &mask, &many, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn normalization_holds(seed in any::<u64>(), n_out in 1usize..6, n_in in 1usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = Tensor2::from_fn(n_out, n_in, |_, _| rng.random_range(-2.0..2.0));
            let b: Vec<f64> = (0..n_out).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x = Tensor2::from_fn(10, n_in, |_, _| rng.random_range(-3.0..3.0));
            let s = importance_scores_linear(&w, &b, &x).unwrap();
            for n in &s.neurons {
                prop_assert!(n.dead || (n.total() - 1.0).abs() < 1e-12);
                prop_assert!(n.with_bias().iter().all(|&v| v >= 0.0));
            }
        }

        #[test]
        fn score_depends_on_weight_signal_product(seed in any::<u64>(), k in 0.1f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = Tensor2::from_fn(2, 3, |_, _| rng.random_range(-2.0..2.0));
            let b = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let x = Tensor2::from_fn(8, 3, |_, _| rng.random_range(-3.0..3.0));
            let mut w2 = w.clone();
            let mut x2 = x.clone();
            for j in 0..2 { w2.set(j, 1, w.get(j, 1) * k); }
            for s in 0..8 { x2.set(s, 1, x.get(s, 1) / k); }
            let a = importance_scores_linear(&w, &b, &x).unwrap();
            let c = importance_scores_linear(&w2, &b, &x2).unwrap();
            for (na, nc) in a.neurons.iter().zip(&c.neurons) {
                for (u, v) in na.with_bias().iter().zip(nc.with_bias()) {
                    prop_assert!((u - v).abs() < 1e-12);
                }
            }
        }
    }
}
