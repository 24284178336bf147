use crate::error::{Error, Result};
use crate::mask::TaskMask;
use crate::nn::params::{Gate, ParamGroup, ParamKind, ParameterStore};
use crate::pruning::scores::{GruImportance, NeuronScores};

pub fn validate_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!("pruning parameter alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Keep flags for one neuron's incoming entries.
///
/// Active scores are sorted descending and the shortest prefix whose sum
/// reaches `alpha` fixes the threshold score; every active entry scoring at
/// least the threshold is kept, so ties at the boundary all survive. Inactive
/// entries are never kept. If rounding stops the cumulative sum short of
/// `alpha`, every active entry is kept.
pub fn prune_neuron(scores: &[f64], active: &[bool], alpha: f64) -> Vec<bool> {
    assert_eq!(scores.len(), active.len());
    let mut ranked: Vec<f64> = scores
        .iter()
        .zip(active)
        .filter(|(_, &a)| a)
        .map(|(&s, _)| s)
        .collect();
    ranked.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut threshold = None;
    for &s in &ranked {
        cumulative += s;
        if cumulative >= alpha {
            threshold = Some(s);
            break;
        }
    }
    match threshold {
        Some(t) => scores.iter().zip(active).map(|(&s, &a)| a && s >= t).collect(),
        None => active.to_vec(),
    }
}

fn apply_neuron(
    decision: &mut TaskMask,
    current: &TaskMask,
    neuron: &NeuronScores,
    indices: &[usize],
    alpha: f64,
) {
    debug_assert_eq!(indices.len(), neuron.connections.len() + 1);
    if neuron.dead {
        return;
    }
    let active: Vec<bool> = indices.iter().map(|&i| current.get(i)).collect();
    let keep = prune_neuron(&neuron.with_bias(), &active, alpha);
    for (&i, k) in indices.iter().zip(keep) {
        decision.set(i, k);
    }
}

/// Carve a sub-mask of `current_mask` from importance scores.
///
/// The result never contains an entry that `current_mask` lacks; connections
/// of dead neurons (no incoming signal) are all dropped.
pub fn prune(params: &ParameterStore, current_mask: &TaskMask, scores: &GruImportance, alpha: f64) -> Result<TaskMask> {
    validate_alpha(alpha)?;
    let arch = params.arch();
    if current_mask.len() != params.len() {
        return Err(Error::config("mask does not match parameter count"));
    }
    if scores.layers.len() != arch.num_layers {
        return Err(Error::config("importance table does not match architecture"));
    }
    let hsz = arch.hidden_size;
    let mut decision = TaskMask::empty(params.len());
    let mut indices = Vec::new();
    for l in 0..arch.num_layers {
        let n_in = arch.layer_input(l);
        for gate in Gate::ALL {
            let g = |kind| ParamGroup::Gru { layer: l, gate, kind };
            let w0 = arch.range(g(ParamKind::Input)).start;
            let u0 = arch.range(g(ParamKind::Recurrent)).start;
            let b0 = arch.range(g(ParamKind::Bias)).start;
            let table = scores.gate(l, gate);
            if table.neurons.len() != hsz {
                return Err(Error::config("importance table does not match hidden size"));
            }
            for (j, neuron) in table.neurons.iter().enumerate() {
                indices.clear();
                indices.extend((0..n_in).map(|k| w0 + j * n_in + k));
                indices.extend((0..hsz).map(|k| u0 + j * hsz + k));
                indices.push(b0 + j);
                apply_neuron(&mut decision, current_mask, neuron, &indices, alpha);
            }
        }
    }
    let w0 = arch.range(ParamGroup::HeadWeight).start;
    let b0 = arch.range(ParamGroup::HeadBias).start;
    for (o, neuron) in scores.head.neurons.iter().enumerate() {
        indices.clear();
        indices.extend((0..hsz).map(|k| w0 + o * hsz + k));
        indices.push(b0 + o);
        apply_neuron(&mut decision, current_mask, neuron, &indices, alpha);
    }
    Ok(decision)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::Architecture;
    use crate::nn::tensor::Tensor2;
    use crate::parallel::Execution;
    use crate::pruning::importance_scores_gru;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hand_examples() {
        let all = [true, true];
        assert_eq!(prune_neuron(&[0.75, 0.25], &all, 0.95), vec![true, true]);
        assert_eq!(prune_neuron(&[0.75, 0.25], &all, 0.7), vec![true, false]);
        assert_eq!(prune_neuron(&[0.25, 0.75], &all, 0.7), vec![false, true]);
    }

    #[test]
    fn alpha_near_one_keeps_everything_positive() {
        let s = [0.4, 0.3, 0.2, 0.1];
        assert_eq!(prune_neuron(&s, &[true; 4], 0.999_999), vec![true; 4]);
    }

    #[test]
    fn ties_at_threshold_are_all_kept() {
        let s = [0.4, 0.2, 0.2, 0.2];
        // 0.4 + 0.2 reaches 0.5 at a 0.2 entry; every 0.2 survives
        assert_eq!(prune_neuron(&s, &[true; 4], 0.5), vec![true; 4]);
    }

    #[test]
    fn inactive_entries_are_never_resurrected() {
        let s = [0.0, 0.6, 0.4];
        assert_eq!(prune_neuron(&s, &[false, true, true], 0.99), vec![false, true, true]);
    }

    #[test]
    fn alpha_outside_open_interval_is_rejected() {
        for a in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(validate_alpha(a).is_err());
        }
        assert!(validate_alpha(0.95).is_ok());
    }

    #[test]
    fn gru_prune_is_subset_and_drops_something() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = ParameterStore::init_uniform(Architecture::new(2, 4), &mut rng);
        let inputs: Vec<Tensor2> = (0..6)
            .map(|_| Tensor2::from_fn(5, 3, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let mut mask = TaskMask::full(p.len());
        for i in (0..p.len()).step_by(7) {
            mask.set(i, false);
        }
        let scores = importance_scores_gru(&p, &mask, &inputs, Execution::Sequential).unwrap();
        let kept = prune(&p, &mask, &scores, 0.9).unwrap();
        assert!(kept.is_subset_of(&mask));
        assert!(kept.count_ones() < mask.count_ones());
        assert!(kept.count_ones() > 0);
        assert!(prune(&p, &mask, &scores, 1.0).is_err());
    }

    fn random_neuron(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<bool>) {
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let active: Vec<bool> = (0..n).map(|_| rng.random_bool(0.8)).collect();
        let sum: f64 = raw.iter().zip(&active).filter(|(_, &a)| a).map(|(s, _)| s).sum();
        let scores = raw
            .iter()
            .zip(&active)
            .map(|(s, &a)| if a && sum > 0.0 { s / sum } else { 0.0 })
            .collect();
        (scores, active)
    }

    proptest! {
        #[test]
        fn kept_mass_reaches_alpha(seed in any::<u64>(), n in 1usize..40, alpha in 0.01f64..0.99) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (scores, active) = random_neuron(&mut rng, n);
            let keep = prune_neuron(&scores, &active, alpha);
            let total: f64 = scores.iter().zip(&active).filter(|(_, &a)| a).map(|(s, _)| s).sum();
            let kept: f64 = scores.iter().zip(&keep).filter(|(_, &k)| k).map(|(s, _)| s).sum();
            prop_assert!(kept >= alpha.min(total) - 1e-12);
            for (k, a) in keep.iter().zip(&active) {
                prop_assert!(!k || *a);
            }
        }

        #[test]
        fn keep_set_grows_with_alpha(seed in any::<u64>(), n in 1usize..40, a in 0.01f64..0.99, b in 0.01f64..0.99) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (scores, active) = random_neuron(&mut rng, n);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let small = prune_neuron(&scores, &active, lo);
            let large = prune_neuron(&scores, &active, hi);
            for (s, l) in small.iter().zip(&large) {
                prop_assert!(!s || *l);
            }
        }
    }
}
