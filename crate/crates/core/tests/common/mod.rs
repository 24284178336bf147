#![allow(dead_code)]

use cddm::nn::{gru_backward, gru_forward, mse_loss, Architecture, ParameterStore, Tensor2};
use cddm::TaskMask;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random small problem for gradient checking.
pub struct GradProblem {
    pub params: ParameterStore,
    pub mask: TaskMask,
    pub input: Tensor2,
    pub target: Tensor2,
}

impl GradProblem {
    pub fn random(seed: u64, layers: usize, hidden: usize, steps: usize, keep: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let arch = Architecture::new(layers, hidden);
        let mut params = ParameterStore::init_uniform(arch, &mut rng);
        // widen the weights so every gate operates away from its linear regime
        params.values_mut().iter_mut().for_each(|v| *v *= 2.0);
        let mask = TaskMask::from_bits((0..params.len()).map(|_| rng.random_bool(keep)).collect());
        let input = Tensor2::from_fn(steps, 3, |_, _| rng.random_range(-1.0..1.0));
        let target = Tensor2::from_fn(steps, 3, |_, _| rng.random_range(-1.0..1.0));
        Self {
            params,
            mask,
            input,
            target,
        }
    }

    pub fn loss(&self, params: &ParameterStore) -> f64 {
        let (y, _) = gru_forward(params, &self.mask, &self.input).unwrap();
        mse_loss(&y, &self.target).unwrap().0
    }

    pub fn analytic(&self) -> Vec<f64> {
        let (y, trace) = gru_forward(&self.params, &self.mask, &self.input).unwrap();
        let (_, dy) = mse_loss(&y, &self.target).unwrap();
        gru_backward(&self.params, &self.mask, &trace, &dy).unwrap().values().to_vec()
    }

    /// Central differences of the loss, one parameter at a time.
    pub fn finite_difference(&self, step: f64) -> Vec<f64> {
        let mut p = self.params.clone();
        (0..p.len())
            .map(|i| {
                let orig = p.values()[i];
                p.values_mut()[i] = orig + step;
                let up = self.loss(&p);
                p.values_mut()[i] = orig - step;
                let down = self.loss(&p);
                p.values_mut()[i] = orig;
                (up - down) / (2.0 * step)
            })
            .collect()
    }
}

/// Relative error with a floor so that exactly-zero pairs count as agreeing.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-7)
}

/// Number of parameters whose analytic gradient misses the FD oracle, and the worst error.
pub fn gradient_mismatches(problem: &GradProblem, tol: f64) -> (usize, f64) {
    let analytic = problem.analytic();
    let numeric = problem.finite_difference(1e-5);
    let mut bad = 0;
    let mut worst: f64 = 0.0;
    for (a, n) in analytic.iter().zip(&numeric) {
        let e = relative_error(*a, *n);
        worst = worst.max(e);
        if e >= tol {
            bad += 1;
        }
    }
    (bad, worst)
}
