//! Gaussian-process loading paths.
//!
//! The posterior covariance only depends on the conditioning and query
//! times, so it is factored once and reused: a draw is
//! `mean_map · y + factor · ξ` with `ξ ~ N(0, I)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpConfig {
    pub signal_variance: f64,
    /// In pseudo-time units; paths span `[0, 1]`.
    pub length_scale: f64,
    /// Observation noise variance on the random conditioning values.
    pub noise_variance: f64,
    /// Initial tolerance for negative posterior eigenvalues.
    pub jitter: f64,
    /// Largest tolerance tried before giving up.
    pub max_jitter: f64,
    pub conditioning_points: usize,
    pub steps: usize,
    /// Conditioning values are drawn from `Uniform(-amplitude, amplitude)`.
    pub amplitude: f64,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            signal_variance: 1.0,
            length_scale: 0.2,
            noise_variance: 1e-8,
            jitter: 1e-10,
            max_jitter: 1e-6,
            conditioning_points: 20,
            steps: 100,
            amplitude: 1.0,
        }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(format!("GP config: {m}")));
        if !(self.length_scale > 0.0) {
            return bad("length scale must be positive");
        }
        if !(self.signal_variance > 0.0) {
            return bad("signal variance must be positive");
        }
        if self.noise_variance < 0.0 || !(self.jitter > 0.0) || self.max_jitter < self.jitter {
            return bad("noise must be >= 0 and 0 < jitter <= max_jitter");
        }
        if self.conditioning_points == 0 {
            return bad("need at least one conditioning point");
        }
        if self.steps < self.conditioning_points {
            return bad("steps must be at least the number of conditioning points");
        }
        if !(self.amplitude >= 0.0) {
            return bad("amplitude must be non-negative");
        }
        Ok(())
    }

    pub fn kernel(&self) -> SquaredExponential {
        SquaredExponential {
            variance: self.signal_variance,
            length_scale: self.length_scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquaredExponential {
    pub variance: f64,
    pub length_scale: f64,
}

impl SquaredExponential {
    pub fn eval(&self, a: f64, b: f64) -> f64 {
        let d = (a - b) / self.length_scale;
        self.variance * (-0.5 * d * d).exp()
    }

    fn matrix(&self, rows: &[f64], cols: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| self.eval(rows[i], cols[j]))
    }
}

/// `n` evenly spaced points on `[0, 1]` (just `0` when `n == 1`).
pub fn linspace01(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

/// Factored GP posterior at fixed query times.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    query: Vec<f64>,
    mean_map: DMatrix<f64>,
    factor: DMatrix<f64>,
    jitter_used: f64,
}

impl GpPosterior {
    /// `noise[i]` is the observation variance of conditioning point `i`.
    pub fn new(
        kernel: SquaredExponential,
        cond_times: &[f64],
        noise: &[f64],
        query: &[f64],
        jitter: f64,
        max_jitter: f64,
    ) -> Result<Self> {
        if cond_times.len() != noise.len() {
            return Err(Error::shape("one noise variance per conditioning point"));
        }
        let mut kcc = kernel.matrix(cond_times, cond_times);
        for (i, n) in noise.iter().enumerate() {
            kcc[(i, i)] += n;
        }
        let kcq = kernel.matrix(cond_times, query);
        let chol = kcc
            .cholesky()
            .ok_or_else(|| Error::Generation("conditioning covariance is not positive definite".into()))?;
        // (Kcc + N)^{-1} Kcq, n × T
        let solved = chol.solve(&kcq);
        let mean_map = solved.transpose();
        let mut cov = kernel.matrix(query, query) - kcq.transpose() * &solved;
        cov = (&cov + cov.transpose()) * 0.5;

        let eig = SymmetricEigen::new(cov);
        let min_eig = eig.eigenvalues.min();
        let mut tol = jitter;
        while min_eig < -tol {
            tol *= 10.0;
            if tol > max_jitter * (1.0 + 1e-12) {
                return Err(Error::Generation(format!(
                    "posterior covariance has eigenvalue {min_eig:e} below -{max_jitter:e}"
                )));
            }
        }
        let sqrt_vals = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        let factor = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals);
        Ok(Self {
            query: query.to_vec(),
            mean_map,
            factor,
            jitter_used: tol,
        })
    }

    pub fn query_times(&self) -> &[f64] {
        &self.query
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    pub fn mean(&self, cond_values: &[f64]) -> Vec<f64> {
        let y = DVector::from_column_slice(cond_values);
        (&self.mean_map * y).iter().copied().collect()
    }

    /// Posterior variance at each query time.
    pub fn variance(&self) -> Vec<f64> {
        self.factor.row_iter().map(|r| r.iter().map(|v| v * v).sum()).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, cond_values: &[f64], rng: &mut R) -> Vec<f64> {
        let xi = DVector::from_iterator(self.query.len(), (0..self.query.len()).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let y = DVector::from_column_slice(cond_values);
        (&self.mean_map * y + &self.factor * xi).iter().copied().collect()
    }
}

/// One posterior path conditioned on uniform draws at evenly spaced times.
pub fn sample_gp_path<R: Rng + ?Sized>(config: &GpConfig, rng: &mut R) -> Result<Vec<f64>> {
    config.validate()?;
    let cond = linspace01(config.conditioning_points);
    let post = GpPosterior::new(
        config.kernel(),
        &cond,
        &vec![config.noise_variance; cond.len()],
        &linspace01(config.steps),
        config.jitter,
        config.max_jitter,
    )?;
    let values = uniform_values(config, rng);
    Ok(post.sample(&values, rng))
}

fn uniform_values<R: Rng + ?Sized>(config: &GpConfig, rng: &mut R) -> Vec<f64> {
    (0..config.conditioning_points)
        .map(|_| {
            let u: f64 = rng.random_range(-1.0..=1.0);
            u * config.amplitude
        })
        .collect()
}

/// Three-component strain paths that start at rest.
///
/// Each component is conditioned exactly on `0` at `t = 0` and on uniform
/// draws at `k / n`, `k = 1..=n`, then scaled by `strain_amplitude`.
#[derive(Debug, Clone)]
pub struct StrainPathSampler {
    config: GpConfig,
    strain_amplitude: f64,
    posterior: GpPosterior,
}

impl StrainPathSampler {
    pub fn new(config: GpConfig, strain_amplitude: f64) -> Result<Self> {
        config.validate()?;
        if !(strain_amplitude >= 0.0) {
            return Err(Error::config("strain amplitude must be non-negative"));
        }
        let n = config.conditioning_points;
        let mut cond = vec![0.0];
        cond.extend((1..=n).map(|k| k as f64 / n as f64));
        let mut noise = vec![0.0];
        noise.extend(std::iter::repeat_n(config.noise_variance, n));
        let posterior = GpPosterior::new(
            config.kernel(),
            &cond,
            &noise,
            &linspace01(config.steps),
            config.jitter,
            config.max_jitter,
        )?;
        Ok(Self {
            config,
            strain_amplitude,
            posterior,
        })
    }

    pub fn steps(&self) -> usize {
        self.config.steps
    }

    /// `steps × 3` strain path `(ε11, ε22, ε12)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> crate::nn::Tensor2 {
        let steps = self.config.steps;
        let mut data = vec![0.0; steps * 3];
        for c in 0..3 {
            let mut values = vec![0.0];
            values.extend(uniform_values(&self.config, rng));
            let path = self.posterior.sample(&values, rng);
            for (t, v) in path.iter().enumerate() {
                data[t * 3 + c] = v * self.strain_amplitude;
            }
        }
        crate::nn::Tensor2::new(steps, 3, data).expect("sized by construction")
    }
}

/// Convenience wrapper: one strain path from a fresh sampler.
pub fn make_strain_path<R: Rng + ?Sized>(
    config: &GpConfig,
    strain_amplitude: f64,
    rng: &mut R,
) -> Result<crate::nn::Tensor2> {
    Ok(StrainPathSampler::new(*config, strain_amplitude)?.sample(rng))
}
