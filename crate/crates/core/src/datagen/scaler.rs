use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor2;

/// Per-column standardization pooled over every row of every path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Columns whose spread falls below this are left unscaled.
const MIN_STD: f64 = 1e-12;

impl StandardScaler {
    pub fn identity(cols: usize) -> Self {
        Self {
            mean: vec![0.0; cols],
            std: vec![1.0; cols],
        }
    }

    /// Population mean and standard deviation of each column.
    pub fn fit<'a>(paths: impl IntoIterator<Item = &'a Tensor2>) -> Result<Self> {
        let paths: Vec<&Tensor2> = paths.into_iter().collect();
        let cols = paths
            .first()
            .ok_or_else(|| Error::Empty("cannot fit a scaler on zero paths".into()))?
            .cols();
        let mut n = 0usize;
        let mut sum = vec![0.0; cols];
        for p in &paths {
            if p.cols() != cols {
                return Err(Error::shape("paths disagree on column count"));
            }
            for r in 0..p.rows() {
                for (s, v) in sum.iter_mut().zip(p.row(r)) {
                    *s += v;
                }
            }
            n += p.rows();
        }
        if n == 0 {
            return Err(Error::Empty("cannot fit a scaler on empty paths".into()));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let mut var = vec![0.0; cols];
        for p in &paths {
            for r in 0..p.rows() {
                for ((acc, v), m) in var.iter_mut().zip(p.row(r)).zip(&mean) {
                    *acc += (v - m) * (v - m);
                }
            }
        }
        let std = var
            .iter()
            .map(|v| {
                let s = (v / n as f64).sqrt();
                if s > MIN_STD {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn cols(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, x: &Tensor2) -> Tensor2 {
        Tensor2::from_fn(x.rows(), x.cols(), |r, c| (x.get(r, c) - self.mean[c]) / self.std[c])
    }

    pub fn inverse(&self, x: &Tensor2) -> Tensor2 {
        Tensor2::from_fn(x.rows(), x.cols(), |r, c| x.get(r, c) * self.std[c] + self.mean[c])
    }
}
