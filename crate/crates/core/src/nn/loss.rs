use crate::error::{Error, Result};
use crate::nn::tensor::Tensor2;

/// Mean squared error over all entries and its gradient with respect to `pred`.
pub fn mse_loss(pred: &Tensor2, target: &Tensor2) -> Result<(f64, Tensor2)> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(format!(
            "prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let n = pred.data().len();
    if n == 0 {
        return Err(Error::Empty("mse of an empty tensor".into()));
    }
    let scale = 2.0 / n as f64;
    let mut sum = 0.0;
    let mut grad = Vec::with_capacity(n);
    for (p, t) in pred.data().iter().zip(target.data()) {
        let d = p - t;
        sum += d * d;
        grad.push(scale * d);
    }
    let grad = Tensor2::new(pred.rows(), pred.cols(), grad)?;
    Ok((sum / n as f64, grad))
}
