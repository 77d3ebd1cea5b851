use super::tensor::Tensor;
use crate::{Error, Result};

fn check_same(a: &Tensor, b: &Tensor, context: &'static str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch {
            context,
            expected: a.data().len(),
            actual: b.data().len(),
        });
    }
    Ok(())
}

/// Reparameterized draw `mean + exp(log_var / 2) * noise`.
pub fn gaussian_rsample(mean: &Tensor, log_var: &Tensor, noise: &Tensor) -> Result<Tensor> {
    check_same(mean, log_var, "gaussian_rsample log_var")?;
    check_same(mean, noise, "gaussian_rsample noise")?;
    let data = mean
        .data()
        .iter()
        .zip(log_var.data())
        .zip(noise.data())
        .map(|((m, lv), n)| m + (0.5 * lv).exp() * n)
        .collect();
    Tensor::new(mean.shape().to_vec(), data)
}

/// Pull `dL/d(sample)` back to `(dL/d mean, dL/d log_var)`.
pub fn gaussian_rsample_backward(log_var: &Tensor, noise: &Tensor, sample_grad: &Tensor) -> Result<(Tensor, Tensor)> {
    check_same(log_var, noise, "gaussian_rsample_backward noise")?;
    check_same(log_var, sample_grad, "gaussian_rsample_backward grad")?;
    let d_lv = sample_grad
        .data()
        .iter()
        .zip(log_var.data())
        .zip(noise.data())
        .map(|((g, lv), n)| g * 0.5 * (0.5 * lv).exp() * n)
        .collect();
    Ok((sample_grad.clone(), Tensor::new(log_var.shape().to_vec(), d_lv)?))
}
