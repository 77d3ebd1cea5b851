//! Small dense-network engine: row-major tensors, MLPs with an explicit
//! reverse pass, Adam, and reparameterized Gaussian sampling.

mod adam;
mod gaussian;
mod gemm;
pub mod io;
mod mlp;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use gaussian::{gaussian_rsample, gaussian_rsample_backward};
pub use mlp::{Activation, ForwardCache, Gradients, Head, Mlp, LOG_VAR_MAX, LOG_VAR_MIN};
pub use tensor::Tensor;

/// `|a - b| / max(|a|, |b|, floor)`; the floor keeps near-zero pairs from
/// blowing up the ratio.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
