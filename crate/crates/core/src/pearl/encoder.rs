//! Context encoder: each transition yields a Gaussian factor, the posterior is
//! their product.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::envs::Transition;
use crate::nn::{ForwardCache, Mlp, Tensor};
use crate::Result;

/// Diagonal Gaussian over the latent task embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl GaussianPosterior {
    /// The unit prior `N(0, I)`.
    pub fn prior(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            var: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn sample_with(&self, noise: &[f64]) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.var)
            .zip(noise)
            .map(|((m, v), n)| m + v.sqrt() * n)
            .collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let noise: Vec<f64> = (0..self.dim()).map(|_| rng.sample(StandardNormal)).collect();
        self.sample_with(&noise)
    }

    /// `KL(self || N(0, I))`.
    pub fn kl_to_prior(&self) -> f64 {
        self.mean
            .iter()
            .zip(&self.var)
            .map(|(m, v)| 0.5 * (v + m * m - 1.0 - v.ln()))
            .sum()
    }

    /// Product of diagonal Gaussian factors given row-major `[n, dim]` means and
    /// log-variances. Precisions add; the mean is precision-weighted.
    ///
    /// Per-dimension sums run over the terms in sorted order, so the result is
    /// bit-identical under any permutation of the factors.
    pub fn product_of_factors(means: &[f64], log_vars: &[f64], dim: usize) -> Self {
        let n = means.len() / dim;
        let mut mean = vec![0.0; dim];
        let mut var = vec![0.0; dim];
        let mut precisions = Vec::with_capacity(n);
        let mut weighted = Vec::with_capacity(n);
        for d in 0..dim {
            precisions.clear();
            weighted.clear();
            for j in 0..n {
                let p = (-log_vars[j * dim + d]).exp();
                precisions.push(p);
                weighted.push(means[j * dim + d] * p);
            }
            precisions.sort_by(f64::total_cmp);
            weighted.sort_by(f64::total_cmp);
            let p_sum: f64 = precisions.iter().sum();
            let w_sum: f64 = weighted.iter().sum();
            var[d] = 1.0 / p_sum;
            mean[d] = w_sum * var[d];
        }
        Self { mean, var }
    }
}

/// Encoder input row: `[s, a / action_bound, r, s']`.
pub fn context_row(t: &Transition, action_bound: f64, out: &mut Vec<f64>) {
    out.extend_from_slice(&t.state);
    out.extend(t.action.iter().map(|a| a / action_bound));
    out.push(t.reward);
    out.extend_from_slice(&t.next_state);
}

pub fn context_tensor(context: &[Transition], action_bound: f64, width: usize) -> Result<Tensor> {
    let mut data = Vec::with_capacity(context.len() * width);
    for t in context {
        context_row(t, action_bound, &mut data);
    }
    Tensor::matrix(context.len(), width, data)
}

/// Posterior `q(z | c)`; the unit prior when `context` is empty.
pub fn encode_context(encoder: &Mlp, context: &[Transition], action_bound: f64) -> Result<GaussianPosterior> {
    let latent = encoder.output_width() / 2;
    match encode_context_cached(encoder, context, action_bound)? {
        Some(enc) => Ok(enc.posterior),
        None => Ok(GaussianPosterior::prior(latent)),
    }
}

/// Everything the reverse pass through the product of factors needs.
pub(crate) struct ContextEncoding {
    pub posterior: GaussianPosterior,
    pub cache: ForwardCache,
    /// Raw encoder output `[n, 2 * latent]` (log-variances already clamped).
    pub factors: Tensor,
}

pub(crate) fn encode_context_cached(encoder: &Mlp, context: &[Transition], action_bound: f64) -> Result<Option<ContextEncoding>> {
    if context.is_empty() {
        return Ok(None);
    }
    let input = context_tensor(context, action_bound, encoder.input_width())?;
    let (factors, cache) = encoder.forward_cached(&input)?;
    let dim = encoder.output_width() / 2;
    let n = context.len();
    let mut means = Vec::with_capacity(n * dim);
    let mut log_vars = Vec::with_capacity(n * dim);
    for j in 0..n {
        let row = factors.row(j);
        means.extend_from_slice(&row[..dim]);
        log_vars.extend_from_slice(&row[dim..]);
    }
    let posterior = GaussianPosterior::product_of_factors(&means, &log_vars, dim);
    Ok(Some(ContextEncoding {
        posterior,
        cache,
        factors,
    }))
}

impl ContextEncoding {
    /// Map `(dL/d mean, dL/d var)` of the posterior to `dL/d(encoder output)`.
    ///
    /// With factor variances `v_j = exp(lv_j)`, `var = 1 / sum(1 / v_j)` and
    /// `mean = var * sum(mu_j / v_j)`:
    ///
    /// - `d mean / d mu_j = var / v_j`
    /// - `d mean / d lv_j = (mean - mu_j) var / v_j`
    /// - `d var / d lv_j = var^2 / v_j`
    pub fn backward(&self, d_mean: &[f64], d_var: &[f64]) -> Tensor {
        let dim = self.posterior.dim();
        let n = self.factors.rows();
        let mut grad = vec![0.0; n * 2 * dim];
        for j in 0..n {
            let row = self.factors.row(j);
            for d in 0..dim {
                let mu = row[d];
                let v = row[dim + d].exp();
                let var = self.posterior.var[d];
                let mean = self.posterior.mean[d];
                grad[j * 2 * dim + d] = d_mean[d] * var / v;
                grad[j * 2 * dim + dim + d] = (d_mean[d] * (mean - mu) * var + d_var[d] * var * var) / v;
            }
        }
        Tensor::matrix(n, 2 * dim, grad).expect("gradient shape matches factors")
    }
}
