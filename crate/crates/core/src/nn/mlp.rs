//! Dense feed-forward network with a hand-written reverse pass.
//!
//! Parameters live in one flat buffer (`[W0, b0, W1, b1, ...]`, each `W` row-major
//! with shape `(fan_out, fan_in)`), so optimizers, target blending and
//! checkpointing all operate on a single slice.

use rand::Rng;

use super::gemm;
use super::tensor::Tensor;
use crate::{Error, Result};

/// Log-variance outputs of a Gaussian head are clamped to this interval.
pub const LOG_VAR_MIN: f64 = -10.0;
pub const LOG_VAR_MAX: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// How the final affine layer is read out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    Identity,
    /// Output is `[mean | log_var]`; the log-variance half is clamped to
    /// `[LOG_VAR_MIN, LOG_VAR_MAX]`.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct LayerSpan {
    w: usize,
    b: usize,
    fan_in: usize,
    fan_out: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    widths: Vec<usize>,
    hidden: Activation,
    head: Head,
    params: Vec<f64>,
    spans: Vec<LayerSpan>,
}

/// Intermediate values kept by [`Mlp::forward_cached`] for the reverse pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    /// `acts[0]` is the input, `acts[l]` the output of layer `l` (pre-head for the last).
    acts: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: Vec<f64>,
    pub input: Tensor,
}

impl Mlp {
    /// Uniform fan-in initialization, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` for weights and biases.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], hidden: Activation, head: Head, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(widths, hidden, head)?;
        for span in net.spans.clone() {
            let bound = 1.0 / (span.fan_in as f64).sqrt();
            for p in &mut net.params[span.w..span.b + span.fan_out] {
                *p = rng.random_range(-bound..bound);
            }
        }
        Ok(net)
    }

    pub fn zeros(widths: &[usize], hidden: Activation, head: Head) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::invalid("an MLP needs at least input and output widths"));
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        let out = *widths.last().unwrap();
        if head == Head::Gaussian && out % 2 != 0 {
            return Err(Error::invalid("Gaussian head needs an even output width"));
        }
        let mut spans = Vec::with_capacity(widths.len() - 1);
        let mut offset = 0;
        for pair in widths.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let w = offset;
            let b = w + fan_in * fan_out;
            offset = b + fan_out;
            spans.push(LayerSpan { w, b, fan_in, fan_out });
        }
        Ok(Self {
            widths: widths.to_vec(),
            hidden,
            head,
            params: vec![0.0; offset],
            spans,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// `(weights, biases)` of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let s = self.spans[l];
        (&self.params[s.w..s.b], &self.params[s.b..s.b + s.fan_out])
    }

    pub fn layer_mut(&mut self, l: usize) -> (&mut [f64], &mut [f64]) {
        let s = self.spans[l];
        let (w, b) = self.params[s.w..s.b + s.fan_out].split_at_mut(s.fan_in * s.fan_out);
        (w, b)
    }

    pub fn num_layers(&self) -> usize {
        self.spans.len()
    }

    /// Shapes of every parameter tensor in storage order.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        self.spans
            .iter()
            .flat_map(|s| [vec![s.fan_out, s.fan_in], vec![s.fan_out]])
            .collect()
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        if input.cols() != self.input_width() {
            return Err(Error::DimensionMismatch {
                context: "Mlp input",
                expected: self.input_width(),
                actual: input.cols(),
            });
        }
        Ok(())
    }

    fn output_shape(&self, input: &Tensor) -> Vec<usize> {
        let mut shape = input.shape().to_vec();
        match shape.last_mut() {
            Some(last) => *last = self.output_width(),
            None => shape.push(self.output_width()),
        }
        shape
    }

    fn apply_head(&self, raw: &[f64]) -> Vec<f64> {
        match self.head {
            Head::Identity => raw.to_vec(),
            Head::Gaussian => {
                let out = self.output_width();
                let half = out / 2;
                let mut y = raw.to_vec();
                for row in y.chunks_mut(out) {
                    for lv in &mut row[half..] {
                        *lv = lv.clamp(LOG_VAR_MIN, LOG_VAR_MAX);
                    }
                }
                y
            }
        }
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let (out, _) = self.forward_cached(input)?;
        Ok(out)
    }

    pub fn forward_cached(&self, input: &Tensor) -> Result<(Tensor, ForwardCache)> {
        self.check_input(input)?;
        let batch = input.rows();
        let mut acts = Vec::with_capacity(self.spans.len() + 1);
        acts.push(input.data().to_vec());
        let last = self.spans.len() - 1;
        for (l, s) in self.spans.iter().enumerate() {
            let x = &acts[l];
            let bias = &self.params[s.b..s.b + s.fan_out];
            let mut y = Vec::with_capacity(batch * s.fan_out);
            for _ in 0..batch {
                y.extend_from_slice(bias);
            }
            gemm::x_wt(x, &self.params[s.w..s.b], &mut y, batch, s.fan_in, s.fan_out, 1.0);
            if l < last {
                let act = self.hidden;
                y.iter_mut().for_each(|v| *v = act.apply(*v));
            }
            acts.push(y);
        }
        let out = self.apply_head(acts.last().unwrap());
        let tensor = Tensor::new(self.output_shape(input), out)?;
        Ok((tensor, ForwardCache { batch, acts }))
    }

    /// Reverse pass from a cached forward. `output_grad` is dL/d(output) with the
    /// same shape as the forward output.
    pub fn backward_cached(&self, cache: &ForwardCache, output_grad: &Tensor) -> Result<Gradients> {
        let out_w = self.output_width();
        if output_grad.cols() != out_w {
            return Err(Error::DimensionMismatch {
                context: "Mlp output gradient width",
                expected: out_w,
                actual: output_grad.cols(),
            });
        }
        if output_grad.rows() != cache.batch {
            return Err(Error::DimensionMismatch {
                context: "Mlp output gradient batch",
                expected: cache.batch,
                actual: output_grad.rows(),
            });
        }
        let batch = cache.batch;
        let mut grads = vec![0.0; self.params.len()];
        let mut dz = output_grad.data().to_vec();
        if self.head == Head::Gaussian {
            let half = out_w / 2;
            let raw = cache.acts.last().unwrap();
            for (g_row, r_row) in dz.chunks_mut(out_w).zip(raw.chunks(out_w)) {
                for (g, r) in g_row[half..].iter_mut().zip(&r_row[half..]) {
                    if *r < LOG_VAR_MIN || *r > LOG_VAR_MAX {
                        *g = 0.0;
                    }
                }
            }
        }

        for l in (0..self.spans.len()).rev() {
            let s = self.spans[l];
            let x = &cache.acts[l];
            gemm::dzt_x(&dz, x, &mut grads[s.w..s.b], batch, s.fan_in, s.fan_out);
            let gb = &mut grads[s.b..s.b + s.fan_out];
            for row in dz.chunks(s.fan_out) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
            let mut dx = vec![0.0; batch * s.fan_in];
            gemm::dz_w(&dz, &self.params[s.w..s.b], &mut dx, batch, s.fan_in, s.fan_out);
            if l > 0 {
                let act = self.hidden;
                for (d, y) in dx.iter_mut().zip(x) {
                    *d *= act.derivative_from_output(*y);
                }
            }
            dz = dx;
        }

        let mut in_shape = output_grad.shape().to_vec();
        *in_shape.last_mut().unwrap() = self.input_width();
        Ok(Gradients {
            params: grads,
            input: Tensor::new(in_shape, dz)?,
        })
    }

    /// Reverse pass that recomputes the forward internally.
    pub fn backward(&self, input: &Tensor, output_grad: &Tensor) -> Result<Gradients> {
        let (_, cache) = self.forward_cached(input)?;
        self.backward_cached(&cache, output_grad)
    }

    /// `self <- (1 - coef) * self + coef * source`, elementwise over all parameters.
    pub fn blend_from(&mut self, source: &Mlp, coef: f64) -> Result<()> {
        if source.widths != self.widths {
            return Err(Error::invalid("blend_from: architectures differ"));
        }
        for (t, s) in self.params.iter_mut().zip(&source.params) {
            *t = (1.0 - coef) * *t + coef * s;
        }
        Ok(())
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                context: "Mlp::set_params",
                expected: self.params.len(),
                actual: params.len(),
            });
        }
        self.params.copy_from_slice(params);
        Ok(())
    }
}
