use rand::Rng;

use super::matrix::{axpy, dot};
use super::{Matrix, NnError, LOG_STD_MAX, LOG_STD_MIN};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
}

/// What the last layer emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputActivation {
    /// Raw affine output (critics).
    Identity,
    /// First half is the Gaussian mean, second half the log-std clamped to
    /// `[LOG_STD_MIN, LOG_STD_MAX]`. Clamped entries pass no gradient.
    TanhGaussianHead,
}

#[derive(Debug, Clone, Copy)]
struct LayerLayout {
    fan_in: usize,
    fan_out: usize,
    weights: usize,
    bias: usize,
}

#[derive(Debug, Clone)]
struct ForwardCache {
    /// `activations[0]` is the input, `activations[l + 1]` the output of layer `l`.
    activations: Vec<Matrix>,
    /// Pre-clamp head output, kept to mask gradients of clamped log-std entries.
    raw_head: Option<Matrix>,
}

/// Gradients from one backward pass.
#[derive(Debug, Clone)]
pub struct Gradients {
    /// Aligned with [`Mlp::params`].
    pub params: Vec<f64>,
    /// Gradient with respect to the cached input batch.
    pub input: Matrix,
}

/// Fully connected network with ReLU hidden layers.
///
/// Parameters live in one flat vector in canonical order: for each layer,
/// the `fan_out x fan_in` weight matrix row-major, then its bias vector.
#[derive(Debug, Clone)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    layout: Vec<LayerLayout>,
    params: Vec<f64>,
    activation: Activation,
    output_activation: OutputActivation,
    cache: Option<ForwardCache>,
}

impl Mlp {
    /// All-zero network.
    pub fn zeros(layer_sizes: &[usize], output_activation: OutputActivation) -> Result<Self, NnError> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(NnError::Architecture(format!(
                "need at least two non-zero layer sizes, got {layer_sizes:?}"
            )));
        }
        let out = *layer_sizes.last().unwrap();
        if output_activation == OutputActivation::TanhGaussianHead && !out.is_multiple_of(2) {
            return Err(NnError::Architecture(format!(
                "gaussian head needs an even output size, got {out}"
            )));
        }
        let mut layout = Vec::with_capacity(layer_sizes.len() - 1);
        let mut offset = 0;
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let weights = offset;
            let bias = weights + fan_in * fan_out;
            offset = bias + fan_out;
            layout.push(LayerLayout {
                fan_in,
                fan_out,
                weights,
                bias,
            });
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            layout,
            params: vec![0.0; offset],
            activation: Activation::Relu,
            output_activation,
            cache: None,
        })
    }

    /// Uniform init in `±1/sqrt(fan_in)` for weights and biases.
    pub fn new<R: Rng + ?Sized>(
        layer_sizes: &[usize],
        output_activation: OutputActivation,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        let mut net = Self::zeros(layer_sizes, output_activation)?;
        for l in net.layout.clone() {
            let bound = 1.0 / (l.fan_in as f64).sqrt();
            for p in &mut net.params[l.weights..l.bias + l.fan_out] {
                *p = rng.gen_range(-bound..bound);
            }
        }
        Ok(net)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output_activation
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<(), NnError> {
        if params.len() != self.params.len() {
            return Err(NnError::Shape {
                expected: self.params.len(),
                got: params.len(),
            });
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    pub fn num_layers(&self) -> usize {
        self.layout.len()
    }

    /// Weight matrix of layer `l`, shape `fan_out x fan_in`.
    pub fn weights(&self, l: usize) -> Matrix {
        let ll = self.layout[l];
        Matrix::from_vec(
            ll.fan_out,
            ll.fan_in,
            self.params[ll.weights..ll.bias].to_vec(),
        )
        .expect("layout is consistent")
    }

    pub fn bias(&self, l: usize) -> &[f64] {
        let ll = self.layout[l];
        &self.params[ll.bias..ll.bias + ll.fan_out]
    }

    pub fn weights_mut(&mut self, l: usize) -> &mut [f64] {
        let ll = self.layout[l];
        &mut self.params[ll.weights..ll.bias]
    }

    pub fn bias_mut(&mut self, l: usize) -> &mut [f64] {
        let ll = self.layout[l];
        &mut self.params[ll.bias..ll.bias + ll.fan_out]
    }

    /// Single-sample forward pass; caches activations for [`Mlp::backward`].
    pub fn forward(&mut self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        let x = Matrix::from_vec(1, input.len(), input.to_vec())?;
        Ok(self.forward_batch(&x)?.into_vec())
    }

    /// Single-sample backward pass against the cached forward.
    pub fn backward(&self, upstream_grad: &[f64]) -> Result<Vec<f64>, NnError> {
        let g = Matrix::from_vec(1, upstream_grad.len(), upstream_grad.to_vec())?;
        Ok(self.backward_batch(&g)?.params)
    }

    /// Batched forward pass (one sample per row), caching activations.
    pub fn forward_batch(&mut self, input: &Matrix) -> Result<Matrix, NnError> {
        let (out, cache) = self.run(input, true)?;
        self.cache = cache;
        Ok(out)
    }

    /// Batched forward pass without touching the cache.
    pub fn predict_batch(&self, input: &Matrix) -> Result<Matrix, NnError> {
        Ok(self.run(input, false)?.0)
    }

    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        let x = Matrix::from_vec(1, input.len(), input.to_vec())?;
        Ok(self.predict_batch(&x)?.into_vec())
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }

    fn run(&self, input: &Matrix, keep: bool) -> Result<(Matrix, Option<ForwardCache>), NnError> {
        if input.cols() != self.input_dim() {
            return Err(NnError::InputShape {
                expected: self.input_dim(),
                got: input.cols(),
            });
        }
        let batch = input.rows();
        let last = self.layout.len() - 1;
        let mut activations = Vec::with_capacity(if keep { self.layout.len() + 1 } else { 0 });
        let mut current = input.clone();
        for (l, ll) in self.layout.iter().enumerate() {
            let w = &self.params[ll.weights..ll.bias];
            let b = &self.params[ll.bias..ll.bias + ll.fan_out];
            let mut next = Matrix::zeros(batch, ll.fan_out);
            for r in 0..batch {
                let x = current.row(r);
                let z = next.row_mut(r);
                for o in 0..ll.fan_out {
                    let mut v = dot(&w[o * ll.fan_in..(o + 1) * ll.fan_in], x) + b[o];
                    if l < last {
                        match self.activation {
                            // NaN must survive so corrupted weights surface as numeric errors
                            Activation::Relu => v = if v > 0.0 || v.is_nan() { v } else { 0.0 },
                        }
                    }
                    z[o] = v;
                }
            }
            if keep {
                activations.push(current);
            }
            current = next;
        }
        let mut raw_head = None;
        if self.output_activation == OutputActivation::TanhGaussianHead {
            let half = self.output_dim() / 2;
            if keep {
                raw_head = Some(current.clone());
            }
            for r in 0..batch {
                for v in &mut current.row_mut(r)[half..] {
                    *v = v.clamp(LOG_STD_MIN, LOG_STD_MAX);
                }
            }
        }
        if !current.is_finite() {
            return Err(NnError::NonFinite("forward output".into()));
        }
        let cache = keep.then(|| {
            activations.push(current.clone());
            ForwardCache {
                activations,
                raw_head,
            }
        });
        Ok((current, cache))
    }

    /// Batched backward pass: parameter gradients summed over the batch,
    /// plus per-row input gradients.
    pub fn backward_batch(&self, upstream: &Matrix) -> Result<Gradients, NnError> {
        self.backprop(upstream, true)
    }

    /// Input gradients only; skips the parameter-gradient work.
    pub fn backward_input(&self, upstream: &Matrix) -> Result<Matrix, NnError> {
        Ok(self.backprop(upstream, false)?.input)
    }

    fn backprop(&self, upstream: &Matrix, want_params: bool) -> Result<Gradients, NnError> {
        let cache = self.cache.as_ref().ok_or(NnError::NoCachedForward)?;
        let batch = cache.activations[0].rows();
        if upstream.rows() != batch || upstream.cols() != self.output_dim() {
            return Err(NnError::Shape {
                expected: batch * self.output_dim(),
                got: upstream.rows() * upstream.cols(),
            });
        }
        let mut delta = upstream.clone();
        if let Some(raw) = &cache.raw_head {
            let half = self.output_dim() / 2;
            for r in 0..batch {
                let raw_row = raw.row(r);
                let d = delta.row_mut(r);
                for c in half..d.len() {
                    if raw_row[c] < LOG_STD_MIN || raw_row[c] > LOG_STD_MAX {
                        d[c] = 0.0;
                    }
                }
            }
        }
        let mut grads = vec![0.0; if want_params { self.params.len() } else { 0 }];
        for (l, ll) in self.layout.iter().enumerate().rev() {
            let x = &cache.activations[l];
            let w = &self.params[ll.weights..ll.bias];
            if want_params {
                let (gw, gb) = grads[ll.weights..ll.bias + ll.fan_out].split_at_mut(ll.fan_in * ll.fan_out);
                for r in 0..batch {
                    let d = delta.row(r);
                    let xr = x.row(r);
                    for o in 0..ll.fan_out {
                        if d[o] != 0.0 {
                            axpy(d[o], xr, &mut gw[o * ll.fan_in..(o + 1) * ll.fan_in]);
                        }
                        gb[o] += d[o];
                    }
                }
            }
            let mut prev = Matrix::zeros(batch, ll.fan_in);
            for r in 0..batch {
                let d = delta.row(r);
                let p = prev.row_mut(r);
                for o in 0..ll.fan_out {
                    if d[o] != 0.0 {
                        axpy(d[o], &w[o * ll.fan_in..(o + 1) * ll.fan_in], p);
                    }
                }
                if l > 0 {
                    // ReLU: activations[l] is the post-activation of layer l - 1.
                    for (pi, &a) in p.iter_mut().zip(x.row(r)) {
                        if a <= 0.0 {
                            *pi = 0.0;
                        }
                    }
                }
            }
            delta = prev;
        }
        Ok(Gradients {
            params: grads,
            input: delta,
        })
    }
}
