//! Multi-layer perceptron kernels: initialization, forward pass with an
//! exact replay cache, and reverse-mode backpropagation.
//!
//! A network is a chain of affine layers. Hidden layers apply
//! affine -> ReLU -> inverted dropout (train mode only); the final layer is
//! affine only and emits raw scores. Softmax is applied by callers, never
//! here.

use crate::error::{contract, numeric, shape, Result};
use crate::numerics::matrix::Matrix;
use crate::numerics::rng::RngState;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// One affine layer: `y = x * W^T + b` with `W` of shape `fan_out x fan_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn fan_in(&self) -> usize {
        self.weight.cols()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.rows()
    }

    pub fn param_count(&self) -> usize {
        self.weight.rows() * self.weight.cols() + self.bias.len()
    }
}

/// Parameters of a dense feed-forward network.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

impl MlpParams {
    /// Build a network for the dimension chain `dims = [in, h1, ..., out]`
    /// with Xavier-uniform weights and zero biases.
    pub fn xavier(dims: &[usize], rng: &mut RngState) -> Result<Self> {
        if dims.len() < 2 {
            return Err(contract("an MLP needs at least input and output dims"));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(contract("all layer dimensions must be >= 1"));
        }
        let layers = dims
            .windows(2)
            .map(|w| Layer {
                weight: xavier_init(w[0], w[1], rng),
                bias: vec![0.0; w[1]],
            })
            .collect();
        Ok(MlpParams { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Same topology, all parameters zero. Used as a gradient container.
    pub fn zeros_like(&self) -> Self {
        MlpParams {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weight: Matrix::zeros(l.weight.rows(), l.weight.cols()),
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    /// `self += s * other`, entry-wise over all parameters.
    pub fn add_scaled(&mut self, other: &MlpParams, s: f64) {
        assert_eq!(self.layers.len(), other.layers.len());
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight.add_scaled(&b.weight, s);
            for (x, &y) in a.bias.iter_mut().zip(&b.bias) {
                *x += s * y;
            }
        }
    }

    /// Append all parameters to `out` in layer order, weights row-major
    /// before biases. The order is the canonical flat layout used by the
    /// optimizer and the checkpoint format.
    pub fn push_flat(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(l.weight.data());
            out.extend_from_slice(&l.bias);
        }
    }

    /// Read parameters back from the canonical flat layout.
    pub fn read_flat(&mut self, src: &[f64], pos: &mut usize) {
        for l in &mut self.layers {
            let nw = l.weight.data().len();
            l.weight
                .data_mut()
                .copy_from_slice(&src[*pos..*pos + nw]);
            *pos += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&src[*pos..*pos + nb]);
            *pos += nb;
        }
    }

    /// Check that adjacent layer dimensions chain.
    pub fn validate_chain(&self) -> Result<()> {
        for (k, pair) in self.layers.windows(2).enumerate() {
            if pair[0].fan_out() != pair[1].fan_in() {
                return Err(shape(format!(
                    "layer {k} fan_out {} does not chain into layer {} fan_in {}",
                    pair[0].fan_out(),
                    k + 1,
                    pair[1].fan_in()
                )));
            }
        }
        for (k, l) in self.layers.iter().enumerate() {
            if l.bias.len() != l.fan_out() {
                return Err(shape(format!(
                    "layer {k} bias length {} does not match fan_out {}",
                    l.bias.len(),
                    l.fan_out()
                )));
            }
        }
        Ok(())
    }
}

/// Xavier (Glorot) uniform initialization: entries i.i.d. uniform on
/// `[-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))]`, returned as a
/// `fan_out x fan_in` weight matrix. Draws are row-major.
pub fn xavier_init(fan_in: usize, fan_out: usize, rng: &mut RngState) -> Matrix {
    assert!(fan_in >= 1 && fan_out >= 1, "fan_in and fan_out must be >= 1");
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut m = Matrix::zeros(fan_out, fan_in);
    for v in m.data_mut() {
        *v = (2.0 * rng.next_uniform() - 1.0) * bound;
    }
    m
}

/// Inverted dropout mask: each entry is independently `0` with probability
/// `rate` and `1/(1-rate)` otherwise.
pub fn dropout_mask(rows: usize, cols: usize, rate: f64, rng: &mut RngState) -> Result<Matrix> {
    if !(0.0..1.0).contains(&rate) {
        return Err(contract(format!("dropout rate {rate} must be in [0, 1)")));
    }
    let keep_scale = 1.0 / (1.0 - rate);
    let mut m = Matrix::zeros(rows, cols);
    for v in m.data_mut() {
        *v = if rng.next_uniform() < rate { 0.0 } else { keep_scale };
    }
    Ok(m)
}

/// Numerically stable softmax over a logit vector.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Row-wise softmax.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(logits.rows(), logits.cols());
    for r in 0..logits.rows() {
        out.row_mut(r).copy_from_slice(&softmax(logits.row(r)));
    }
    out
}

/// Forward record sufficient for exact reverse-mode replay.
#[derive(Debug, Clone)]
pub struct MlpCache {
    mode: Mode,
    /// Input to each affine layer; `inputs[0]` is the network input.
    inputs: Vec<Matrix>,
    /// Pre-activations of hidden layers (for the ReLU gate).
    pre_acts: Vec<Matrix>,
    /// Dropout masks per hidden layer, present in train mode with rate > 0.
    masks: Vec<Option<Matrix>>,
    output_rows: usize,
    output_cols: usize,
}

/// Run the network on a batch `x` (one sample per row).
///
/// Returns the output batch and a cache for [`mlp_backprop`]. In train mode
/// each hidden activation is multiplied by a fresh inverted-dropout mask
/// drawn from `rng` (no draws happen when `dropout_rate == 0` or in eval
/// mode, so eval never consumes randomness).
pub fn mlp_apply(
    params: &MlpParams,
    x: &Matrix,
    mode: Mode,
    dropout_rate: f64,
    rng: &mut RngState,
) -> Result<(Matrix, MlpCache)> {
    if x.cols() != params.input_dim() {
        return Err(shape(format!(
            "input has {} columns but the first layer expects {}",
            x.cols(),
            params.input_dim()
        )));
    }
    if !(0.0..1.0).contains(&dropout_rate) {
        return Err(contract(format!(
            "dropout rate {dropout_rate} must be in [0, 1)"
        )));
    }
    if !x.all_finite() {
        return Err(numeric("mlp_apply input contains non-finite entries"));
    }
    params.validate_chain()?;

    let n_layers = params.layers.len();
    let mut inputs = Vec::with_capacity(n_layers);
    let mut pre_acts = Vec::with_capacity(n_layers.saturating_sub(1));
    let mut masks = Vec::with_capacity(n_layers.saturating_sub(1));

    let mut h = x.clone();
    for (k, layer) in params.layers.iter().enumerate() {
        inputs.push(h.clone());
        let mut z = h.matmul_transpose_rhs(&layer.weight);
        z.add_row_vector(&layer.bias);
        if k + 1 < n_layers {
            let a = z.map(|v| if v > 0.0 { v } else { 0.0 });
            pre_acts.push(z);
            let dropped = if mode == Mode::Train && dropout_rate > 0.0 {
                let mask = dropout_mask(a.rows(), a.cols(), dropout_rate, rng)?;
                let mut d = a;
                d.hadamard_assign(&mask);
                masks.push(Some(mask));
                d
            } else {
                masks.push(None);
                a
            };
            h = dropped;
        } else {
            h = z;
        }
    }
    if !h.all_finite() {
        return Err(numeric("mlp_apply produced non-finite outputs"));
    }
    let cache = MlpCache {
        mode,
        inputs,
        pre_acts,
        masks,
        output_rows: h.rows(),
        output_cols: h.cols(),
    };
    Ok((h, cache))
}

/// Exact gradients of the cached forward computation.
///
/// Returns parameter gradients (same shapes as `params`) and the gradient
/// with respect to the network input. Train-mode dropout masks recorded in
/// the cache are replayed.
pub fn mlp_backprop(
    params: &MlpParams,
    cache: &MlpCache,
    grad_output: &Matrix,
) -> Result<(MlpParams, Matrix)> {
    let n_layers = params.layers.len();
    if cache.inputs.len() != n_layers {
        return Err(contract(format!(
            "cache records {} layers but params have {}",
            cache.inputs.len(),
            n_layers
        )));
    }
    if grad_output.rows() != cache.output_rows || grad_output.cols() != cache.output_cols {
        return Err(contract(format!(
            "grad_output is {}x{} but the cached output is {}x{}",
            grad_output.rows(),
            grad_output.cols(),
            cache.output_rows,
            cache.output_cols
        )));
    }
    for (k, layer) in params.layers.iter().enumerate() {
        if cache.inputs[k].cols() != layer.fan_in() {
            return Err(contract(format!(
                "cached input {k} has {} columns but layer expects {}",
                cache.inputs[k].cols(),
                layer.fan_in()
            )));
        }
    }

    let mut grads = params.zeros_like();
    let mut g = grad_output.clone();
    for k in (0..n_layers).rev() {
        let layer = &params.layers[k];
        grads.layers[k].weight = g.matmul_transpose_lhs(&cache.inputs[k]);
        grads.layers[k].bias = g.col_sums();
        let mut gx = g.matmul(&layer.weight);
        if k > 0 {
            // Back through dropout and ReLU of the previous hidden layer.
            if cache.mode == Mode::Train {
                if let Some(mask) = &cache.masks[k - 1] {
                    gx.hadamard_assign(mask);
                }
            }
            let gate = cache.pre_acts[k - 1].map(|v| if v > 0.0 { 1.0 } else { 0.0 });
            gx.hadamard_assign(&gate);
        }
        g = gx;
    }
    Ok((grads, g))
}
