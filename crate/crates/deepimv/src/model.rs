//! The multi-view network: per-view stochastic encoders with Gaussian
//! heads, expert fusion into a joint posterior, per-view predictors, the
//! multi-view predictor, and checkpoint serialization.
//!
//! Missing views are handled by gathering: each encoder only ever sees the
//! rows of samples that observe its view, so the feature content of masked
//! views is never read anywhere in the forward or backward path.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{contract, load, shape, Error, Result};
use crate::gaussian::{
    clamp_log_var, moe_combine, poe_combine, select_component, DiagGaussian, GaussianMixture,
};
use crate::numerics::{
    dropout_mask, mlp_apply, mlp_backprop, softmax_rows, Matrix, MlpCache, MlpParams, Mode,
    RngState,
};

/// How marginal posteriors are fused into the joint posterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fusion {
    Poe,
    Moe,
}

impl std::str::FromStr for Fusion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "poe" => Ok(Fusion::Poe),
            "moe" => Ok(Fusion::Moe),
            other => Err(contract(format!("unknown fusion '{other}' (poe|moe)"))),
        }
    }
}

impl std::fmt::Display for Fusion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Fusion::Poe => write!(f, "poe"),
            Fusion::Moe => write!(f, "moe"),
        }
    }
}

/// Per-sample view availability: `true` means the view is observed.
/// Every sample must observe at least one view.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewMask {
    n_samples: usize,
    n_views: usize,
    data: Vec<bool>,
}

impl ViewMask {
    pub fn new(n_samples: usize, n_views: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != n_samples * n_views {
            return Err(shape(format!(
                "mask has {} entries, expected {n_samples}x{n_views}",
                data.len()
            )));
        }
        let mask = ViewMask {
            n_samples,
            n_views,
            data,
        };
        for n in 0..n_samples {
            if !(0..n_views).any(|v| mask.is_observed(n, v)) {
                return Err(contract(format!("sample {n} has no observed views")));
            }
        }
        Ok(mask)
    }

    /// All views observed for every sample.
    pub fn full(n_samples: usize, n_views: usize) -> Self {
        ViewMask {
            n_samples,
            n_views,
            data: vec![true; n_samples * n_views],
        }
    }

    #[inline]
    pub fn is_observed(&self, sample: usize, view: usize) -> bool {
        self.data[sample * self.n_views + view]
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_views(&self) -> usize {
        self.n_views
    }

    pub fn observed_views(&self, sample: usize) -> Vec<usize> {
        (0..self.n_views)
            .filter(|&v| self.is_observed(sample, v))
            .collect()
    }

    pub fn rows_observing(&self, view: usize) -> Vec<usize> {
        (0..self.n_samples)
            .filter(|&n| self.is_observed(n, view))
            .collect()
    }

    pub fn gather(&self, indices: &[usize]) -> ViewMask {
        let mut data = Vec::with_capacity(indices.len() * self.n_views);
        for &n in indices {
            for v in 0..self.n_views {
                data.push(self.is_observed(n, v));
            }
        }
        ViewMask {
            n_samples: indices.len(),
            n_views: self.n_views,
            data,
        }
    }

    /// Intersect with a fixed set of allowed views. Errors if a sample ends
    /// up with no observed view.
    pub fn restrict_to(&self, views: &[usize]) -> Result<ViewMask> {
        for &v in views {
            if v >= self.n_views {
                return Err(contract(format!(
                    "view index {v} out of range (V = {})",
                    self.n_views
                )));
            }
        }
        let mut data = vec![false; self.data.len()];
        for n in 0..self.n_samples {
            for &v in views {
                data[n * self.n_views + v] = self.is_observed(n, v);
            }
        }
        ViewMask::new(self.n_samples, self.n_views, data)
    }

    pub fn rows(&self) -> &[bool] {
        &self.data
    }
}

/// A batch of multi-view inputs: one feature matrix per view plus the mask.
/// Rows of masked views are carried as placeholders and are never read.
#[derive(Debug, Clone)]
pub struct MultiViewBatch {
    pub views: Vec<Matrix>,
    pub mask: ViewMask,
}

impl MultiViewBatch {
    pub fn new(views: Vec<Matrix>, mask: ViewMask) -> Result<Self> {
        if views.len() != mask.n_views() {
            return Err(shape(format!(
                "batch has {} view matrices but the mask covers {} views",
                views.len(),
                mask.n_views()
            )));
        }
        for (v, m) in views.iter().enumerate() {
            if m.rows() != mask.n_samples() {
                return Err(shape(format!(
                    "view {v} has {} rows but the mask covers {} samples",
                    m.rows(),
                    mask.n_samples()
                )));
            }
        }
        Ok(MultiViewBatch { views, mask })
    }

    pub fn n_samples(&self) -> usize {
        self.mask.n_samples()
    }

    pub fn n_views(&self) -> usize {
        self.mask.n_views()
    }
}

/// One view-specific encoder: a ReLU trunk whose output feeds two disjoint
/// affine heads emitting the posterior mean and log-variance.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub trunk: MlpParams,
    pub mean_head: MlpParams,
    pub log_var_head: MlpParams,
}

/// Network sizes. `encoder_hidden` must hold at least one layer; an empty
/// `predictor_hidden` makes the predictors single affine maps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelArch {
    pub view_dims: Vec<usize>,
    pub latent_dim: usize,
    pub n_classes: usize,
    pub encoder_hidden: Vec<usize>,
    pub predictor_hidden: Vec<usize>,
}

impl ModelArch {
    pub fn validate(&self) -> Result<()> {
        if self.view_dims.is_empty() || self.view_dims.iter().any(|&d| d == 0) {
            return Err(contract("view_dims must be nonempty with entries >= 1"));
        }
        if self.latent_dim == 0 {
            return Err(contract("latent_dim must be >= 1"));
        }
        if self.n_classes < 2 {
            return Err(contract("n_classes must be >= 2"));
        }
        if self.encoder_hidden.is_empty() || self.encoder_hidden.iter().any(|&d| d == 0) {
            return Err(contract("encoder_hidden must be nonempty with entries >= 1"));
        }
        if self.predictor_hidden.iter().any(|&d| d == 0) {
            return Err(contract("predictor_hidden entries must be >= 1"));
        }
        Ok(())
    }
}

/// All trainable parameters of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepIMVParams {
    pub encoders: Vec<EncoderParams>,
    pub view_predictors: Vec<MlpParams>,
    pub joint_predictor: MlpParams,
    pub latent_dim: usize,
    pub n_classes: usize,
    pub view_dims: Vec<usize>,
}

impl DeepIMVParams {
    /// Xavier-initialized parameters. Initialization order is fixed:
    /// encoders in view order (trunk layers, mean head, log-variance head),
    /// then the view predictors, then the joint predictor.
    pub fn init(arch: &ModelArch, rng: &mut RngState) -> Result<Self> {
        arch.validate()?;
        let trunk_out = *arch.encoder_hidden.last().unwrap();
        let mut encoders = Vec::with_capacity(arch.view_dims.len());
        for &d in &arch.view_dims {
            let mut trunk_dims = vec![d];
            trunk_dims.extend_from_slice(&arch.encoder_hidden);
            encoders.push(EncoderParams {
                trunk: MlpParams::xavier(&trunk_dims, rng)?,
                mean_head: MlpParams::xavier(&[trunk_out, arch.latent_dim], rng)?,
                log_var_head: MlpParams::xavier(&[trunk_out, arch.latent_dim], rng)?,
            });
        }
        let mut pred_dims = vec![arch.latent_dim];
        pred_dims.extend_from_slice(&arch.predictor_hidden);
        pred_dims.push(arch.n_classes);
        let view_predictors = (0..arch.view_dims.len())
            .map(|_| MlpParams::xavier(&pred_dims, rng))
            .collect::<Result<Vec<_>>>()?;
        let joint_predictor = MlpParams::xavier(&pred_dims, rng)?;
        Ok(DeepIMVParams {
            encoders,
            view_predictors,
            joint_predictor,
            latent_dim: arch.latent_dim,
            n_classes: arch.n_classes,
            view_dims: arch.view_dims.clone(),
        })
    }

    pub fn n_views(&self) -> usize {
        self.encoders.len()
    }

    /// Recover the architecture from the stored layer shapes.
    pub fn arch(&self) -> ModelArch {
        let encoder_hidden: Vec<usize> = self.encoders[0]
            .trunk
            .layers
            .iter()
            .map(|l| l.fan_out())
            .collect();
        let n_pred = self.joint_predictor.layers.len();
        let predictor_hidden: Vec<usize> = self.joint_predictor.layers[..n_pred - 1]
            .iter()
            .map(|l| l.fan_out())
            .collect();
        ModelArch {
            view_dims: self.view_dims.clone(),
            latent_dim: self.latent_dim,
            n_classes: self.n_classes,
            encoder_hidden,
            predictor_hidden,
        }
    }

    pub fn param_count(&self) -> usize {
        let mut total = 0;
        for e in &self.encoders {
            total += e.trunk.param_count() + e.mean_head.param_count() + e.log_var_head.param_count();
        }
        for p in &self.view_predictors {
            total += p.param_count();
        }
        total + self.joint_predictor.param_count()
    }

    /// Same topology with all parameters zero (a gradient container).
    pub fn zeros_like(&self) -> Self {
        DeepIMVParams {
            encoders: self
                .encoders
                .iter()
                .map(|e| EncoderParams {
                    trunk: e.trunk.zeros_like(),
                    mean_head: e.mean_head.zeros_like(),
                    log_var_head: e.log_var_head.zeros_like(),
                })
                .collect(),
            view_predictors: self.view_predictors.iter().map(|p| p.zeros_like()).collect(),
            joint_predictor: self.joint_predictor.zeros_like(),
            latent_dim: self.latent_dim,
            n_classes: self.n_classes,
            view_dims: self.view_dims.clone(),
        }
    }

    /// `self += s * other` over every parameter.
    pub fn add_scaled(&mut self, other: &Self, s: f64) {
        for (a, b) in self.encoders.iter_mut().zip(&other.encoders) {
            a.trunk.add_scaled(&b.trunk, s);
            a.mean_head.add_scaled(&b.mean_head, s);
            a.log_var_head.add_scaled(&b.log_var_head, s);
        }
        for (a, b) in self.view_predictors.iter_mut().zip(&other.view_predictors) {
            a.add_scaled(b, s);
        }
        self.joint_predictor.add_scaled(&other.joint_predictor, s);
    }

    /// Canonical flat layout shared by the optimizer and the tests.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for e in &self.encoders {
            e.trunk.push_flat(&mut out);
            e.mean_head.push_flat(&mut out);
            e.log_var_head.push_flat(&mut out);
        }
        for p in &self.view_predictors {
            p.push_flat(&mut out);
        }
        self.joint_predictor.push_flat(&mut out);
        out
    }

    pub fn assign_from_flat(&mut self, src: &[f64]) -> Result<()> {
        if src.len() != self.param_count() {
            return Err(shape(format!(
                "flat vector has {} entries but the model has {}",
                src.len(),
                self.param_count()
            )));
        }
        let mut pos = 0;
        for e in &mut self.encoders {
            e.trunk.read_flat(src, &mut pos);
            e.mean_head.read_flat(src, &mut pos);
            e.log_var_head.read_flat(src, &mut pos);
        }
        for p in &mut self.view_predictors {
            p.read_flat(src, &mut pos);
        }
        self.joint_predictor.read_flat(src, &mut pos);
        Ok(())
    }

    /// Validate internal dimension consistency.
    pub fn validate(&self) -> Result<()> {
        if self.encoders.len() != self.view_dims.len()
            || self.view_predictors.len() != self.view_dims.len()
        {
            return Err(shape("encoder/predictor counts do not match view_dims"));
        }
        for (v, (e, &d)) in self.encoders.iter().zip(&self.view_dims).enumerate() {
            e.trunk.validate_chain()?;
            e.mean_head.validate_chain()?;
            e.log_var_head.validate_chain()?;
            if e.trunk.input_dim() != d {
                return Err(shape(format!("encoder {v} expects input dim {d}")));
            }
            let t = e.trunk.output_dim();
            if e.mean_head.input_dim() != t || e.log_var_head.input_dim() != t {
                return Err(shape(format!("encoder {v} heads do not match trunk output")));
            }
            if e.mean_head.output_dim() != self.latent_dim
                || e.log_var_head.output_dim() != self.latent_dim
            {
                return Err(shape(format!("encoder {v} heads must output latent_dim")));
            }
        }
        for (v, p) in self.view_predictors.iter().enumerate() {
            p.validate_chain()?;
            if p.input_dim() != self.latent_dim || p.output_dim() != self.n_classes {
                return Err(shape(format!("view predictor {v} has wrong dims")));
            }
        }
        self.joint_predictor.validate_chain()?;
        if self.joint_predictor.input_dim() != self.latent_dim
            || self.joint_predictor.output_dim() != self.n_classes
        {
            return Err(shape("joint predictor has wrong dims"));
        }
        Ok(())
    }

    /// Encode a batch through view `v`'s stochastic encoder (eval mode, no
    /// dropout), returning one posterior per row.
    pub fn encode_view(&self, view: usize, x: &Matrix) -> Result<Vec<DiagGaussian>> {
        if view >= self.n_views() {
            return Err(contract(format!("view index {view} out of range")));
        }
        let mut rng = RngState::from_seed(0); // eval consumes no draws
        let enc = encoder_forward(&self.encoders[view], x, Mode::Eval, 0.0, &mut rng)?;
        (0..x.rows())
            .map(|r| DiagGaussian::new(enc.mean.row(r).to_vec(), enc.log_var.row(r).to_vec()))
            .collect()
    }
}

/// Cached activations of one encoder pass.
#[derive(Debug, Clone)]
pub(crate) struct EncoderCache {
    pub trunk_cache: MlpCache,
    /// Trunk output before the top ReLU (the gate for backprop).
    pub top_pre_act: Matrix,
    pub top_mask: Option<Matrix>,
    pub mean_cache: MlpCache,
    pub log_var_cache: MlpCache,
    /// Head output before clamping (the clamp gate for backprop).
    pub raw_log_var: Matrix,
}

pub(crate) struct EncoderForward {
    pub mean: Matrix,
    pub log_var: Matrix,
    pub cache: EncoderCache,
}

/// Trunk -> ReLU -> (train) dropout -> two affine heads; the log-variance
/// head output is clamped.
pub(crate) fn encoder_forward(
    enc: &EncoderParams,
    x: &Matrix,
    mode: Mode,
    dropout_rate: f64,
    rng: &mut RngState,
) -> Result<EncoderForward> {
    let (top_pre_act, trunk_cache) = mlp_apply(&enc.trunk, x, mode, dropout_rate, rng)?;
    let activated = top_pre_act.map(|v| if v > 0.0 { v } else { 0.0 });
    let (hidden, top_mask) = if mode == Mode::Train && dropout_rate > 0.0 {
        let mask = dropout_mask(activated.rows(), activated.cols(), dropout_rate, rng)?;
        let mut h = activated;
        h.hadamard_assign(&mask);
        (h, Some(mask))
    } else {
        (activated, None)
    };
    let (mean, mean_cache) = mlp_apply(&enc.mean_head, &hidden, mode, dropout_rate, rng)?;
    let (raw_log_var, log_var_cache) = mlp_apply(&enc.log_var_head, &hidden, mode, dropout_rate, rng)?;
    let log_var = raw_log_var.map(clamp_log_var);
    Ok(EncoderForward {
        mean,
        log_var,
        cache: EncoderCache {
            trunk_cache,
            top_pre_act,
            top_mask,
            mean_cache,
            log_var_cache,
            raw_log_var,
        },
    })
}

/// Gradients for one encoder, matching [`EncoderParams`] shapes.
pub(crate) fn encoder_backward(
    enc: &EncoderParams,
    cache: &EncoderCache,
    grad_mean: &Matrix,
    grad_log_var: &Matrix,
) -> Result<EncoderParams> {
    // Clamp gate: gradient passes only strictly inside the clamp interval.
    let mut g_raw = grad_log_var.clone();
    let gate = cache
        .raw_log_var
        .map(|v| if v.abs() < crate::gaussian::LOG_VAR_CLAMP { 1.0 } else { 0.0 });
    g_raw.hadamard_assign(&gate);

    let (g_mean_head, gh1) = mlp_backprop(&enc.mean_head, &cache.mean_cache, grad_mean)?;
    let (g_lv_head, gh2) = mlp_backprop(&enc.log_var_head, &cache.log_var_cache, &g_raw)?;
    let mut gh = gh1;
    gh.add_assign(&gh2);
    if let Some(mask) = &cache.top_mask {
        gh.hadamard_assign(mask);
    }
    let relu_gate = cache.top_pre_act.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
    gh.hadamard_assign(&relu_gate);
    let (g_trunk, _) = mlp_backprop(&enc.trunk, &cache.trunk_cache, &gh)?;
    Ok(EncoderParams {
        trunk: g_trunk,
        mean_head: g_mean_head,
        log_var_head: g_lv_head,
    })
}

/// Per-view activations for the rows that observe the view.
#[derive(Debug, Clone)]
pub struct ViewChannel {
    /// Batch rows observing this view, ascending.
    pub indices: Vec<usize>,
    /// Inverse of `indices`: sample index -> local row.
    pub row_of: Vec<Option<usize>>,
    pub mean: Matrix,
    pub log_var: Matrix,
    /// Latent draw (train) or posterior mean (eval), one row per observed sample.
    pub latent: Matrix,
    pub logits: Matrix,
    pub probs: Matrix,
    pub(crate) enc_cache: EncoderCache,
    pub(crate) pred_cache: MlpCache,
}

/// Everything produced by one forward pass, including the replay records
/// the loss layer needs for exact backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub fusion: Fusion,
    pub mode: Mode,
    pub mask: ViewMask,
    pub view_channels: Vec<Option<ViewChannel>>,
    /// Joint posterior parameters (PoE: fused; MoE: moment-matched).
    pub joint_mean: Matrix,
    pub joint_log_var: Matrix,
    pub joint_latent: Matrix,
    pub joint_logits: Matrix,
    pub joint_probs: Matrix,
    /// MoE train mode: the view whose component was sampled, per sample.
    pub(crate) moe_choice: Vec<usize>,
    pub(crate) joint_pred_cache: MlpCache,
}

impl ForwardPass {
    pub fn n_samples(&self) -> usize {
        self.joint_mean.rows()
    }

    pub fn joint_posterior(&self, sample: usize) -> DiagGaussian {
        DiagGaussian {
            mean: self.joint_mean.row(sample).to_vec(),
            log_var: self.joint_log_var.row(sample).to_vec(),
        }
    }

    pub fn view_posterior(&self, sample: usize, view: usize) -> Option<DiagGaussian> {
        let ch = self.view_channels[view].as_ref()?;
        let r = ch.row_of[sample]?;
        Some(DiagGaussian {
            mean: ch.mean.row(r).to_vec(),
            log_var: ch.log_var.row(r).to_vec(),
        })
    }

    pub fn view_probs(&self, sample: usize, view: usize) -> Option<&[f64]> {
        let ch = self.view_channels[view].as_ref()?;
        let r = ch.row_of[sample]?;
        Some(ch.probs.row(r))
    }
}

/// Result of fusing per-sample marginal posteriors.
#[derive(Debug, Clone, PartialEq)]
pub enum FusedPosterior {
    Gaussian(DiagGaussian),
    Mixture(GaussianMixture),
}

/// Fuse the observed marginal posteriors of one sample. `marginals[v]` is
/// `Some` exactly where view `v` is observed; at least one view must be.
/// PoE multiplies a standard-normal prior with the observed experts; MoE
/// combines them with uniform weights.
pub fn joint_posterior(
    marginals: &[Option<DiagGaussian>],
    fusion: Fusion,
) -> Result<FusedPosterior> {
    let observed: Vec<DiagGaussian> = marginals.iter().flatten().cloned().collect();
    if observed.is_empty() {
        return Err(contract("no observed views"));
    }
    let dim = observed[0].dim();
    match fusion {
        Fusion::Poe => {
            let prior = DiagGaussian::standard(dim);
            Ok(FusedPosterior::Gaussian(poe_combine(&prior, &observed)?))
        }
        Fusion::Moe => Ok(FusedPosterior::Mixture(moe_combine(&observed, None)?)),
    }
}

/// Run the full network on a batch.
///
/// Per observed view: encode, sample the marginal latent (train) or take
/// the posterior mean (eval), and predict through the view-specific head.
/// The joint posterior is fused from the observed marginals per sample;
/// its latent is sampled (train) or set to the posterior mean (eval) and
/// fed to the multi-view predictor. Dropout is active only in train mode,
/// and eval mode consumes no randomness at all.
pub fn forward(
    params: &DeepIMVParams,
    batch: &MultiViewBatch,
    fusion: Fusion,
    mode: Mode,
    dropout_rate: f64,
    rng: &mut RngState,
) -> Result<ForwardPass> {
    if batch.n_views() != params.n_views() {
        return Err(shape(format!(
            "batch has {} views but the model has {}",
            batch.n_views(),
            params.n_views()
        )));
    }
    for (v, m) in batch.views.iter().enumerate() {
        if m.cols() != params.view_dims[v] {
            return Err(shape(format!(
                "view {v} has {} columns but the model expects {}",
                m.cols(),
                params.view_dims[v]
            )));
        }
    }
    let n = batch.n_samples();
    if n == 0 {
        return Err(contract("forward requires a nonempty batch"));
    }
    let dim = params.latent_dim;

    let mut view_channels: Vec<Option<ViewChannel>> = Vec::with_capacity(params.n_views());
    for v in 0..params.n_views() {
        let indices = batch.mask.rows_observing(v);
        if indices.is_empty() {
            view_channels.push(None);
            continue;
        }
        let x = batch.views[v].gather_rows(&indices);
        let enc = encoder_forward(&params.encoders[v], &x, mode, dropout_rate, rng)?;
        let latent = if mode == Mode::Train {
            let mut z = enc.mean.clone();
            for r in 0..z.rows() {
                for d in 0..dim {
                    let sigma = (0.5 * enc.log_var.get(r, d)).exp();
                    z.set(r, d, z.get(r, d) + rng.next_normal() * sigma);
                }
            }
            z
        } else {
            enc.mean.clone()
        };
        let (logits, pred_cache) =
            mlp_apply(&params.view_predictors[v], &latent, mode, dropout_rate, rng)?;
        let probs = softmax_rows(&logits);
        let mut row_of = vec![None; n];
        for (i, &r) in indices.iter().enumerate() {
            row_of[r] = Some(i);
        }
        view_channels.push(Some(ViewChannel {
            indices,
            row_of,
            mean: enc.mean,
            log_var: enc.log_var,
            latent,
            logits,
            probs,
            enc_cache: enc.cache,
            pred_cache,
        }));
    }

    // Fuse the observed marginals per sample, in ascending view order.
    let mut joint_mean = Matrix::zeros(n, dim);
    let mut joint_log_var = Matrix::zeros(n, dim);
    let prior = DiagGaussian::standard(dim);
    let mut experts_buf: Vec<DiagGaussian> = Vec::with_capacity(params.n_views());
    for sample in 0..n {
        experts_buf.clear();
        for (v, ch) in view_channels.iter().enumerate() {
            if let Some(ch) = ch {
                if let Some(r) = ch.row_of[sample] {
                    experts_buf.push(DiagGaussian {
                        mean: ch.mean.row(r).to_vec(),
                        log_var: ch.log_var.row(r).to_vec(),
                    });
                } else {
                    debug_assert!(!batch.mask.is_observed(sample, v));
                }
            }
        }
        if experts_buf.is_empty() {
            return Err(contract(format!("sample {sample} has no observed views")));
        }
        let fused = match fusion {
            Fusion::Poe => poe_combine(&prior, &experts_buf)?,
            Fusion::Moe => moe_combine(&experts_buf, None)?.moment_match(),
        };
        joint_mean.row_mut(sample).copy_from_slice(&fused.mean);
        joint_log_var.row_mut(sample).copy_from_slice(&fused.log_var);
    }

    // Joint latent: reparameterized draw in train mode, mean in eval mode.
    let mut moe_choice = Vec::new();
    let joint_latent = if mode == Mode::Train {
        match fusion {
            Fusion::Poe => {
                let mut z = joint_mean.clone();
                for r in 0..n {
                    for d in 0..dim {
                        let sigma = (0.5 * joint_log_var.get(r, d)).exp();
                        z.set(r, d, z.get(r, d) + rng.next_normal() * sigma);
                    }
                }
                z
            }
            Fusion::Moe => {
                // Pick an observed component uniformly, then draw from it.
                let mut z = Matrix::zeros(n, dim);
                moe_choice.reserve(n);
                for sample in 0..n {
                    let observed = batch.mask.observed_views(sample);
                    let weights = vec![1.0 / observed.len() as f64; observed.len()];
                    let local = select_component(&weights, rng.next_uniform());
                    let view = observed[local];
                    let ch = view_channels[view].as_ref().unwrap();
                    let r = ch.row_of[sample].unwrap();
                    for d in 0..dim {
                        let sigma = (0.5 * ch.log_var.get(r, d)).exp();
                        z.set(sample, d, ch.mean.get(r, d) + rng.next_normal() * sigma);
                    }
                    moe_choice.push(view);
                }
                z
            }
        }
    } else {
        joint_mean.clone()
    };

    let (joint_logits, joint_pred_cache) =
        mlp_apply(&params.joint_predictor, &joint_latent, mode, dropout_rate, rng)?;
    let joint_probs = softmax_rows(&joint_logits);

    Ok(ForwardPass {
        fusion,
        mode,
        mask: batch.mask.clone(),
        view_channels,
        joint_mean,
        joint_log_var,
        joint_latent,
        joint_logits,
        joint_probs,
        moe_choice,
        joint_pred_cache,
    })
}

/// Eval-mode class probabilities of the joint prediction. For binary tasks
/// column 1 is the score consumed by AUROC.
pub fn predict_proba(
    params: &DeepIMVParams,
    batch: &MultiViewBatch,
    fusion: Fusion,
) -> Result<Matrix> {
    let mut rng = RngState::from_seed(0); // eval consumes no draws
    let fp = forward(params, batch, fusion, Mode::Eval, 0.0, &mut rng)?;
    Ok(fp.joint_probs)
}

/// Monte-Carlo averaged class probabilities: the joint posterior is sampled
/// `n_samples` times and the predictor outputs are averaged.
pub fn predict_proba_mc(
    params: &DeepIMVParams,
    batch: &MultiViewBatch,
    fusion: Fusion,
    n_samples: usize,
    rng: &mut RngState,
) -> Result<Matrix> {
    if n_samples == 0 {
        return predict_proba(params, batch, fusion);
    }
    let mut eval_rng = RngState::from_seed(0);
    let fp = forward(params, batch, fusion, Mode::Eval, 0.0, &mut eval_rng)?;
    let n = fp.n_samples();
    let dim = params.latent_dim;
    let mut acc = Matrix::zeros(n, params.n_classes);
    for _ in 0..n_samples {
        let mut z = fp.joint_mean.clone();
        for r in 0..n {
            for d in 0..dim {
                let sigma = (0.5 * fp.joint_log_var.get(r, d)).exp();
                z.set(r, d, z.get(r, d) + rng.next_normal() * sigma);
            }
        }
        let (logits, _) = mlp_apply(&params.joint_predictor, &z, Mode::Eval, 0.0, rng)?;
        acc.add_assign(&softmax_rows(&logits));
    }
    acc.scale(1.0 / n_samples as f64);
    Ok(acc)
}

// ---------------------------------------------------------------------------
// Checkpoint serialization
// ---------------------------------------------------------------------------

const CHECKPOINT_SCHEMA: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointDims {
    latent_dim: usize,
    n_classes: usize,
    view_dims: Vec<usize>,
    encoder_hidden: Vec<usize>,
    predictor_hidden: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    schema: u32,
    dims: CheckpointDims,
    arrays: BTreeMap<String, Vec<f64>>,
}

fn mlp_array_entries(name: &str, mlp: &MlpParams, arrays: &mut BTreeMap<String, Vec<f64>>) {
    for (k, layer) in mlp.layers.iter().enumerate() {
        arrays.insert(format!("{name}.layer{k}.weight"), layer.weight.data().to_vec());
        arrays.insert(format!("{name}.layer{k}.bias"), layer.bias.clone());
    }
}

fn mlp_from_arrays(
    name: &str,
    mlp: &mut MlpParams,
    arrays: &mut BTreeMap<String, Vec<f64>>,
) -> Result<()> {
    for (k, layer) in mlp.layers.iter_mut().enumerate() {
        let wkey = format!("{name}.layer{k}.weight");
        let w = arrays
            .remove(&wkey)
            .ok_or_else(|| load(format!("checkpoint is missing array '{wkey}'")))?;
        if w.len() != layer.weight.data().len() {
            return Err(load(format!(
                "array '{wkey}' has {} entries, expected {}",
                w.len(),
                layer.weight.data().len()
            )));
        }
        layer.weight.data_mut().copy_from_slice(&w);
        let bkey = format!("{name}.layer{k}.bias");
        let b = arrays
            .remove(&bkey)
            .ok_or_else(|| load(format!("checkpoint is missing array '{bkey}'")))?;
        if b.len() != layer.bias.len() {
            return Err(load(format!(
                "array '{bkey}' has {} entries, expected {}",
                b.len(),
                layer.bias.len()
            )));
        }
        layer.bias.copy_from_slice(&b);
    }
    Ok(())
}

/// Write the parameters as a versioned JSON checkpoint. Floats round-trip
/// exactly through the decimal encoding.
pub fn save_params(params: &DeepIMVParams, path: &Path) -> Result<()> {
    params.validate()?;
    let arch = params.arch();
    let mut arrays = BTreeMap::new();
    for (v, e) in params.encoders.iter().enumerate() {
        mlp_array_entries(&format!("encoder_{v}.trunk"), &e.trunk, &mut arrays);
        mlp_array_entries(&format!("encoder_{v}.mean_head"), &e.mean_head, &mut arrays);
        mlp_array_entries(
            &format!("encoder_{v}.log_var_head"),
            &e.log_var_head,
            &mut arrays,
        );
    }
    for (v, p) in params.view_predictors.iter().enumerate() {
        mlp_array_entries(&format!("view_predictor_{v}"), p, &mut arrays);
    }
    mlp_array_entries("joint_predictor", &params.joint_predictor, &mut arrays);
    let file = CheckpointFile {
        schema: CHECKPOINT_SCHEMA,
        dims: CheckpointDims {
            latent_dim: arch.latent_dim,
            n_classes: arch.n_classes,
            view_dims: arch.view_dims,
            encoder_hidden: arch.encoder_hidden,
            predictor_hidden: arch.predictor_hidden,
        },
        arrays,
    };
    let json = serde_json::to_string(&file)
        .map_err(|e| load(format!("failed to encode checkpoint: {e}")))?;
    std::fs::write(path, json)?;
    Ok(())
}

/// Load a checkpoint written by [`save_params`]. Schema mismatches,
/// malformed documents and dimension inconsistencies are all rejected
/// without producing partial state.
pub fn load_params(path: &Path) -> Result<DeepIMVParams> {
    let text = std::fs::read_to_string(path)?;
    let file: CheckpointFile = serde_json::from_str(&text)
        .map_err(|e| load(format!("malformed checkpoint {}: {e}", path.display())))?;
    if file.schema != CHECKPOINT_SCHEMA {
        return Err(load(format!(
            "checkpoint schema {} is not supported (expected {CHECKPOINT_SCHEMA})",
            file.schema
        )));
    }
    let arch = ModelArch {
        view_dims: file.dims.view_dims,
        latent_dim: file.dims.latent_dim,
        n_classes: file.dims.n_classes,
        encoder_hidden: file.dims.encoder_hidden,
        predictor_hidden: file.dims.predictor_hidden,
    };
    arch.validate().map_err(|e| load(format!("invalid checkpoint dims: {e}")))?;
    let mut rng = RngState::from_seed(0);
    let mut params = DeepIMVParams::init(&arch, &mut rng)?;
    let mut arrays = file.arrays;
    for v in 0..params.n_views() {
        let enc = &mut params.encoders[v];
        mlp_from_arrays(&format!("encoder_{v}.trunk"), &mut enc.trunk, &mut arrays)?;
        mlp_from_arrays(
            &format!("encoder_{v}.mean_head"),
            &mut enc.mean_head,
            &mut arrays,
        )?;
        mlp_from_arrays(
            &format!("encoder_{v}.log_var_head"),
            &mut enc.log_var_head,
            &mut arrays,
        )?;
    }
    for v in 0..params.view_predictors.len() {
        mlp_from_arrays(
            &format!("view_predictor_{v}"),
            &mut params.view_predictors[v],
            &mut arrays,
        )?;
    }
    mlp_from_arrays("joint_predictor", &mut params.joint_predictor, &mut arrays)?;
    if let Some(key) = arrays.keys().next() {
        return Err(load(format!("checkpoint has unexpected array '{key}'")));
    }
    params.validate()?;
    Ok(params)
}
