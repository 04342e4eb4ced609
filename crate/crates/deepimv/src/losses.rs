//! The variational information-bottleneck objectives: cross-entropy, the
//! joint IB loss, the per-view marginal IB losses, and their weighted
//! total, together with exact reverse-mode gradients.
//!
//! Gradient routing follows the parameter partition: the joint loss
//! reaches the multi-view predictor and (through fusion and sampling) the
//! encoders, never the view-specific predictors; the marginal losses reach
//! the view-specific predictors and the encoders, never the multi-view
//! predictor. All values are in nats and averaged over the mini-batch
//! size, so views observed by fewer samples contribute proportionally
//! less.

use crate::error::{contract, Result};
use crate::gaussian::{kl_diag, DiagGaussian, LOG_VAR_CLAMP};
use crate::model::{encoder_backward, DeepIMVParams, ForwardPass, Fusion};
use crate::numerics::{mlp_backprop, Matrix, Mode};

/// Batch-averaged loss components in nats. `ce_view`/`kl_view` hold zero
/// for views observed by no sample in the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub ce_joint: f64,
    pub kl_joint: f64,
    pub ce_view: Vec<f64>,
    pub kl_view: Vec<f64>,
    pub total: f64,
}

impl LossBreakdown {
    pub fn zeros(n_views: usize) -> Self {
        LossBreakdown {
            ce_joint: 0.0,
            kl_joint: 0.0,
            ce_view: vec![0.0; n_views],
            kl_view: vec![0.0; n_views],
            total: 0.0,
        }
    }

    /// `self += s * other`, used to aggregate batch breakdowns into epochs.
    pub fn add_scaled(&mut self, other: &LossBreakdown, s: f64) {
        self.ce_joint += s * other.ce_joint;
        self.kl_joint += s * other.kl_joint;
        for (a, &b) in self.ce_view.iter_mut().zip(&other.ce_view) {
            *a += s * b;
        }
        for (a, &b) in self.kl_view.iter_mut().zip(&other.kl_view) {
            *a += s * b;
        }
        self.total += s * other.total;
    }
}

const PROB_FLOOR: f64 = 1e-12;

/// Mean negative log-likelihood of the labels under `probs`, with
/// probabilities floored at 1e-12 before the log.
pub fn cross_entropy(probs: &Matrix, labels: &[usize]) -> Result<f64> {
    if probs.rows() != labels.len() {
        return Err(contract(format!(
            "{} probability rows for {} labels",
            probs.rows(),
            labels.len()
        )));
    }
    if probs.rows() == 0 {
        return Err(contract("cross_entropy requires a nonempty batch"));
    }
    let c = probs.cols();
    let mut total = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        if y >= c {
            return Err(contract(format!(
                "label {y} at row {r} out of range for {c} classes"
            )));
        }
        total += -probs.get(r, y).max(PROB_FLOOR).ln();
    }
    Ok(total / probs.rows() as f64)
}

/// `(probs - onehot(labels)) * scale`: the gradient of scaled summed
/// cross-entropy with respect to the logits.
fn softmax_ce_grad(probs: &Matrix, labels: &[usize], scale: f64) -> Matrix {
    let mut g = probs.clone();
    g.scale(scale);
    for (r, &y) in labels.iter().enumerate() {
        g.set(r, y, g.get(r, y) - scale);
    }
    g
}

/// Sum over rows of KL(N(mean_r, exp(log_var_r)) || N(0, I)).
fn kl_rows_vs_standard(mean: &Matrix, log_var: &Matrix) -> f64 {
    let prior = DiagGaussian::standard(mean.cols());
    let mut total = 0.0;
    for r in 0..mean.rows() {
        let q = DiagGaussian {
            mean: mean.row(r).to_vec(),
            log_var: log_var.row(r).to_vec(),
        };
        total += kl_diag(&q, &prior).expect("dimensions match by construction");
    }
    total
}

/// Value components of the joint IB loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLoss {
    pub ce: f64,
    pub kl: f64,
    pub value: f64,
}

/// Value components of the summed marginal IB losses.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalLoss {
    pub ce_view: Vec<f64>,
    pub kl_view: Vec<f64>,
    pub value: f64,
}

fn validate_labels(fp: &ForwardPass, labels: &[usize], n_classes: usize) -> Result<()> {
    if labels.len() != fp.n_samples() {
        return Err(contract(format!(
            "{} labels for a batch of {}",
            labels.len(),
            fp.n_samples()
        )));
    }
    if let Some((r, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= n_classes) {
        return Err(contract(format!(
            "label {y} at row {r} out of range for {n_classes} classes"
        )));
    }
    Ok(())
}

/// Joint IB loss: `CE(joint prediction) + beta * mean KL(joint || prior)`.
///
/// Gradients flow to the multi-view predictor and, through fusion and the
/// reparameterized sample, to the encoders of observed views. The
/// view-specific predictor gradients are exactly zero.
pub fn ib_joint_loss(
    params: &DeepIMVParams,
    fp: &ForwardPass,
    labels: &[usize],
    beta: f64,
) -> Result<(JointLoss, DeepIMVParams)> {
    if beta < 0.0 {
        return Err(contract(format!("beta {beta} must be nonnegative")));
    }
    validate_labels(fp, labels, params.n_classes)?;
    let n = fp.n_samples();
    let scale = 1.0 / n as f64;

    let ce = cross_entropy(&fp.joint_probs, labels)?;
    let kl = kl_rows_vs_standard(&fp.joint_mean, &fp.joint_log_var) * scale;
    let value = ce + beta * kl;

    let mut grads = params.zeros_like();

    // Multi-view predictor and the gradient reaching the joint latent.
    let glogits = softmax_ce_grad(&fp.joint_probs, labels, scale);
    let (g_joint_pred, gz) = mlp_backprop(&params.joint_predictor, &fp.joint_pred_cache, &glogits)?;
    grads.joint_predictor = g_joint_pred;

    // Gradients with respect to the joint posterior parameters.
    // KL against the standard prior: d/dm = m, d/dL = (exp(L) - 1)/2,
    // gated where the fused log-variance sits on the clamp boundary.
    let kl_scale = beta * scale;
    let dim = params.latent_dim;
    let mut gm = Matrix::zeros(n, dim);
    let mut gl = Matrix::zeros(n, dim);
    for r in 0..n {
        for d in 0..dim {
            let m = fp.joint_mean.get(r, d);
            let lv = fp.joint_log_var.get(r, d);
            let gate = if lv.abs() < LOG_VAR_CLAMP { 1.0 } else { 0.0 };
            gm.set(r, d, kl_scale * m);
            gl.set(r, d, gate * kl_scale * 0.5 * (lv.exp() - 1.0));
        }
    }

    // The sampled-latent path.
    match (fp.fusion, fp.mode) {
        (Fusion::Poe, _) | (Fusion::Moe, Mode::Eval) => {
            // z = m + eps * sigma (eval: z = m), so dz/dm = 1 and
            // dz/dL = (z - m)/2. For MoE in eval mode z is the
            // moment-matched mean, so only the mean path is active.
            for r in 0..n {
                for d in 0..dim {
                    let g = gz.get(r, d);
                    gm.set(r, d, gm.get(r, d) + g);
                    if fp.fusion == Fusion::Poe {
                        let half_dev = 0.5 * (fp.joint_latent.get(r, d) - fp.joint_mean.get(r, d));
                        let lv = fp.joint_log_var.get(r, d);
                        let gate = if lv.abs() < LOG_VAR_CLAMP { 1.0 } else { 0.0 };
                        gl.set(r, d, gl.get(r, d) + gate * g * half_dev);
                    }
                }
            }
        }
        (Fusion::Moe, Mode::Train) => {
            // Handled below: the sample came from one chosen component.
        }
    }

    // Distribute the joint-posterior gradients to the observed experts and
    // run the encoder backward passes.
    for v in 0..params.n_views() {
        let ch = match &fp.view_channels[v] {
            Some(ch) => ch,
            None => continue,
        };
        let rows = ch.indices.len();
        let mut gmu = Matrix::zeros(rows, dim);
        let mut glv = Matrix::zeros(rows, dim);
        for (local, &sample) in ch.indices.iter().enumerate() {
            let n_obs = fp.mask.observed_views(sample).len() as f64;
            for d in 0..dim {
                let mu = ch.mean.get(local, d);
                let lv = ch.log_var.get(local, d);
                match fp.fusion {
                    Fusion::Poe => {
                        // Precision-weighted fusion:
                        //   dm/dmu_v = r_v, dm/dlv_v = r_v (m - mu_v),
                        //   dL/dlv_v = r_v with r_v = lambda_v / lambda_tot.
                        let mut lam_tot = 1.0;
                        for &w in &fp.mask.observed_views(sample) {
                            let chw = fp.view_channels[w].as_ref().unwrap();
                            let rw = chw.row_of[sample].unwrap();
                            lam_tot += (-chw.log_var.get(rw, d)).exp();
                        }
                        let ratio = (-lv).exp() / lam_tot;
                        let m = fp.joint_mean.get(sample, d);
                        gmu.set(
                            local,
                            d,
                            gmu.get(local, d) + gm.get(sample, d) * ratio,
                        );
                        glv.set(
                            local,
                            d,
                            glv.get(local, d)
                                + gm.get(sample, d) * ratio * (m - mu)
                                + gl.get(sample, d) * ratio,
                        );
                    }
                    Fusion::Moe => {
                        // Moment matching with uniform weight a = 1/|obs|:
                        //   dm/dmu_v = a,
                        //   dL/dmu_v = 2 a (mu_v - m) / s^2,
                        //   dL/dlv_v = a exp(lv_v) / s^2.
                        let a = 1.0 / n_obs;
                        let m = fp.joint_mean.get(sample, d);
                        let s2 = fp.joint_log_var.get(sample, d).exp();
                        gmu.set(
                            local,
                            d,
                            gmu.get(local, d)
                                + gm.get(sample, d) * a
                                + gl.get(sample, d) * 2.0 * a * (mu - m) / s2,
                        );
                        glv.set(
                            local,
                            d,
                            glv.get(local, d) + gl.get(sample, d) * a * lv.exp() / s2,
                        );
                    }
                }
            }
        }
        // MoE train mode: the sampled latent came from one chosen component,
        // so the z-path gradient lands on that component alone.
        if fp.fusion == Fusion::Moe && fp.mode == Mode::Train {
            for (local, &sample) in ch.indices.iter().enumerate() {
                if fp.moe_choice[sample] != v {
                    continue;
                }
                for d in 0..dim {
                    let g = gz.get(sample, d);
                    let half_dev = 0.5 * (fp.joint_latent.get(sample, d) - ch.mean.get(local, d));
                    gmu.set(local, d, gmu.get(local, d) + g);
                    glv.set(local, d, glv.get(local, d) + g * half_dev);
                }
            }
        }
        let g_enc = encoder_backward(&params.encoders[v], &ch.enc_cache, &gmu, &glv)?;
        grads.encoders[v] = g_enc;
    }

    Ok((JointLoss { ce, kl, value }, grads))
}

/// Summed marginal IB losses:
/// `sum_v [CE(view prediction) + beta_v * KL(marginal || prior)]`, each
/// inner sum over the samples observing the view, divided by the batch
/// size. Gradients flow to the view-specific predictors and encoders;
/// the multi-view predictor gradient is exactly zero.
pub fn ib_marginal_loss(
    params: &DeepIMVParams,
    fp: &ForwardPass,
    labels: &[usize],
    beta_v: &[f64],
) -> Result<(MarginalLoss, DeepIMVParams)> {
    if beta_v.len() != params.n_views() {
        return Err(contract(format!(
            "{} beta_v entries for {} views",
            beta_v.len(),
            params.n_views()
        )));
    }
    if let Some(&b) = beta_v.iter().find(|&&b| b < 0.0) {
        return Err(contract(format!("beta_v {b} must be nonnegative")));
    }
    validate_labels(fp, labels, params.n_classes)?;
    let n = fp.n_samples();
    let scale = 1.0 / n as f64;
    let dim = params.latent_dim;

    let mut grads = params.zeros_like();
    let mut ce_view = vec![0.0; params.n_views()];
    let mut kl_view = vec![0.0; params.n_views()];

    for v in 0..params.n_views() {
        let ch = match &fp.view_channels[v] {
            Some(ch) => ch,
            None => continue,
        };
        let local_labels: Vec<usize> = ch.indices.iter().map(|&r| labels[r]).collect();
        if let Some((i, &y)) = local_labels
            .iter()
            .enumerate()
            .find(|(_, &y)| y >= params.n_classes)
        {
            return Err(contract(format!(
                "label {y} at row {} out of range",
                ch.indices[i]
            )));
        }

        let mut ce_sum = 0.0;
        for (local, &y) in local_labels.iter().enumerate() {
            ce_sum += -ch.probs.get(local, y).max(PROB_FLOOR).ln();
        }
        ce_view[v] = ce_sum * scale;
        kl_view[v] = kl_rows_vs_standard(&ch.mean, &ch.log_var) * scale;

        let glogits = softmax_ce_grad(&ch.probs, &local_labels, scale);
        let (g_pred, gz) = mlp_backprop(&params.view_predictors[v], &ch.pred_cache, &glogits)?;
        grads.view_predictors[v] = g_pred;

        let kl_scale = beta_v[v] * scale;
        let rows = ch.indices.len();
        let mut gmu = Matrix::zeros(rows, dim);
        let mut glv = Matrix::zeros(rows, dim);
        for r in 0..rows {
            for d in 0..dim {
                let mu = ch.mean.get(r, d);
                let lv = ch.log_var.get(r, d);
                let g = gz.get(r, d);
                let half_dev = 0.5 * (ch.latent.get(r, d) - mu);
                gmu.set(r, d, g + kl_scale * mu);
                glv.set(r, d, g * half_dev + kl_scale * 0.5 * (lv.exp() - 1.0));
            }
        }
        let g_enc = encoder_backward(&params.encoders[v], &ch.enc_cache, &gmu, &glv)?;
        grads.encoders[v].trunk.add_scaled(&g_enc.trunk, 1.0);
        grads.encoders[v].mean_head.add_scaled(&g_enc.mean_head, 1.0);
        grads.encoders[v]
            .log_var_head
            .add_scaled(&g_enc.log_var_head, 1.0);
    }

    let value = ce_view
        .iter()
        .zip(&kl_view)
        .zip(beta_v)
        .map(|((&ce, &kl), &b)| ce + b * kl)
        .sum();
    Ok((
        MarginalLoss {
            ce_view,
            kl_view,
            value,
        },
        grads,
    ))
}

/// Total objective: joint IB loss plus `alpha` times the summed marginal
/// IB losses. Encoders receive both gradient paths, view predictors only
/// the marginal one (scaled by `alpha`), the multi-view predictor only the
/// joint one.
pub fn total_loss(
    params: &DeepIMVParams,
    fp: &ForwardPass,
    labels: &[usize],
    alpha: f64,
    beta: f64,
    beta_v: &[f64],
) -> Result<(LossBreakdown, DeepIMVParams)> {
    if alpha < 0.0 {
        return Err(contract(format!("alpha {alpha} must be nonnegative")));
    }
    let (joint, mut grads) = ib_joint_loss(params, fp, labels, beta)?;
    let (marginal, g_marginal) = ib_marginal_loss(params, fp, labels, beta_v)?;
    grads.add_scaled(&g_marginal, alpha);
    let total = joint.value + alpha * marginal.value;
    Ok((
        LossBreakdown {
            ce_joint: joint.ce,
            kl_joint: joint.kl,
            ce_view: marginal.ce_view,
            kl_view: marginal.kl_view,
            total,
        },
        grads,
    ))
}
