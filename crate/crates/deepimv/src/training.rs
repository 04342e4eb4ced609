//! End-to-end training: shuffled mini-batches over incomplete multi-view
//! samples, the total IB loss, one combined Adam update over all
//! parameters, validation-based model selection with early stopping, and a
//! frozen-noise gradient-check harness.

use crate::data::MultiViewDataset;
use crate::error::{contract, numeric, Result};
use crate::evaluation::auroc;
use crate::losses::{ib_joint_loss, ib_marginal_loss, total_loss, LossBreakdown};
use crate::model::{
    forward, predict_proba_mc, DeepIMVParams, Fusion, ModelArch,
};
use crate::numerics::{adam_step, AdamState, Mode, RngState};

/// Hyperparameters and architecture sizes for a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Maximum number of epochs.
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Weight of the summed marginal IB losses in the total.
    pub alpha: f64,
    /// Weight of the joint KL term.
    pub beta: f64,
    /// Per-view KL weights; `None` uses `beta` for every view.
    pub beta_v: Option<Vec<f64>>,
    pub dropout: f64,
    pub l1: f64,
    pub fusion: Fusion,
    /// Switch for the view-specific predictors and marginal IB losses;
    /// turning it off trains with `alpha = 0`.
    pub marginal_ib: bool,
    pub seed: u64,
    /// Early stopping: epochs without validation improvement before halting.
    pub patience: usize,
    pub latent_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub predictor_hidden: Vec<usize>,
    /// Select the snapshot on the joint IB loss alone instead of the total.
    pub select_on_joint: bool,
    /// Monte-Carlo samples for evaluation-time predictions (0 = posterior mean).
    pub mc_eval_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 500,
            batch_size: 32,
            learning_rate: 1e-4,
            alpha: 1.0,
            beta: 0.01,
            beta_v: None,
            dropout: 0.7,
            l1: 0.0,
            fusion: Fusion::Poe,
            marginal_ib: true,
            seed: 1,
            patience: 20,
            latent_dim: 50,
            encoder_hidden: vec![100, 100],
            predictor_hidden: vec![100, 100],
            select_on_joint: false,
            mc_eval_samples: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(contract("epochs, batch_size and patience must be >= 1"));
        }
        if self.learning_rate <= 0.0 {
            return Err(contract("learning_rate must be positive"));
        }
        if self.alpha < 0.0 || self.beta < 0.0 || self.l1 < 0.0 {
            return Err(contract("alpha, beta and l1 must be nonnegative"));
        }
        if let Some(bv) = &self.beta_v {
            if bv.iter().any(|&b| b < 0.0) {
                return Err(contract("beta_v entries must be nonnegative"));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(contract("dropout must be in [0, 1)"));
        }
        if self.latent_dim == 0 {
            return Err(contract("latent_dim must be >= 1"));
        }
        Ok(())
    }

    /// `alpha` with the marginal-IB switch applied.
    pub fn effective_alpha(&self) -> f64 {
        if self.marginal_ib {
            self.alpha
        } else {
            0.0
        }
    }

    pub fn beta_vector(&self, n_views: usize) -> Result<Vec<f64>> {
        match &self.beta_v {
            Some(bv) => {
                if bv.len() != n_views {
                    return Err(contract(format!(
                        "beta_v has {} entries for {n_views} views",
                        bv.len()
                    )));
                }
                Ok(bv.clone())
            }
            None => Ok(vec![self.beta; n_views]),
        }
    }

    pub fn arch_for(&self, view_dims: Vec<usize>, n_classes: usize) -> ModelArch {
        ModelArch {
            view_dims,
            latent_dim: self.latent_dim,
            n_classes,
            encoder_hidden: self.encoder_hidden.clone(),
            predictor_hidden: self.predictor_hidden.clone(),
        }
    }
}

/// One epoch's summary.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train: LossBreakdown,
    pub val: LossBreakdown,
    pub val_auroc: f64,
    pub selected: bool,
}

/// Per-epoch loss traces and the selected snapshot index.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub selected_epoch: usize,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_total,val_total,val_auroc,selected\n");
        for rec in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                rec.epoch,
                rec.train.total,
                rec.val.total,
                rec.val_auroc,
                u8::from(rec.selected)
            ));
        }
        out
    }
}

fn infer_classes(train: &MultiViewDataset, val: &MultiViewDataset) -> usize {
    train.n_classes().max(val.n_classes())
}

/// Train the full network.
///
/// Epochs run over a seed-shuffled permutation in mini-batches (the final
/// short batch is kept). Each step is one forward pass in train mode, the
/// total loss, and a single Adam update over the concatenated parameter
/// vector. The returned parameters are the snapshot with the best
/// validation selection criterion; training stops early after `patience`
/// epochs without improvement.
pub fn train_deepimv(
    config: &TrainConfig,
    train: &MultiViewDataset,
    val: &MultiViewDataset,
) -> Result<(DeepIMVParams, TrainHistory)> {
    config.validate()?;
    if train.n_samples() == 0 || val.n_samples() == 0 {
        return Err(contract("train and validation sets must be nonempty"));
    }
    if train.view_dims() != val.view_dims() {
        return Err(contract("train and validation view dimensions differ"));
    }
    let n_classes = infer_classes(train, val);
    let arch = config.arch_for(train.view_dims(), n_classes);
    let n_views = train.n_views();
    let beta_v = config.beta_vector(n_views)?;
    let alpha = config.effective_alpha();

    let mut rng = RngState::from_seed(config.seed);
    let mut params = DeepIMVParams::init(&arch, &mut rng)?;
    let mut flat = params.flatten();
    let mut adam = AdamState::new(flat.len());

    let n = train.n_samples();
    let mut best: Option<(f64, DeepIMVParams, usize)> = None;
    let mut stale_epochs = 0usize;
    let mut records: Vec<EpochRecord> = Vec::new();

    for epoch in 0..config.epochs {
        let mut perm: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut perm);
        let mut train_acc = LossBreakdown::zeros(n_views);
        for (batch_idx, chunk) in perm.chunks(config.batch_size).enumerate() {
            let (batch, labels) = train.batch(chunk)?;
            let fp = forward(
                &params,
                &batch,
                config.fusion,
                Mode::Train,
                config.dropout,
                &mut rng,
            )?;
            let (breakdown, grads) = total_loss(&params, &fp, &labels, alpha, config.beta, &beta_v)?;
            if !breakdown.total.is_finite() {
                return Err(numeric(format!(
                    "non-finite training loss at epoch {epoch}, batch {batch_idx}"
                )));
            }
            let gflat = grads.flatten();
            adam_step(&mut adam, &mut flat, &gflat, config.learning_rate, config.l1)?;
            params.assign_from_flat(&flat)?;
            train_acc.add_scaled(&breakdown, chunk.len() as f64 / n as f64);
        }

        let (val_loss, val_auroc) = evaluate_validation(&params, val, config)?;
        if !val_loss.total.is_finite() {
            return Err(numeric(format!(
                "non-finite validation loss at epoch {epoch}"
            )));
        }
        let criterion = if config.select_on_joint {
            val_loss.ce_joint + config.beta * val_loss.kl_joint
        } else {
            val_loss.total
        };
        let improved = best.as_ref().map_or(true, |(c, _, _)| criterion < *c);
        if improved {
            best = Some((criterion, params.clone(), epoch));
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
        }
        records.push(EpochRecord {
            epoch,
            train: train_acc,
            val: val_loss,
            val_auroc,
            selected: false,
        });
        if stale_epochs >= config.patience {
            break;
        }
    }

    let (_, best_params, selected_epoch) = best.expect("at least one epoch ran");
    records[selected_epoch].selected = true;
    Ok((
        best_params,
        TrainHistory {
            epochs: records,
            selected_epoch,
        },
    ))
}

/// Eval-mode loss breakdown and AUROC over the whole set. The AUROC score
/// is column 1 of the joint prediction for binary tasks and NaN otherwise.
pub fn evaluate_validation(
    params: &DeepIMVParams,
    set: &MultiViewDataset,
    config: &TrainConfig,
) -> Result<(LossBreakdown, f64)> {
    if set.n_samples() == 0 {
        return Err(contract("evaluation set is empty"));
    }
    let (batch, labels) = set.full_batch()?;
    let mut rng = RngState::from_seed(0); // eval consumes no draws
    let fp = forward(params, &batch, config.fusion, Mode::Eval, 0.0, &mut rng)?;
    let beta_v = config.beta_vector(params.n_views())?;
    let breakdown = loss_values(params, &fp, &labels, config, &beta_v)?;

    let val_auroc = if params.n_classes == 2 && labels.iter().any(|&y| y == 0) && labels.iter().any(|&y| y == 1) {
        let probs = if config.mc_eval_samples > 0 {
            let mut mc_rng = RngState::from_seed(config.seed ^ 0x5851_f42d_4c95_7f2d);
            predict_proba_mc(params, &batch, config.fusion, config.mc_eval_samples, &mut mc_rng)?
        } else {
            fp.joint_probs.clone()
        };
        let scores: Vec<f64> = (0..probs.rows()).map(|r| probs.get(r, 1)).collect();
        auroc(&scores, &labels)?
    } else {
        f64::NAN
    };
    Ok((breakdown, val_auroc))
}

/// Loss breakdown without gradient work (used for evaluation).
fn loss_values(
    params: &DeepIMVParams,
    fp: &crate::model::ForwardPass,
    labels: &[usize],
    config: &TrainConfig,
    beta_v: &[f64],
) -> Result<LossBreakdown> {
    let (joint, _) = ib_joint_loss(params, fp, labels, config.beta)?;
    let (marginal, _) = ib_marginal_loss(params, fp, labels, beta_v)?;
    let alpha = config.effective_alpha();
    Ok(LossBreakdown {
        ce_joint: joint.ce,
        kl_joint: joint.kl,
        ce_view: marginal.ce_view,
        kl_view: marginal.kl_view,
        total: joint.value + alpha * marginal.value,
    })
}

/// Outcome of the frozen-noise gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: usize,
    pub n_params: usize,
}

/// Compare the analytic gradient of the total loss against central finite
/// differences (`h = 1e-5`) with the dropout masks and reparameterization
/// noise frozen across all perturbed evaluations (every forward pass
/// re-draws from the same snapshot of the noise stream).
pub fn grad_check(config: &TrainConfig, dataset: &MultiViewDataset) -> Result<GradCheckReport> {
    config.validate()?;
    if dataset.n_samples() == 0 {
        return Err(contract("grad_check dataset is empty"));
    }
    let n_classes = dataset.n_classes();
    let arch = config.arch_for(dataset.view_dims(), n_classes);
    let mut init_rng = RngState::from_seed(config.seed);
    let params = DeepIMVParams::init(&arch, &mut init_rng)?;
    let n_params = params.param_count();
    if n_params > 2000 {
        return Err(contract(format!(
            "grad_check is O(P) forward passes; {n_params} parameters exceed the 2000 limit"
        )));
    }
    let (batch, labels) = dataset.full_batch()?;
    let beta_v = config.beta_vector(dataset.n_views())?;
    let alpha = config.effective_alpha();
    let noise = RngState::from_seed(config.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(1));

    let run_forward = |p: &DeepIMVParams| {
        let mut rng = noise.clone();
        forward(p, &batch, config.fusion, Mode::Train, config.dropout, &mut rng)
    };

    let fp = run_forward(&params)?;
    let (_, grads) = total_loss(&params, &fp, &labels, alpha, config.beta, &beta_v)?;
    let analytic = grads.flatten();

    let eval_total = |p: &DeepIMVParams| -> Result<f64> {
        let fp = run_forward(p)?;
        let (breakdown, _) = total_loss(p, &fp, &labels, alpha, config.beta, &beta_v)?;
        Ok(breakdown.total)
    };

    let flat = params.flatten();
    let h = 1e-5;
    let mut max_rel_error = 0.0f64;
    let mut worst_param = 0usize;
    let mut scratch = params.clone();
    for i in 0..n_params {
        let mut bumped = flat.clone();
        bumped[i] = flat[i] + h;
        scratch.assign_from_flat(&bumped)?;
        let plus = eval_total(&scratch)?;
        bumped[i] = flat[i] - h;
        scratch.assign_from_flat(&bumped)?;
        let minus = eval_total(&scratch)?;
        let numeric_grad = (plus - minus) / (2.0 * h);
        let denom = analytic[i].abs().max(numeric_grad.abs()).max(1e-2);
        let rel = (analytic[i] - numeric_grad).abs() / denom;
        if rel > max_rel_error {
            max_rel_error = rel;
            worst_param = i;
        }
    }
    Ok(GradCheckReport {
        max_rel_error,
        worst_param,
        n_params,
    })
}
