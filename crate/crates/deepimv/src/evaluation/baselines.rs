//! Reference baselines: feature concatenation with mean imputation
//! (pre-integration) and a per-view prediction ensemble (post-integration).

use crate::data::{MultiViewDataset, ViewMeans};
use crate::error::{contract, numeric, Result};
use crate::evaluation::metrics::{auroc, MetricsReport};
use crate::losses::cross_entropy;
use crate::numerics::{
    adam_step, mlp_apply, mlp_backprop, softmax_rows, AdamState, Matrix, MlpParams, Mode,
    RngState,
};
use crate::training::TrainConfig;

/// Train a plain MLP classifier with cross-entropy, Adam, seed-shuffled
/// mini-batches and the same early-stopping rule as the main trainer.
/// Returns the snapshot with the lowest validation cross-entropy.
pub(crate) fn train_mlp_classifier(
    cfg: &TrainConfig,
    hidden: &[usize],
    x_train: &Matrix,
    y_train: &[usize],
    x_val: &Matrix,
    y_val: &[usize],
    n_classes: usize,
) -> Result<MlpParams> {
    cfg.validate()?;
    if x_train.rows() == 0 || x_val.rows() == 0 {
        return Err(contract("classifier needs nonempty train and validation sets"));
    }
    let mut dims = vec![x_train.cols()];
    dims.extend_from_slice(hidden);
    dims.push(n_classes);
    let mut rng = RngState::from_seed(cfg.seed);
    let mut params = MlpParams::xavier(&dims, &mut rng)?;
    let mut flat = Vec::with_capacity(params.param_count());
    params.push_flat(&mut flat);
    let mut adam = AdamState::new(flat.len());

    let n = x_train.rows();
    let mut best: Option<(f64, MlpParams)> = None;
    let mut stale = 0usize;
    for epoch in 0..cfg.epochs {
        let mut perm: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut perm);
        for (batch_idx, chunk) in perm.chunks(cfg.batch_size).enumerate() {
            let xb = x_train.gather_rows(chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| y_train[i]).collect();
            let (logits, cache) = mlp_apply(&params, &xb, Mode::Train, cfg.dropout, &mut rng)?;
            let probs = softmax_rows(&logits);
            let mut glogits = probs;
            let scale = 1.0 / chunk.len() as f64;
            glogits.scale(scale);
            for (r, &y) in yb.iter().enumerate() {
                if y >= n_classes {
                    return Err(contract(format!("label {y} out of range")));
                }
                glogits.set(r, y, glogits.get(r, y) - scale);
            }
            let (grads, _) = mlp_backprop(&params, &cache, &glogits)?;
            let mut gflat = Vec::with_capacity(flat.len());
            grads.push_flat(&mut gflat);
            adam_step(&mut adam, &mut flat, &gflat, cfg.learning_rate, cfg.l1).map_err(|e| {
                numeric(format!("epoch {epoch}, batch {batch_idx}: {e}"))
            })?;
            let mut pos = 0;
            params.read_flat(&flat, &mut pos);
        }
        let mut eval_rng = RngState::from_seed(0);
        let (logits, _) = mlp_apply(&params, x_val, Mode::Eval, 0.0, &mut eval_rng)?;
        let val_ce = cross_entropy(&softmax_rows(&logits), y_val)?;
        let improved = best.as_ref().map_or(true, |(c, _)| val_ce < *c);
        if improved {
            best = Some((val_ce, params.clone()));
            stale = 0;
        } else {
            stale += 1;
        }
        if stale >= cfg.patience {
            break;
        }
    }
    Ok(best.expect("at least one epoch ran").1)
}

pub(crate) fn classifier_proba(params: &MlpParams, x: &Matrix) -> Result<Matrix> {
    let mut rng = RngState::from_seed(0);
    let (logits, _) = mlp_apply(params, x, Mode::Eval, 0.0, &mut rng)?;
    Ok(softmax_rows(&logits))
}

/// Pre-integration baseline: missing views are mean-imputed (training
/// statistics only), all views are concatenated and a single MLP is
/// trained on the result.
#[derive(Debug, Clone)]
pub struct Base1Model {
    pub mlp: MlpParams,
    pub means: ViewMeans,
    pub n_classes: usize,
}

impl Base1Model {
    pub fn predict_proba(&self, ds: &MultiViewDataset) -> Result<Matrix> {
        let x = self.means.apply(ds)?;
        classifier_proba(&self.mlp, &x)
    }
}

pub fn train_base1(
    config: &TrainConfig,
    train: &MultiViewDataset,
    val: &MultiViewDataset,
) -> Result<(Base1Model, MetricsReport)> {
    let means = ViewMeans::fit(train)?;
    let x_train = means.apply(train)?;
    let x_val = means.apply(val)?;
    let n_classes = train.n_classes().max(val.n_classes());
    let mlp = train_mlp_classifier(
        config,
        &config.encoder_hidden,
        &x_train,
        &train.labels,
        &x_val,
        &val.labels,
        n_classes,
    )?;
    let model = Base1Model {
        mlp,
        means,
        n_classes,
    };
    let report = validation_report(&model.predict_proba(val)?, &val.labels)?;
    Ok((model, report))
}

/// Post-integration baseline: one MLP per view, each trained on the
/// samples observing that view; test-time scores average the
/// class-probability vectors of the observed views.
#[derive(Debug, Clone)]
pub struct Base2Model {
    pub per_view: Vec<MlpParams>,
    pub n_classes: usize,
}

impl Base2Model {
    pub fn predict_proba(&self, ds: &MultiViewDataset) -> Result<Matrix> {
        if ds.n_views() != self.per_view.len() {
            return Err(contract(format!(
                "dataset has {} views, model has {}",
                ds.n_views(),
                self.per_view.len()
            )));
        }
        let n = ds.n_samples();
        let mut out = Matrix::zeros(n, self.n_classes);
        for v in 0..ds.n_views() {
            let rows = ds.mask.rows_observing(v);
            if rows.is_empty() {
                continue;
            }
            let x = ds.views[v].gather_rows(&rows);
            let probs = classifier_proba(&self.per_view[v], &x)?;
            for (local, &sample) in rows.iter().enumerate() {
                for c in 0..self.n_classes {
                    out.set(sample, c, out.get(sample, c) + probs.get(local, c));
                }
            }
        }
        for sample in 0..n {
            let observed = ds.mask.observed_views(sample).len() as f64;
            for c in 0..self.n_classes {
                out.set(sample, c, out.get(sample, c) / observed);
            }
        }
        Ok(out)
    }
}

pub fn train_base2(
    config: &TrainConfig,
    train: &MultiViewDataset,
    val: &MultiViewDataset,
) -> Result<(Base2Model, MetricsReport)> {
    let n_classes = train.n_classes().max(val.n_classes());
    let mut per_view = Vec::with_capacity(train.n_views());
    for v in 0..train.n_views() {
        let train_rows = train.mask.rows_observing(v);
        if train_rows.is_empty() {
            return Err(contract(format!(
                "view {v} is observed by no training sample"
            )));
        }
        let x_train = train.views[v].gather_rows(&train_rows);
        let y_train: Vec<usize> = train_rows.iter().map(|&r| train.labels[r]).collect();
        // Fall back to the training rows when validation never observes
        // the view.
        let val_rows = val.mask.rows_observing(v);
        let (x_val, y_val) = if val_rows.is_empty() {
            (x_train.clone(), y_train.clone())
        } else {
            (
                val.views[v].gather_rows(&val_rows),
                val_rows.iter().map(|&r| val.labels[r]).collect(),
            )
        };
        per_view.push(train_mlp_classifier(
            config,
            &config.encoder_hidden,
            &x_train,
            &y_train,
            &x_val,
            &y_val,
            n_classes,
        )?);
    }
    let model = Base2Model {
        per_view,
        n_classes,
    };
    let report = validation_report(&model.predict_proba(val)?, &val.labels)?;
    Ok((model, report))
}

fn validation_report(probs: &Matrix, labels: &[usize]) -> Result<MetricsReport> {
    let mut report = MetricsReport::new(&["split"], "auroc");
    if probs.cols() == 2 {
        let scores: Vec<f64> = (0..probs.rows()).map(|r| probs.get(r, 1)).collect();
        report.push(vec!["validation".into()], vec![auroc(&scores, labels)?]);
    }
    Ok(report)
}
