//! Experiment harnesses: the fusion/marginal-IB ablation grid, the
//! missing-rate robustness sweep, view-count evaluation curves and the
//! latent PCA projection.
//!
//! Repeats are paired: within one repeat every condition shares the same
//! split and the same artificial missingness, and runs from the same seed,
//! so condition differences are not split noise. Repeat `r` derives its
//! seed as `config.seed + r`.

use crate::data::{apply_missingness, split_dataset, MultiViewDataset};
use crate::error::{contract, Result};
use crate::evaluation::baselines::train_base1;
use crate::evaluation::metrics::{auroc, MetricsReport};
use crate::model::{forward, predict_proba, DeepIMVParams, Fusion};
use crate::numerics::{jacobi_eigh, Matrix, Mode, RngState};
use crate::training::{train_deepimv, TrainConfig};

/// Fixed salts separating the split and missingness noise streams from
/// the training stream derived from the same repeat seed.
const SPLIT_SALT: u64 = 0x73706c69;
const MISS_SALT: u64 = 0x6d697373;

/// All `C(V, k)` view subsets of size `k`.
pub fn view_subsets(n_views: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(k);
    fn recurse(start: usize, n: usize, k: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == k {
            out.push(current.clone());
            return;
        }
        for v in start..n {
            current.push(v);
            recurse(v + 1, n, k, current, out);
            current.pop();
        }
    }
    recurse(0, n_views, k, &mut current, &mut out);
    out
}

fn binary_scores(probs: &Matrix) -> Result<Vec<f64>> {
    if probs.cols() != 2 {
        return Err(contract("AUROC curves require a binary task"));
    }
    Ok((0..probs.rows()).map(|r| probs.get(r, 1)).collect())
}

/// Test AUROC per observed-view count: for each `k` in `1..=V` the mask is
/// restricted to every subset of size `k` in turn and the AUROCs are
/// averaged.
pub fn view_count_curve(
    params: &DeepIMVParams,
    test: &MultiViewDataset,
    fusion: Fusion,
) -> Result<Vec<f64>> {
    let v = test.n_views();
    let mut curve = Vec::with_capacity(v);
    for k in 1..=v {
        let mut total = 0.0;
        let subsets = view_subsets(v, k);
        for subset in &subsets {
            let restricted = test.restrict_views(subset)?;
            let (batch, labels) = restricted.full_batch()?;
            let probs = predict_proba(params, &batch, fusion)?;
            total += auroc(&binary_scores(&probs)?, &labels)?;
        }
        curve.push(total / subsets.len() as f64);
    }
    Ok(curve)
}

const ABLATION_VARIANTS: [(&str, Fusion, bool); 4] = [
    ("moe", Fusion::Moe, false),
    ("moe_marginal", Fusion::Moe, true),
    ("poe", Fusion::Poe, false),
    ("poe_marginal", Fusion::Poe, true),
];

/// Fingerprint of a split, used to verify that conditions inside one
/// repeat really saw identical data.
pub fn split_fingerprint(ds: &MultiViewDataset) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut mix = |x: u64| {
        h ^= x;
        h = h.wrapping_mul(0x1000_0000_01b3);
    };
    for &l in &ds.labels {
        mix(l as u64 + 1);
    }
    for m in &ds.views {
        for &x in m.data() {
            mix(x.to_bits());
        }
    }
    for &b in ds.mask.rows() {
        mix(u64::from(b) + 7);
    }
    h
}

/// The 4-variant ablation grid ({MoE, PoE} x {with, without marginal IBs})
/// evaluated at every test-time view count. Marginal-IB "off" trains with
/// `alpha = 0`. Missingness at `train_missing_rate` is applied to the
/// training split only.
pub fn run_ablation(
    config: &TrainConfig,
    ds: &MultiViewDataset,
    repeats: usize,
    train_missing_rate: f64,
) -> Result<MetricsReport> {
    if repeats == 0 {
        return Err(contract("repeats must be >= 1"));
    }
    let v = ds.n_views();
    let mut cells: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); v]; ABLATION_VARIANTS.len()];
    for repeat in 0..repeats {
        let seed = config.seed.wrapping_add(repeat as u64);
        let mut split_rng = RngState::from_seed(seed ^ SPLIT_SALT);
        let (train, val, test) = split_dataset(ds, (0.64, 0.16, 0.20), &mut split_rng)?;
        let train = if train_missing_rate > 0.0 && v >= 2 {
            let mut miss_rng = RngState::from_seed(seed ^ MISS_SALT);
            apply_missingness(&train, train_missing_rate, &mut miss_rng)?
        } else {
            train
        };
        for (i, (_, fusion, marginal)) in ABLATION_VARIANTS.iter().enumerate() {
            let mut cfg = config.clone();
            cfg.fusion = *fusion;
            cfg.marginal_ib = *marginal;
            cfg.seed = seed;
            let (params, _) = train_deepimv(&cfg, &train, &val)?;
            let curve = view_count_curve(&params, &test, *fusion)?;
            for (k, value) in curve.into_iter().enumerate() {
                cells[i][k].push(value);
            }
        }
    }
    let mut report = MetricsReport::new(&["variant", "views"], "auroc");
    for (i, (name, _, _)) in ABLATION_VARIANTS.iter().enumerate() {
        for k in 0..v {
            report.push(
                vec![name.to_string(), (k + 1).to_string()],
                cells[i][k].clone(),
            );
        }
    }
    Ok(report)
}

/// Missing-rate robustness sweep: for each rate in the grid, apply
/// missingness to the training split, train, and evaluate on the fixed
/// complete-view test split. With `include_base1` the mean-imputation
/// baseline runs on exactly the same data.
pub fn missing_rate_sweep(
    config: &TrainConfig,
    ds: &MultiViewDataset,
    r_grid: &[f64],
    repeats: usize,
    include_base1: bool,
) -> Result<MetricsReport> {
    if repeats == 0 {
        return Err(contract("repeats must be >= 1"));
    }
    if let Some(&r) = r_grid.iter().find(|&&r| !(0.0..=1.0).contains(&r)) {
        return Err(contract(format!("missing rate {r} outside [0, 1]")));
    }
    let mut report = MetricsReport::new(&["method", "missing_rate"], "auroc");
    let mut dimv_cells: Vec<Vec<f64>> = vec![Vec::new(); r_grid.len()];
    let mut base1_cells: Vec<Vec<f64>> = vec![Vec::new(); r_grid.len()];
    for repeat in 0..repeats {
        let seed = config.seed.wrapping_add(repeat as u64);
        // Splits depend on the repeat only, never on the rate.
        let mut split_rng = RngState::from_seed(seed ^ SPLIT_SALT);
        let (train, val, test) = split_dataset(ds, (0.64, 0.16, 0.20), &mut split_rng)?;
        let (test_batch, test_labels) = test.full_batch()?;
        for (ri, &rate) in r_grid.iter().enumerate() {
            let mut miss_rng = RngState::from_seed(seed ^ MISS_SALT);
            let train_r = apply_missingness(&train, rate, &mut miss_rng)?;
            let mut cfg = config.clone();
            cfg.seed = seed;
            let (params, _) = train_deepimv(&cfg, &train_r, &val)?;
            let probs = predict_proba(&params, &test_batch, cfg.fusion)?;
            dimv_cells[ri].push(auroc(&binary_scores(&probs)?, &test_labels)?);
            if include_base1 {
                let (base1, _) = train_base1(&cfg, &train_r, &val)?;
                let probs = base1.predict_proba(&test)?;
                base1_cells[ri].push(auroc(&binary_scores(&probs)?, &test_labels)?);
            }
        }
    }
    for (ri, &rate) in r_grid.iter().enumerate() {
        report.push(
            vec!["deepimv".into(), format!("{rate}")],
            dimv_cells[ri].clone(),
        );
    }
    if include_base1 {
        for (ri, &rate) in r_grid.iter().enumerate() {
            report.push(
                vec!["base1".into(), format!("{rate}")],
                base1_cells[ri].clone(),
            );
        }
    }
    Ok(report)
}

/// Joint-posterior means under a fixed test-time view pattern, centered
/// and projected onto the top two principal axes.
pub fn latent_pca_projection(
    params: &DeepIMVParams,
    ds: &MultiViewDataset,
    pattern: &[usize],
    fusion: Fusion,
) -> Result<Matrix> {
    if params.latent_dim < 2 {
        return Err(contract("latent PCA projection requires latent_dim >= 2"));
    }
    if ds.n_samples() < 2 {
        return Err(contract("latent PCA projection requires >= 2 samples"));
    }
    let restricted = ds.restrict_views(pattern)?;
    let (batch, _) = restricted.full_batch()?;
    let mut rng = RngState::from_seed(0);
    let fp = forward(params, &batch, fusion, Mode::Eval, 0.0, &mut rng)?;
    let n = fp.joint_mean.rows();
    let d = fp.joint_mean.cols();

    let means: Vec<f64> = fp
        .joint_mean
        .col_sums()
        .iter()
        .map(|s| s / n as f64)
        .collect();
    let mut centered = fp.joint_mean.clone();
    for r in 0..n {
        for c in 0..d {
            centered.set(r, c, centered.get(r, c) - means[c]);
        }
    }
    let mut cov = centered.matmul_transpose_lhs(&centered);
    cov.scale(1.0 / (n - 1) as f64);
    let (_, vecs) = jacobi_eigh(&cov)?;
    let mut out = Matrix::zeros(n, 2);
    for r in 0..n {
        for axis in 0..2 {
            let mut acc = 0.0;
            for c in 0..d {
                acc += centered.get(r, c) * vecs.get(c, axis);
            }
            out.set(r, axis, acc);
        }
    }
    Ok(out)
}
