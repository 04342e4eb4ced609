//! Dataset ingestion, preprocessing, synthetic generation, artificial
//! view-missingness, label binarization and splitting.

pub mod kernel_pca;
pub mod loader;
pub mod synth;

pub use kernel_pca::{kernel_pca_polynomial, KernelPcaProjector};
pub use loader::{load_dataset, save_dataset};
pub use synth::{synthesize_dataset, SynthConfig};

use crate::error::{contract, shape, Result};
use crate::model::{MultiViewBatch, ViewMask};
use crate::numerics::{Matrix, RngState};

/// Per-view feature matrices, a per-sample view-availability mask and
/// class labels. Rows of masked views hold zeros and are never read.
#[derive(Debug, Clone)]
pub struct MultiViewDataset {
    pub views: Vec<Matrix>,
    pub mask: ViewMask,
    pub labels: Vec<usize>,
    pub ids: Option<Vec<String>>,
}

impl MultiViewDataset {
    pub fn new(
        views: Vec<Matrix>,
        mask: ViewMask,
        labels: Vec<usize>,
        ids: Option<Vec<String>>,
    ) -> Result<Self> {
        let n = mask.n_samples();
        if views.len() != mask.n_views() {
            return Err(shape(format!(
                "{} view matrices but the mask covers {} views",
                views.len(),
                mask.n_views()
            )));
        }
        for (v, m) in views.iter().enumerate() {
            if m.rows() != n {
                return Err(shape(format!(
                    "view {v} has {} rows, expected {n}",
                    m.rows()
                )));
            }
        }
        if labels.len() != n {
            return Err(shape(format!("{} labels for {n} samples", labels.len())));
        }
        if let Some(ids) = &ids {
            if ids.len() != n {
                return Err(shape(format!("{} ids for {n} samples", ids.len())));
            }
        }
        // Observed rows must be clean; masked rows are free to hold anything.
        for (v, m) in views.iter().enumerate() {
            for r in 0..n {
                if mask.is_observed(r, v) && !m.row(r).iter().all(|x| x.is_finite()) {
                    return Err(contract(format!(
                        "observed row {r} of view {v} contains non-finite values"
                    )));
                }
            }
        }
        Ok(MultiViewDataset {
            views,
            mask,
            labels,
            ids,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.mask.n_samples()
    }

    pub fn n_views(&self) -> usize {
        self.mask.n_views()
    }

    pub fn view_dims(&self) -> Vec<usize> {
        self.views.iter().map(|m| m.cols()).collect()
    }

    /// Number of classes implied by the labels (max label + 1, at least 2).
    pub fn n_classes(&self) -> usize {
        (self.labels.iter().copied().max().unwrap_or(0) + 1).max(2)
    }

    /// Gather the given samples into a new dataset, preserving order.
    pub fn subset(&self, indices: &[usize]) -> MultiViewDataset {
        MultiViewDataset {
            views: self.views.iter().map(|m| m.gather_rows(indices)).collect(),
            mask: self.mask.gather(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            ids: self
                .ids
                .as_ref()
                .map(|ids| indices.iter().map(|&i| ids[i].clone()).collect()),
        }
    }

    /// All samples as one batch, with the labels alongside.
    pub fn full_batch(&self) -> Result<(MultiViewBatch, Vec<usize>)> {
        let batch = MultiViewBatch::new(self.views.clone(), self.mask.clone())?;
        Ok((batch, self.labels.clone()))
    }

    /// A batch of the given samples.
    pub fn batch(&self, indices: &[usize]) -> Result<(MultiViewBatch, Vec<usize>)> {
        let sub = self.subset(indices);
        sub.full_batch()
    }

    /// Copy with the mask intersected against a fixed view set (the
    /// test-time view-restriction protocol).
    pub fn restrict_views(&self, views: &[usize]) -> Result<MultiViewDataset> {
        Ok(MultiViewDataset {
            views: self.views.clone(),
            mask: self.mask.restrict_to(views)?,
            labels: self.labels.clone(),
            ids: self.ids.clone(),
        })
    }
}

/// Uniform permutation split into train/validation/test. Fractions must be
/// positive and sum to one; sizes round down for the first two splits and
/// the remainder goes to test. Every split must end up nonempty.
pub fn split_dataset(
    ds: &MultiViewDataset,
    fractions: (f64, f64, f64),
    rng: &mut RngState,
) -> Result<(MultiViewDataset, MultiViewDataset, MultiViewDataset)> {
    let (f1, f2, f3) = fractions;
    if f1 <= 0.0 || f2 <= 0.0 || f3 <= 0.0 {
        return Err(contract("split fractions must be positive"));
    }
    if (f1 + f2 + f3 - 1.0).abs() > 1e-9 {
        return Err(contract(format!(
            "split fractions sum to {}, expected 1",
            f1 + f2 + f3
        )));
    }
    let n = ds.n_samples();
    let mut perm: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut perm);
    let n1 = (f1 * n as f64).floor() as usize;
    let n2 = (f2 * n as f64).floor() as usize;
    if n1 == 0 || n2 == 0 || n1 + n2 >= n {
        return Err(contract(format!(
            "split of {n} samples leaves an empty part ({n1}/{n2}/{})",
            n as i64 - n1 as i64 - n2 as i64
        )));
    }
    let train = ds.subset(&perm[..n1]);
    let val = ds.subset(&perm[n1..n1 + n2]);
    let test = ds.subset(&perm[n1 + n2..]);
    Ok((train, val, test))
}

/// Artificially construct view-missingness: `floor(N * R)` samples are
/// drawn uniformly without replacement and each is assigned a pattern drawn
/// uniformly from the `2^V - 2` nonempty proper subsets of views. Features
/// of newly masked views are zeroed.
pub fn apply_missingness(
    ds: &MultiViewDataset,
    rate: f64,
    rng: &mut RngState,
) -> Result<MultiViewDataset> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(contract(format!("missing rate {rate} must be in [0, 1]")));
    }
    let v = ds.n_views();
    if v < 2 {
        return Err(contract("apply_missingness requires at least 2 views"));
    }
    let n = ds.n_samples();
    let n_incomplete = (n as f64 * rate).floor() as usize;
    if n_incomplete == 0 {
        return Ok(ds.clone());
    }
    let mut perm: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut perm);
    let chosen = &perm[..n_incomplete];

    // Patterns are bitmasks over views, excluding empty and full.
    let full = (1usize << v) - 1;
    let patterns: Vec<usize> = (1..full).collect();

    let mut mask_rows: Vec<bool> = ds.mask.rows().to_vec();
    let mut views = ds.views.clone();
    for &sample in chosen {
        let pattern = patterns[rng.next_index(patterns.len())];
        for view in 0..v {
            let observed = pattern & (1 << view) != 0;
            mask_rows[sample * v + view] = observed;
            if !observed {
                for x in views[view].row_mut(sample) {
                    *x = 0.0;
                }
            }
        }
    }
    let mask = ViewMask::new(n, v, mask_rows)?;
    MultiViewDataset::new(views, mask, ds.labels.clone(), ds.ids.clone())
}

/// Binarize a real-valued response at the nearest-rank 75th percentile:
/// label 1 iff the value is strictly above the threshold, so ties at the
/// threshold fall into class 0.
pub fn quartile_binarize(values: &[f64]) -> Result<Vec<usize>> {
    let n = values.len();
    if n < 4 {
        return Err(contract(format!(
            "quartile_binarize needs at least 4 values, got {n}"
        )));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(contract(format!("non-finite value {v}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let rank = ((0.75 * n as f64).ceil() as usize).max(1);
    let threshold = sorted[rank - 1];
    Ok(values
        .iter()
        .map(|&v| if v > threshold { 1 } else { 0 })
        .collect())
}

/// Per-view column means over the samples observing each view. Fit on
/// training data and reuse on validation/test so no statistics leak.
#[derive(Debug, Clone)]
pub struct ViewMeans {
    means: Vec<Vec<f64>>,
}

impl ViewMeans {
    pub fn fit(ds: &MultiViewDataset) -> Result<Self> {
        let mut means = Vec::with_capacity(ds.n_views());
        for v in 0..ds.n_views() {
            let rows = ds.mask.rows_observing(v);
            if rows.is_empty() {
                return Err(contract(format!(
                    "view {v} is observed by no training sample"
                )));
            }
            let d = ds.views[v].cols();
            let mut mean = vec![0.0; d];
            for &r in &rows {
                for (m, &x) in mean.iter_mut().zip(ds.views[v].row(r)) {
                    *m += x;
                }
            }
            for m in &mut mean {
                *m /= rows.len() as f64;
            }
            means.push(mean);
        }
        Ok(ViewMeans { means })
    }

    /// Replace missing views by the fitted column means and concatenate
    /// all views horizontally.
    pub fn apply(&self, ds: &MultiViewDataset) -> Result<Matrix> {
        if self.means.len() != ds.n_views() {
            return Err(shape(format!(
                "means fitted for {} views, dataset has {}",
                self.means.len(),
                ds.n_views()
            )));
        }
        for (v, mean) in self.means.iter().enumerate() {
            if mean.len() != ds.views[v].cols() {
                return Err(shape(format!("view {v} width changed since fitting")));
            }
        }
        let n = ds.n_samples();
        let total: usize = ds.views.iter().map(|m| m.cols()).sum();
        let mut out = Matrix::zeros(n, total);
        for r in 0..n {
            let row = out.row_mut(r);
            let mut offset = 0;
            for (v, m) in ds.views.iter().enumerate() {
                let d = m.cols();
                if ds.mask.is_observed(r, v) {
                    row[offset..offset + d].copy_from_slice(m.row(r));
                } else {
                    row[offset..offset + d].copy_from_slice(&self.means[v]);
                }
                offset += d;
            }
        }
        Ok(out)
    }
}

/// Mean-impute missing views from this dataset's own statistics and return
/// the horizontal concatenation of all views.
pub fn mean_impute(ds: &MultiViewDataset) -> Result<Matrix> {
    ViewMeans::fit(ds)?.apply(ds)
}
