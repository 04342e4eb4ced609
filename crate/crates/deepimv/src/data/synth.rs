//! Synthetic multi-view generator.
//!
//! Samples share a latent factor vector `t ~ N(0, I_k)`. The binary label
//! thresholds `w . t` at zero for a fixed unit weight vector (all-ones,
//! normalized) and is then flipped with the configured rate. Each view
//! sees only its factor subset through a fixed random linear map followed
//! by `tanh` plus Gaussian feature noise, so views carry complementary
//! label information and a nonlinear decision surface by construction.

use crate::data::MultiViewDataset;
use crate::error::{contract, Result};
use crate::model::ViewMask;
use crate::numerics::{Matrix, RngState};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_samples: usize,
    pub n_views: usize,
    /// Latent factor dimension k.
    pub factor_dim: usize,
    /// Feature width of each view.
    pub view_dims: Vec<usize>,
    /// Factor indices each view observes. Subsets must be nonempty and
    /// jointly cover all k factors.
    pub factor_subsets: Vec<Vec<usize>>,
    /// Standard deviation of the additive feature noise.
    pub noise: f64,
    /// Probability of flipping a label.
    pub label_flip: f64,
    pub seed: u64,
}

impl SynthConfig {
    /// Evenly partition `factor_dim` factors across the views.
    pub fn with_partitioned_factors(
        n_samples: usize,
        n_views: usize,
        factor_dim: usize,
        view_dim: usize,
        noise: f64,
        label_flip: f64,
        seed: u64,
    ) -> Self {
        let factor_subsets = partition_factors(factor_dim, n_views);
        SynthConfig {
            n_samples,
            n_views,
            factor_dim,
            view_dims: vec![view_dim; n_views],
            factor_subsets,
            noise,
            label_flip,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(contract("n_samples must be >= 1"));
        }
        if self.n_views == 0 || self.view_dims.len() != self.n_views {
            return Err(contract(format!(
                "view_dims has {} entries for {} views",
                self.view_dims.len(),
                self.n_views
            )));
        }
        if self.factor_dim == 0 {
            return Err(contract("factor_dim must be >= 1"));
        }
        if self.view_dims.iter().any(|&d| d == 0) {
            return Err(contract("view dims must be >= 1"));
        }
        if self.factor_subsets.len() != self.n_views {
            return Err(contract(format!(
                "{} factor subsets for {} views",
                self.factor_subsets.len(),
                self.n_views
            )));
        }
        let mut covered = vec![false; self.factor_dim];
        for (v, subset) in self.factor_subsets.iter().enumerate() {
            if subset.is_empty() {
                return Err(contract(format!("factor subset of view {v} is empty")));
            }
            for &f in subset {
                if f >= self.factor_dim {
                    return Err(contract(format!(
                        "view {v} references factor {f} >= k = {}",
                        self.factor_dim
                    )));
                }
                covered[f] = true;
            }
        }
        if covered.iter().any(|&c| !c) {
            return Err(contract(
                "factor subsets must jointly cover all label-relevant factors",
            ));
        }
        if self.noise < 0.0 || !(0.0..=1.0).contains(&self.label_flip) {
            return Err(contract("noise must be >= 0 and label_flip in [0, 1]"));
        }
        Ok(())
    }
}

/// Contiguous near-even partition of `0..k` into `v` blocks. With `v > k`
/// the tail views reuse the last factor so every subset stays nonempty.
pub fn partition_factors(k: usize, v: usize) -> Vec<Vec<usize>> {
    let mut subsets = Vec::with_capacity(v);
    if k >= v {
        let base = k / v;
        let extra = k % v;
        let mut next = 0;
        for i in 0..v {
            let len = base + usize::from(i < extra);
            subsets.push((next..next + len).collect());
            next += len;
        }
    } else {
        for i in 0..v {
            subsets.push(vec![i.min(k - 1)]);
        }
    }
    subsets
}

pub fn synthesize_dataset(cfg: &SynthConfig) -> Result<MultiViewDataset> {
    cfg.validate()?;
    let mut rng = RngState::from_seed(cfg.seed);
    let k = cfg.factor_dim;
    let w = 1.0 / (k as f64).sqrt(); // fixed unit weight, all-ones direction

    // Fixed per-view mixing maps, drawn first so the sample stream is
    // independent of architecture details.
    let maps: Vec<Matrix> = (0..cfg.n_views)
        .map(|v| {
            let sub = cfg.factor_subsets[v].len();
            let scale = 1.0 / (sub as f64).sqrt();
            let mut a = Matrix::zeros(cfg.view_dims[v], sub);
            for x in a.data_mut() {
                *x = rng.next_normal() * scale;
            }
            a
        })
        .collect();

    let n = cfg.n_samples;
    let mut views: Vec<Matrix> = cfg
        .view_dims
        .iter()
        .map(|&d| Matrix::zeros(n, d))
        .collect();
    let mut labels = Vec::with_capacity(n);
    let mut t = vec![0.0; k];
    for sample in 0..n {
        for x in t.iter_mut() {
            *x = rng.next_normal();
        }
        let score: f64 = t.iter().map(|&x| w * x).sum();
        let mut y = usize::from(score > 0.0);
        let u = rng.next_uniform();
        if u < cfg.label_flip {
            y = 1 - y;
        }
        labels.push(y);
        for v in 0..cfg.n_views {
            let sub = &cfg.factor_subsets[v];
            let a = &maps[v];
            let row = views[v].row_mut(sample);
            for (j, out) in row.iter_mut().enumerate() {
                let mut z = 0.0;
                for (c, &f) in sub.iter().enumerate() {
                    z += a.get(j, c) * t[f];
                }
                *out = z.tanh() + cfg.noise * rng.next_normal();
            }
        }
    }

    let ids = (0..n).map(|i| format!("s{i:06}")).collect();
    MultiViewDataset::new(
        views,
        ViewMask::full(n, cfg.n_views),
        labels,
        Some(ids),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_seed_deterministic() {
        let cfg = SynthConfig::with_partitioned_factors(50, 3, 6, 4, 0.1, 0.05, 99);
        let a = synthesize_dataset(&cfg).unwrap();
        let b = synthesize_dataset(&cfg).unwrap();
        assert_eq!(a.labels, b.labels);
        for v in 0..3 {
            assert_eq!(a.views[v], b.views[v]);
        }
    }

    #[test]
    fn label_prior_is_roughly_balanced() {
        let cfg = SynthConfig::with_partitioned_factors(2000, 4, 8, 5, 0.1, 0.0, 7);
        let ds = synthesize_dataset(&cfg).unwrap();
        let positives = ds.labels.iter().filter(|&&y| y == 1).count();
        let frac = positives as f64 / 2000.0;
        assert!((frac - 0.5).abs() < 0.03, "label prior {frac}");
    }

    #[test]
    fn partition_covers_all_factors() {
        for (k, v) in [(8usize, 4usize), (7, 3), (5, 5), (3, 4)] {
            let subsets = partition_factors(k, v);
            assert_eq!(subsets.len(), v);
            let mut covered = vec![false; k];
            for s in &subsets {
                assert!(!s.is_empty());
                for &f in s {
                    covered[f] = true;
                }
            }
            assert!(covered.iter().all(|&c| c), "k={k} v={v}: {subsets:?}");
        }
    }

    #[test]
    fn validation_rejects_uncovering_subsets() {
        let mut cfg = SynthConfig::with_partitioned_factors(10, 2, 4, 3, 0.1, 0.0, 1);
        cfg.factor_subsets = vec![vec![0], vec![1]];
        assert!(cfg.validate().is_err());
    }
}
