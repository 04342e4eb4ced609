//! Metrics, reference baselines and experiment harnesses.

pub mod baselines;
pub mod harness;
pub mod metrics;

pub use baselines::{train_base1, train_base2, Base1Model, Base2Model};
pub use harness::{
    latent_pca_projection, missing_rate_sweep, run_ablation, split_fingerprint, view_count_curve,
    view_subsets,
};
pub use metrics::{auroc, information_quantity, mean_ci95, MetricsReport, ReportRow};
