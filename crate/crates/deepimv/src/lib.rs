//! Supervised learning from incomplete multi-view observations.
//!
//! Each view gets a stochastic encoder emitting a diagonal-Gaussian
//! posterior over a shared latent space. The joint posterior is the
//! product of the observed experts with a standard-normal prior (closed
//! form, so missing views are simply ignored), and the whole network is
//! trained under joint plus marginal variational information-bottleneck
//! losses. Everything numerical is built here in 64-bit reals, including
//! reverse-mode backpropagation, so the gradients are exactly checkable
//! against finite differences.
//!
//! Module map:
//! - [`numerics`]: matrices, MLP forward/backward, Adam, dropout, softmax,
//!   a Jacobi eigensolver and seeded RNG.
//! - [`gaussian`]: diagonal-Gaussian KL, reparameterized sampling, and
//!   product/mixture-of-experts fusion.
//! - [`model`]: the multi-view network and checkpoint serialization.
//! - [`losses`]: the IB objectives with exact gradient routing.
//! - [`training`]: the training loop, validation selection and a
//!   frozen-noise gradient checker.
//! - [`data`]: CSV ingestion, kernel PCA, synthetic generation,
//!   missingness construction, splitting and imputation.
//! - [`evaluation`]: AUROC, information quantities, baselines and the
//!   ablation/sweep harnesses.
//! - [`cli`]: the `deepimv` command-line tool.

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod gaussian;
pub mod losses;
pub mod model;
pub mod numerics;
pub mod training;

pub use config::{parse_config, RunConfig};
pub use data::{
    apply_missingness, kernel_pca_polynomial, load_dataset, mean_impute, quartile_binarize,
    split_dataset, synthesize_dataset, MultiViewDataset, SynthConfig,
};
pub use error::{Error, Result};
pub use evaluation::{auroc, information_quantity, MetricsReport};
pub use gaussian::{
    kl_diag, moe_combine, moe_sample, poe_combine, reparam_sample, DiagGaussian, GaussianMixture,
};
pub use losses::{cross_entropy, ib_joint_loss, ib_marginal_loss, total_loss, LossBreakdown};
pub use model::{
    forward, joint_posterior, load_params, predict_proba, save_params, DeepIMVParams, ForwardPass,
    Fusion, ModelArch, MultiViewBatch, ViewMask,
};
pub use numerics::{Matrix, RngState};
pub use training::{
    evaluate_validation, grad_check, train_deepimv, TrainConfig, TrainHistory,
};
