//! Numerical substrate: matrices, MLP forward/backward, initialization,
//! the Adam optimizer, dropout, softmax and a symmetric eigensolver.
//!
//! Everything runs in 64-bit reals; there is no mixed precision anywhere,
//! which the gradient checks depend on.

pub mod adam;
pub mod eigen;
pub mod matrix;
pub mod mlp;
pub mod rng;

pub use adam::{adam_step, AdamState};
pub use eigen::jacobi_eigh;
pub use matrix::Matrix;
pub use mlp::{
    dropout_mask, mlp_apply, mlp_backprop, softmax, softmax_rows, xavier_init, Layer, MlpCache,
    MlpParams, Mode,
};
pub use rng::RngState;
