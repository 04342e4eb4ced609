//! Kernel PCA with a polynomial kernel.
//!
//! The Gram matrix `K_ij = (x_i . x_j + c)^degree` is double-centered and
//! eigendecomposed; projections onto the top components are whitened by
//! `1/sqrt(lambda)`, and the fitted projector maps new points through the
//! standard centered-kernel formula.

use crate::error::{contract, Result};
use crate::numerics::{jacobi_eigh, Matrix};

/// Fitted polynomial kernel-PCA projector supporting out-of-sample mapping.
#[derive(Debug, Clone)]
pub struct KernelPcaProjector {
    degree: u32,
    offset: f64,
    train_x: Matrix,
    /// Columns are `v_i / sqrt(lambda_i)` for the retained components.
    alphas: Matrix,
    /// Column means of the uncentered training Gram matrix.
    gram_col_means: Vec<f64>,
    gram_total_mean: f64,
    eigenvalues: Vec<f64>,
}

impl KernelPcaProjector {
    pub fn n_components(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Project rows of `x` onto the retained components.
    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.train_x.cols() {
            return Err(contract(format!(
                "transform input has {} columns, expected {}",
                x.cols(),
                self.train_x.cols()
            )));
        }
        let n_train = self.train_x.rows();
        let mut out = Matrix::zeros(x.rows(), self.n_components());
        let mut kvec = vec![0.0; n_train];
        for r in 0..x.rows() {
            let mut kmean = 0.0;
            for (j, kv) in kvec.iter_mut().enumerate() {
                let dot: f64 = x
                    .row(r)
                    .iter()
                    .zip(self.train_x.row(j))
                    .map(|(&a, &b)| a * b)
                    .sum();
                *kv = (dot + self.offset).powi(self.degree as i32);
                kmean += *kv;
            }
            kmean /= n_train as f64;
            for i in 0..self.n_components() {
                let mut acc = 0.0;
                for j in 0..n_train {
                    let centered =
                        kvec[j] - self.gram_col_means[j] - kmean + self.gram_total_mean;
                    acc += centered * self.alphas.get(j, i);
                }
                out.set(r, i, acc);
            }
        }
        Ok(out)
    }
}

/// Fit polynomial kernel PCA on the rows of `x` and return the whitened
/// training projections plus the fitted projector.
///
/// If fewer than `k` eigenvalues are meaningfully positive the component
/// count shrinks with a warning on stderr.
pub fn kernel_pca_polynomial(
    x: &Matrix,
    degree: u32,
    offset: f64,
    k: usize,
) -> Result<(Matrix, KernelPcaProjector)> {
    let n = x.rows();
    if n < 2 {
        return Err(contract("kernel PCA needs at least 2 samples"));
    }
    if k == 0 || k > n {
        return Err(contract(format!("k = {k} must be in [1, {n}]")));
    }
    if degree == 0 {
        return Err(contract("polynomial degree must be >= 1"));
    }

    // Uncentered Gram matrix.
    let mut gram = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let dot: f64 = x
                .row(i)
                .iter()
                .zip(x.row(j))
                .map(|(&a, &b)| a * b)
                .sum();
            let v = (dot + offset).powi(degree as i32);
            gram.set(i, j, v);
            gram.set(j, i, v);
        }
    }
    let col_means: Vec<f64> = gram.col_sums().iter().map(|s| s / n as f64).collect();
    let total_mean = col_means.iter().sum::<f64>() / n as f64;

    // Double centering.
    let mut centered = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            centered.set(
                i,
                j,
                gram.get(i, j) - col_means[i] - col_means[j] + total_mean,
            );
        }
    }

    let (eigenvalues, vectors) = jacobi_eigh(&centered)?;
    let lambda_max = eigenvalues.first().copied().unwrap_or(0.0).max(0.0);
    let positive_tol = (lambda_max * 1e-9).max(1e-12);
    let usable = eigenvalues.iter().take_while(|&&l| l > positive_tol).count();
    let retained = if usable < k {
        eprintln!(
            "kernel_pca_polynomial: shrinking k from {k} to {usable} (only {usable} positive eigenvalues)"
        );
        usable
    } else {
        k
    };
    if retained == 0 {
        return Err(contract("centered kernel matrix has no positive eigenvalues"));
    }

    let mut alphas = Matrix::zeros(n, retained);
    let mut scores = Matrix::zeros(n, retained);
    for i in 0..retained {
        let sqrt_l = eigenvalues[i].sqrt();
        for r in 0..n {
            alphas.set(r, i, vectors.get(r, i) / sqrt_l);
            scores.set(r, i, vectors.get(r, i) * sqrt_l);
        }
    }

    let projector = KernelPcaProjector {
        degree,
        offset,
        train_x: x.clone(),
        alphas,
        gram_col_means: col_means,
        gram_total_mean: total_mean,
        eigenvalues: eigenvalues[..retained].to_vec(),
    };
    Ok((scores, projector))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngState;

    fn random_matrix(n: usize, d: usize, seed: u64) -> Matrix {
        let mut rng = RngState::from_seed(seed);
        let mut m = Matrix::zeros(n, d);
        for v in m.data_mut() {
            *v = rng.next_normal();
        }
        m
    }

    /// Straightforward linear PCA scores (centered data onto covariance
    /// eigenvectors), used as the degree-1 oracle.
    fn linear_pca_scores(x: &Matrix, k: usize) -> Matrix {
        let n = x.rows();
        let d = x.cols();
        let means = x.col_sums().iter().map(|s| s / n as f64).collect::<Vec<_>>();
        let mut xc = x.clone();
        for r in 0..n {
            for c in 0..d {
                xc.set(r, c, xc.get(r, c) - means[c]);
            }
        }
        let cov = xc.matmul_transpose_lhs(&xc); // d x d, unnormalized
        let (_, vecs) = jacobi_eigh(&cov).unwrap();
        let mut scores = Matrix::zeros(n, k);
        for r in 0..n {
            for i in 0..k {
                let mut acc = 0.0;
                for c in 0..d {
                    acc += xc.get(r, c) * vecs.get(c, i);
                }
                scores.set(r, i, acc);
            }
        }
        scores
    }

    #[test]
    fn degree_one_reproduces_linear_pca_up_to_sign() {
        let x = random_matrix(8, 3, 21);
        let (scores, _) = kernel_pca_polynomial(&x, 1, 0.0, 3).unwrap();
        let reference = linear_pca_scores(&x, 3);
        for i in 0..3 {
            // match columns up to a global sign
            let mut same = true;
            let mut flipped = true;
            for r in 0..8 {
                if (scores.get(r, i) - reference.get(r, i)).abs() > 1e-7 {
                    same = false;
                }
                if (scores.get(r, i) + reference.get(r, i)).abs() > 1e-7 {
                    flipped = false;
                }
            }
            assert!(same || flipped, "component {i} does not match linear PCA");
        }
    }

    #[test]
    fn duplicated_rows_project_identically() {
        let mut rows: Vec<Vec<f64>> = (0..5)
            .map(|i| vec![i as f64, (i * i) as f64 * 0.1, -(i as f64)])
            .collect();
        rows.push(rows[2].clone());
        let x = Matrix::from_rows(&rows).unwrap();
        let (scores, _) = kernel_pca_polynomial(&x, 2, 1.0, 3).unwrap();
        for c in 0..scores.cols() {
            assert!((scores.get(2, c) - scores.get(5, c)).abs() < 1e-9);
        }
    }

    #[test]
    fn whitened_scores_reconstruct_the_centered_gram() {
        // With all positive components retained, Z Z^T = centered K.
        let x = random_matrix(5, 3, 22);
        let n = 5;
        let (scores, proj) = kernel_pca_polynomial(&x, 2, 1.0, n).unwrap();
        // rebuild centered K independently
        let mut gram = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let dot: f64 = x.row(i).iter().zip(x.row(j)).map(|(&a, &b)| a * b).sum();
                gram.set(i, j, (dot + 1.0) * (dot + 1.0));
            }
        }
        let mu: Vec<f64> = gram.col_sums().iter().map(|s| s / n as f64).collect();
        let total = mu.iter().sum::<f64>() / n as f64;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let centered = gram.get(i, j) - mu[i] - mu[j] + total;
                let dot: f64 = (0..proj.n_components())
                    .map(|c| scores.get(i, c) * scores.get(j, c))
                    .sum();
                worst = worst.max((centered - dot).abs());
            }
        }
        assert!(worst < 1e-6, "Gram reconstruction error {worst}");
    }

    #[test]
    fn in_sample_and_out_of_sample_projections_agree() {
        let x = random_matrix(12, 4, 23);
        let (scores, proj) = kernel_pca_polynomial(&x, 3, 1.0, 6).unwrap();
        let reprojected = proj.transform(&x).unwrap();
        for r in 0..12 {
            for c in 0..proj.n_components() {
                assert!(
                    (scores.get(r, c) - reprojected.get(r, c)).abs() < 1e-8,
                    "row {r} component {c}: {} vs {}",
                    scores.get(r, c),
                    reprojected.get(r, c)
                );
            }
        }
    }

    #[test]
    fn k_shrinks_when_rank_is_deficient() {
        // 4 samples of an exactly rank-1 configuration under degree 1.
        let x = Matrix::from_rows(&[
            vec![1.0, 2.0],
            vec![2.0, 4.0],
            vec![3.0, 6.0],
            vec![4.0, 8.0],
        ])
        .unwrap();
        let (scores, proj) = kernel_pca_polynomial(&x, 1, 0.0, 4).unwrap();
        assert!(proj.n_components() < 4);
        assert_eq!(scores.cols(), proj.n_components());
    }
}
