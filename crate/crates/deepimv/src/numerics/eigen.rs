//! Symmetric eigendecomposition via the cyclic Jacobi method.

use crate::error::{contract, Result};
use crate::numerics::matrix::Matrix;

const SYMMETRY_TOL: f64 = 1e-9;
const OFF_DIAG_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Eigendecomposition of a symmetric matrix.
///
/// Returns eigenvalues in descending order and the matching orthonormal
/// eigenvectors as the columns of the returned matrix. Sweeps of plane
/// rotations run until the off-diagonal Frobenius norm drops below 1e-12
/// (at most 100 sweeps). Inputs asymmetric beyond 1e-9 are rejected.
pub fn jacobi_eigh(s: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let n = s.rows();
    if s.cols() != n {
        return Err(contract(format!(
            "jacobi_eigh expects a square matrix, got {}x{}",
            s.rows(),
            s.cols()
        )));
    }
    for p in 0..n {
        for q in (p + 1)..n {
            if (s.get(p, q) - s.get(q, p)).abs() > SYMMETRY_TOL {
                return Err(contract(format!(
                    "matrix is not symmetric: |S[{p},{q}] - S[{q},{p}]| = {}",
                    (s.get(p, q) - s.get(q, p)).abs()
                )));
            }
        }
    }
    if n == 0 {
        return Ok((Vec::new(), Matrix::zeros(0, 0)));
    }

    // Work on an exactly symmetric copy.
    let mut a = Matrix::zeros(n, n);
    for p in 0..n {
        a.set(p, p, s.get(p, p));
        for q in (p + 1)..n {
            let v = 0.5 * (s.get(p, q) + s.get(q, p));
            a.set(p, q, v);
            a.set(q, p, v);
        }
    }
    let mut vecs = Matrix::identity(n);

    for _sweep in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += 2.0 * a.get(p, q) * a.get(p, q);
            }
        }
        if off.sqrt() < OFF_DIAG_TOL {
            break;
        }
        for p in 0..(n - 1) {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let theta = 0.5 * (a.get(q, q) - a.get(p, p)) / apq;
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s_rot = t * c;

                // A <- J^T A J over rows/columns p and q.
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                a.set(p, p, app - t * apq);
                a.set(q, q, aqq + t * apq);
                a.set(p, q, 0.0);
                a.set(q, p, 0.0);
                for k in 0..n {
                    if k != p && k != q {
                        let akp = a.get(k, p);
                        let akq = a.get(k, q);
                        let new_kp = c * akp - s_rot * akq;
                        let new_kq = s_rot * akp + c * akq;
                        a.set(k, p, new_kp);
                        a.set(p, k, new_kp);
                        a.set(k, q, new_kq);
                        a.set(q, k, new_kq);
                    }
                }
                for k in 0..n {
                    let vkp = vecs.get(k, p);
                    let vkq = vecs.get(k, q);
                    vecs.set(k, p, c * vkp - s_rot * vkq);
                    vecs.set(k, q, s_rot * vkp + c * vkq);
                }
            }
        }
    }

    // Sort eigenpairs by descending eigenvalue.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(j, j).total_cmp(&a.get(i, i)));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| a.get(i, i)).collect();
    let mut sorted_vecs = Matrix::zeros(n, n);
    for (new_col, &old_col) in order.iter().enumerate() {
        for r in 0..n {
            sorted_vecs.set(r, new_col, vecs.get(r, old_col));
        }
    }
    Ok((eigenvalues, sorted_vecs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::RngState;

    #[test]
    fn identity_has_unit_eigenvalues() {
        let (vals, _) = jacobi_eigh(&Matrix::identity(3)).unwrap();
        assert_eq!(vals, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn diagonal_matrix_sorted_descending() {
        let mut d = Matrix::zeros(2, 2);
        d.set(0, 0, 3.0);
        d.set(1, 1, 1.0);
        let (vals, _) = jacobi_eigh(&d).unwrap();
        assert_eq!(vals, vec![3.0, 1.0]);
    }

    #[test]
    fn two_by_two_characteristic_roots() {
        // [[2,1],[1,2]]: lambda^2 - 4 lambda + 3 = 0 -> (3, 1).
        let m = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let (vals, vecs) = jacobi_eigh(&m).unwrap();
        assert!((vals[0] - 3.0).abs() < 1e-12);
        assert!((vals[1] - 1.0).abs() < 1e-12);
        // residual check
        for i in 0..2 {
            for r in 0..2 {
                let mv: f64 = (0..2).map(|c| m.get(r, c) * vecs.get(c, i)).sum();
                assert!((mv - vals[i] * vecs.get(r, i)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn random_symmetric_reconstruction_and_orthonormality() {
        let mut rng = RngState::from_seed(77);
        for n in [1usize, 2, 5, 12] {
            let mut s = Matrix::zeros(n, n);
            for p in 0..n {
                for q in p..n {
                    let v = 4.0 * rng.next_uniform() - 2.0;
                    s.set(p, q, v);
                    s.set(q, p, v);
                }
            }
            let (vals, vecs) = jacobi_eigh(&s).unwrap();
            // S v_i = lambda_i v_i
            for i in 0..n {
                for r in 0..n {
                    let mv: f64 = (0..n).map(|c| s.get(r, c) * vecs.get(c, i)).sum();
                    assert!(
                        (mv - vals[i] * vecs.get(r, i)).abs() < 1e-8,
                        "residual too large for n={n}, pair {i}"
                    );
                }
            }
            // V^T V = I
            for i in 0..n {
                for j in 0..n {
                    let dot: f64 = (0..n).map(|r| vecs.get(r, i) * vecs.get(r, j)).sum();
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((dot - expect).abs() < 1e-8);
                }
            }
            // descending order
            for w in vals.windows(2) {
                assert!(w[0] >= w[1]);
            }
        }
    }

    #[test]
    fn asymmetric_input_is_rejected() {
        let m = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.4, 1.0]]).unwrap();
        assert!(jacobi_eigh(&m).is_err());
    }
}
