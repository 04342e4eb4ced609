//! Diagonal-Gaussian algebra: KL divergence, reparameterized sampling,
//! product-of-experts fusion and mixture-of-experts fusion.
//!
//! Covariances are diagonal throughout, so every formula applies
//! coordinate-wise. Distributions carry log-variances clamped to
//! [-20, 20] for positivity and numeric stability.

use crate::error::{contract, shape, Result};
use crate::numerics::rng::RngState;

/// Clamp bound for log-variances.
pub const LOG_VAR_CLAMP: f64 = 20.0;

pub fn clamp_log_var(v: f64) -> f64 {
    v.clamp(-LOG_VAR_CLAMP, LOG_VAR_CLAMP)
}

/// Gaussian with diagonal covariance, parameterized by mean and
/// log-variance vectors of equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagGaussian {
    pub mean: Vec<f64>,
    pub log_var: Vec<f64>,
}

impl DiagGaussian {
    /// Build a distribution; log-variances are clamped to [-20, 20].
    pub fn new(mean: Vec<f64>, log_var: Vec<f64>) -> Result<Self> {
        if mean.len() != log_var.len() {
            return Err(shape(format!(
                "mean has {} entries but log_var has {}",
                mean.len(),
                log_var.len()
            )));
        }
        if mean.is_empty() {
            return Err(shape("DiagGaussian dimension must be >= 1"));
        }
        let log_var = log_var.into_iter().map(clamp_log_var).collect();
        Ok(DiagGaussian { mean, log_var })
    }

    /// Standard normal N(0, I) of the given dimension.
    pub fn standard(dim: usize) -> Self {
        DiagGaussian {
            mean: vec![0.0; dim],
            log_var: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn variance(&self) -> Vec<f64> {
        self.log_var.iter().map(|&v| v.exp()).collect()
    }
}

/// KL(q || p) in nats for diagonal Gaussians:
/// `sum_d 0.5 * [exp(lq - lp) + (mq - mp)^2 * exp(-lp) - 1 + (lp - lq)]`.
///
/// Always nonnegative up to rounding, and exactly zero for `q == p`.
pub fn kl_diag(q: &DiagGaussian, p: &DiagGaussian) -> Result<f64> {
    if q.dim() != p.dim() {
        return Err(shape(format!(
            "kl_diag dimensions differ: {} vs {}",
            q.dim(),
            p.dim()
        )));
    }
    let mut total = 0.0;
    for d in 0..q.dim() {
        let lq = q.log_var[d];
        let lp = p.log_var[d];
        let md = q.mean[d] - p.mean[d];
        total += 0.5 * ((lq - lp).exp() + md * md * (-lp).exp() - 1.0 + (lp - lq));
    }
    Ok(total)
}

/// Reparameterized sample `z = mean + eps * exp(log_var / 2)` with
/// `eps ~ N(0, I)` drawn from `rng` (one draw per dimension, in order).
pub fn reparam_sample(q: &DiagGaussian, rng: &mut RngState) -> Vec<f64> {
    q.mean
        .iter()
        .zip(&q.log_var)
        .map(|(&m, &lv)| m + rng.next_normal() * (0.5 * lv).exp())
        .collect()
}

/// Order-insensitive sum: addends are sorted by their total order before
/// folding, so any permutation of the inputs produces bit-identical output.
fn stable_sum(values: &mut Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    values.iter().sum()
}

/// Product-of-experts fusion of diagonal Gaussians.
///
/// Per dimension the precisions add: `lambda = lambda_0 + sum_v lambda_v`,
/// the fused variance is `1 / lambda` and the fused mean is the
/// precision-weighted mean. An empty expert list returns the prior
/// unchanged. The per-dimension accumulation sorts its addends, which makes
/// the result bitwise invariant under expert permutation.
pub fn poe_combine(prior: &DiagGaussian, experts: &[DiagGaussian]) -> Result<DiagGaussian> {
    if experts.is_empty() {
        return Ok(prior.clone());
    }
    let dim = prior.dim();
    for (i, e) in experts.iter().enumerate() {
        if e.dim() != dim {
            return Err(shape(format!(
                "expert {i} has dimension {} but the prior has {dim}",
                e.dim()
            )));
        }
    }
    let mut mean = vec![0.0; dim];
    let mut log_var = vec![0.0; dim];
    let mut precisions = Vec::with_capacity(experts.len() + 1);
    let mut weighted = Vec::with_capacity(experts.len() + 1);
    for d in 0..dim {
        precisions.clear();
        weighted.clear();
        let lam0 = (-prior.log_var[d]).exp();
        precisions.push(lam0);
        weighted.push(lam0 * prior.mean[d]);
        for e in experts {
            let lam = (-e.log_var[d]).exp();
            precisions.push(lam);
            weighted.push(lam * e.mean[d]);
        }
        let lam_total = stable_sum(&mut precisions);
        let num = stable_sum(&mut weighted);
        mean[d] = num / lam_total;
        log_var[d] = clamp_log_var(-lam_total.ln());
    }
    Ok(DiagGaussian { mean, log_var })
}

/// Mixture of diagonal Gaussians with nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    pub components: Vec<DiagGaussian>,
    pub weights: Vec<f64>,
}

impl GaussianMixture {
    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    /// Moment-matched diagonal Gaussian: mean `sum_v a_v mu_v` and variance
    /// `sum_v a_v (sigma_v^2 + mu_v^2) - mean^2`. A single-component
    /// mixture returns that component exactly.
    pub fn moment_match(&self) -> DiagGaussian {
        if self.components.len() == 1 {
            return self.components[0].clone();
        }
        let dim = self.dim();
        let mut mean = vec![0.0; dim];
        let mut log_var = vec![0.0; dim];
        for d in 0..dim {
            let mut m = 0.0;
            for (c, &w) in self.components.iter().zip(&self.weights) {
                m += w * c.mean[d];
            }
            let mut second = 0.0;
            for (c, &w) in self.components.iter().zip(&self.weights) {
                second += w * (c.log_var[d].exp() + c.mean[d] * c.mean[d]);
            }
            let var = (second - m * m).max(0.0);
            mean[d] = m;
            log_var[d] = clamp_log_var(var.ln());
        }
        DiagGaussian { mean, log_var }
    }
}

/// Mixture-of-experts fusion: the components are the experts themselves.
/// `weights = None` means uniform. Weights must be nonnegative and sum to
/// one within 1e-12.
pub fn moe_combine(
    experts: &[DiagGaussian],
    weights: Option<&[f64]>,
) -> Result<GaussianMixture> {
    if experts.is_empty() {
        return Err(contract("moe_combine requires at least one expert"));
    }
    let dim = experts[0].dim();
    for (i, e) in experts.iter().enumerate() {
        if e.dim() != dim {
            return Err(shape(format!(
                "expert {i} has dimension {} but expert 0 has {dim}",
                e.dim()
            )));
        }
    }
    let weights = match weights {
        Some(w) => {
            if w.len() != experts.len() {
                return Err(shape(format!(
                    "{} weights given for {} experts",
                    w.len(),
                    experts.len()
                )));
            }
            if w.iter().any(|&v| v < 0.0) {
                return Err(contract("mixture weights must be nonnegative"));
            }
            let sum: f64 = w.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(contract(format!("mixture weights sum to {sum}, not 1")));
            }
            w.to_vec()
        }
        None => vec![1.0 / experts.len() as f64; experts.len()],
    };
    Ok(GaussianMixture {
        components: experts.to_vec(),
        weights,
    })
}

/// Pick a mixture component by weight, then draw a reparameterized sample
/// from it. Consumes one uniform draw for the selection followed by one
/// normal draw per dimension.
pub fn moe_sample(mixture: &GaussianMixture, rng: &mut RngState) -> Vec<f64> {
    let c = select_component(&mixture.weights, rng.next_uniform());
    reparam_sample(&mixture.components[c], rng)
}

/// Inverse-CDF selection over normalized weights.
pub(crate) fn select_component(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(mean: &[f64], var: &[f64]) -> DiagGaussian {
        DiagGaussian::new(
            mean.to_vec(),
            var.iter().map(|v| v.ln()).collect(),
        )
        .unwrap()
    }

    // ---- quadrature oracles (test-only, independent of the closed forms) ----

    /// Simpson integration of f over [lo, hi] with n (even) intervals.
    fn simpson(lo: f64, hi: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
        assert!(n % 2 == 0);
        let h = (hi - lo) / n as f64;
        let mut acc = f(lo) + f(hi);
        for i in 1..n {
            let x = lo + h * i as f64;
            acc += f(x) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    }

    fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
        let d = x - mean;
        (-0.5 * d * d / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
    }

    /// KL(q || p) for scalar Gaussians by quadrature of q ln(q/p).
    fn kl_quadrature_1d(mq: f64, vq: f64, mp: f64, vp: f64) -> f64 {
        let s = vq.sqrt();
        let lo = mq - 14.0 * s;
        let hi = mq + 14.0 * s;
        simpson(lo, hi, 20_000, |x| {
            let q = normal_pdf(x, mq, vq);
            let lq = -0.5 * (x - mq) * (x - mq) / vq - 0.5 * (2.0 * std::f64::consts::PI * vq).ln();
            let lp = -0.5 * (x - mp) * (x - mp) / vp - 0.5 * (2.0 * std::f64::consts::PI * vp).ln();
            q * (lq - lp)
        })
    }

    /// Moments of the normalized pointwise product of scalar Gaussian
    /// densities, by quadrature.
    fn product_moments_1d(means: &[f64], vars: &[f64]) -> (f64, f64) {
        let lo = means.iter().cloned().fold(f64::INFINITY, f64::min) - 14.0;
        let hi = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 14.0;
        let log_f = |x: f64| -> f64 {
            means
                .iter()
                .zip(vars)
                .map(|(&m, &v)| -0.5 * (x - m) * (x - m) / v - 0.5 * (2.0 * std::f64::consts::PI * v).ln())
                .sum()
        };
        let n = 40_000;
        let z = simpson(lo, hi, n, |x| log_f(x).exp());
        let m1 = simpson(lo, hi, n, |x| x * log_f(x).exp()) / z;
        let m2 = simpson(lo, hi, n, |x| (x - m1) * (x - m1) * log_f(x).exp()) / z;
        (m1, m2)
    }

    // ---- kl_diag ----

    #[test]
    fn kl_of_distribution_with_itself_is_exactly_zero() {
        let q = g(&[0.3, -1.2, 4.0], &[0.5, 2.0, 1.0]);
        assert_eq!(kl_diag(&q, &q).unwrap(), 0.0);
        let std3 = DiagGaussian::standard(3);
        assert_eq!(kl_diag(&std3, &std3).unwrap(), 0.0);
    }

    #[test]
    fn kl_unit_shift_is_half() {
        // KL(N(1,1) || N(0,1)) = (1 + 1 - 1 - 0)/2 = 0.5
        let q = g(&[1.0], &[1.0]);
        let p = g(&[0.0], &[1.0]);
        assert!((kl_diag(&q, &p).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn kl_matches_closed_form_and_quadrature() {
        // KL(N(0.5, 0.25) || N(0,1)) = 0.5*(0.25 + 0.25 - 1 - ln 0.25)
        let q = g(&[0.5], &[0.25]);
        let p = g(&[0.0], &[1.0]);
        let analytic = kl_diag(&q, &p).unwrap();
        let expected = 0.5 * (0.25 + 0.25 - 1.0 - 0.25f64.ln());
        assert!((analytic - expected).abs() < 1e-12);
        assert!((analytic - 0.44315).abs() < 1e-4);
        let quad = kl_quadrature_1d(0.5, 0.25, 0.0, 1.0);
        assert!((analytic - quad).abs() < 1e-5, "{analytic} vs {quad}");
    }

    #[test]
    fn kl_random_pairs_match_quadrature() {
        let mut rng = RngState::from_seed(101);
        for _ in 0..25 {
            let mq = 4.0 * rng.next_uniform() - 2.0;
            let mp = 4.0 * rng.next_uniform() - 2.0;
            let vq = 0.25 + 3.75 * rng.next_uniform();
            let vp = 0.25 + 3.75 * rng.next_uniform();
            let analytic = kl_diag(&g(&[mq], &[vq]), &g(&[mp], &[vp])).unwrap();
            let quad = kl_quadrature_1d(mq, vq, mp, vp);
            assert!((analytic - quad).abs() < 1e-5, "{analytic} vs {quad}");
            assert!(analytic >= -1e-12);
        }
    }

    #[test]
    fn kl_rejects_dimension_mismatch() {
        let q = DiagGaussian::standard(2);
        let p = DiagGaussian::standard(3);
        assert!(kl_diag(&q, &p).is_err());
    }

    #[test]
    fn kl_gradients_match_finite_differences() {
        // d/dm KL = m, d/dl KL = (exp(l) - 1)/2 against the standard prior.
        let h = 1e-6;
        let p = DiagGaussian::standard(1);
        for (m0, l0) in [(0.7, -0.4), (-1.3, 0.9), (0.0, 0.0)] {
            let f = |m: f64, l: f64| {
                kl_diag(&DiagGaussian::new(vec![m], vec![l]).unwrap(), &p).unwrap()
            };
            let gm_num = (f(m0 + h, l0) - f(m0 - h, l0)) / (2.0 * h);
            let gl_num = (f(m0, l0 + h) - f(m0, l0 - h)) / (2.0 * h);
            let gm = m0;
            let gl = 0.5 * (l0.exp() - 1.0);
            assert!((gm - gm_num).abs() / gm.abs().max(gm_num.abs()).max(1e-2) < 1e-4);
            assert!((gl - gl_num).abs() / gl.abs().max(gl_num.abs()).max(1e-2) < 1e-4);
        }
    }

    // ---- reparam_sample ----

    #[test]
    fn degenerate_scale_returns_the_mean() {
        let q = DiagGaussian::new(vec![2.5, -1.0], vec![-20.0, -20.0]).unwrap();
        let z = reparam_sample(&q, &mut RngState::from_seed(3));
        assert!((z[0] - 2.5).abs() < 1e-4);
        assert!((z[1] + 1.0).abs() < 1e-4);
    }

    #[test]
    fn reparam_is_seed_deterministic() {
        let q = g(&[0.0, 1.0], &[1.0, 4.0]);
        let a = reparam_sample(&q, &mut RngState::from_seed(8));
        let b = reparam_sample(&q, &mut RngState::from_seed(8));
        assert_eq!(a, b);
    }

    #[test]
    fn reparam_monte_carlo_moments() {
        let q = g(&[1.0], &[4.0]);
        let mut rng = RngState::from_seed(12);
        let n = 100_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let z = reparam_sample(&q, &mut rng)[0];
            sum += z;
            sum_sq += z * z;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
        assert!((var - 4.0).abs() < 0.1, "var {var}");
    }

    #[test]
    fn reparam_gradients_match_finite_differences() {
        // With eps frozen, z = m + eps*exp(l/2): dz/dm = 1, dz/dl = eps*exp(l/2)/2.
        let eps = 0.83;
        let h = 1e-6;
        let (m0, l0) = (0.4, -0.7);
        let f = |m: f64, l: f64| m + eps * (0.5 * l).exp();
        let gm_num = (f(m0 + h, l0) - f(m0 - h, l0)) / (2.0 * h);
        let gl_num = (f(m0, l0 + h) - f(m0, l0 - h)) / (2.0 * h);
        let gl = 0.5 * eps * (0.5 * l0).exp();
        assert!((gm_num - 1.0).abs() < 1e-4);
        assert!((gl - gl_num).abs() / gl.abs().max(1e-2) < 1e-4);
    }

    // ---- poe_combine ----

    #[test]
    fn empty_expert_list_returns_prior_unchanged() {
        let prior = g(&[0.3, -0.2], &[2.0, 0.5]);
        let fused = poe_combine(&prior, &[]).unwrap();
        assert_eq!(fused, prior);
    }

    #[test]
    fn standard_prior_with_one_unit_expert() {
        let prior = DiagGaussian::standard(1);
        let expert = g(&[1.0], &[1.0]);
        let fused = poe_combine(&prior, &[expert]).unwrap();
        assert!((fused.mean[0] - 0.5).abs() < 1e-12);
        assert!((fused.log_var[0].exp() - 0.5).abs() < 1e-12);
        // cross-check against the quadrature product oracle
        let (m, v) = product_moments_1d(&[0.0, 1.0], &[1.0, 1.0]);
        assert!((fused.mean[0] - m).abs() < 1e-6);
        assert!((fused.log_var[0].exp() - v).abs() < 1e-6);
    }

    #[test]
    fn symmetric_experts_fuse_to_zero_mean() {
        let prior = DiagGaussian::standard(1);
        for (a, s2) in [(0.5, 1.0), (2.0, 0.3), (7.0, 4.0)] {
            let e1 = g(&[a], &[s2]);
            let e2 = g(&[-a], &[s2]);
            let fused = poe_combine(&prior, &[e1, e2]).unwrap();
            assert!(fused.mean[0].abs() < 1e-12);
        }
    }

    #[test]
    fn random_cases_match_quadrature_product_oracle() {
        let mut rng = RngState::from_seed(55);
        let random_gaussian = |rng: &mut RngState, dim: usize| {
            let mean: Vec<f64> = (0..dim).map(|_| 4.0 * rng.next_uniform() - 2.0).collect();
            let var: Vec<f64> = (0..dim).map(|_| 0.25 + 3.75 * rng.next_uniform()).collect();
            g(&mean, &var)
        };
        for _ in 0..20 {
            let n_experts = 1 + rng.next_index(4);
            let dim = 1 + rng.next_index(3);
            let prior = random_gaussian(&mut rng, dim);
            let experts: Vec<DiagGaussian> = (0..n_experts)
                .map(|_| random_gaussian(&mut rng, dim))
                .collect();
            let fused = poe_combine(&prior, &experts).unwrap();
            for d in 0..dim {
                let mut means = vec![prior.mean[d]];
                let mut vars = vec![prior.log_var[d].exp()];
                for e in &experts {
                    means.push(e.mean[d]);
                    vars.push(e.log_var[d].exp());
                }
                let (m, v) = product_moments_1d(&means, &vars);
                assert!((fused.mean[d] - m).abs() < 1e-6, "mean {} vs {m}", fused.mean[d]);
                assert!(
                    (fused.log_var[d].exp() - v).abs() < 1e-6,
                    "var {} vs {v}",
                    fused.log_var[d].exp()
                );
            }
        }
    }

    #[test]
    fn poe_sharpens_below_prior_variance() {
        let mut rng = RngState::from_seed(91);
        for _ in 0..50 {
            let dim = 1 + rng.next_index(4);
            let prior_var: Vec<f64> = (0..dim).map(|_| 0.2 + 5.0 * rng.next_uniform()).collect();
            let prior = g(&vec![0.0; dim], &prior_var);
            let n_experts = 1 + rng.next_index(4);
            let experts: Vec<DiagGaussian> = (0..n_experts)
                .map(|_| {
                    let mean: Vec<f64> = (0..dim).map(|_| rng.next_normal()).collect();
                    let var: Vec<f64> = (0..dim).map(|_| 0.2 + 5.0 * rng.next_uniform()).collect();
                    g(&mean, &var)
                })
                .collect();
            let fused = poe_combine(&prior, &experts).unwrap();
            for d in 0..dim {
                assert!(fused.log_var[d].exp() < prior_var[d]);
            }
        }
    }

    #[test]
    fn poe_is_bitwise_permutation_invariant() {
        let mut rng = RngState::from_seed(123);
        let prior = DiagGaussian::standard(2);
        let experts: Vec<DiagGaussian> = (0..4)
            .map(|_| {
                let mean: Vec<f64> = (0..2).map(|_| rng.next_normal()).collect();
                let var: Vec<f64> = (0..2).map(|_| 0.3 + 2.0 * rng.next_uniform()).collect();
                g(&mean, &var)
            })
            .collect();
        let base = poe_combine(&prior, &experts).unwrap();
        // a few hand-picked permutations
        for perm in [[1usize, 0, 2, 3], [3, 2, 1, 0], [2, 3, 0, 1], [1, 3, 0, 2]] {
            let permuted: Vec<DiagGaussian> = perm.iter().map(|&i| experts[i].clone()).collect();
            let fused = poe_combine(&prior, &permuted).unwrap();
            for d in 0..2 {
                assert_eq!(fused.mean[d].to_bits(), base.mean[d].to_bits());
                assert_eq!(fused.log_var[d].to_bits(), base.log_var[d].to_bits());
            }
        }
    }

    // ---- moe ----

    #[test]
    fn single_expert_mixture_is_that_expert() {
        let e = g(&[0.7, -0.3], &[1.5, 0.4]);
        let mix = moe_combine(&[e.clone()], None).unwrap();
        assert_eq!(mix.components[0], e);
        assert_eq!(mix.weights, vec![1.0]);
        assert_eq!(mix.moment_match(), e);
    }

    #[test]
    fn two_symmetric_experts_moment_match() {
        let e1 = g(&[-1.0], &[1.0]);
        let e2 = g(&[1.0], &[1.0]);
        let mm = moe_combine(&[e1, e2], None).unwrap().moment_match();
        assert!(mm.mean[0].abs() < 1e-15);
        assert!((mm.log_var[0].exp() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn moment_match_agrees_with_monte_carlo() {
        let experts = [
            g(&[0.5], &[0.9]),
            g(&[-1.2], &[2.1]),
            g(&[2.0], &[0.5]),
        ];
        let mix = moe_combine(&experts, None).unwrap();
        let mm = mix.moment_match();
        let mut rng = RngState::from_seed(44);
        let n = 1_000_000usize;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let z = moe_sample(&mix, &mut rng)[0];
            sum += z;
            sum_sq += z * z;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        assert!((mm.mean[0] - mean).abs() < 0.01, "{} vs {mean}", mm.mean[0]);
        assert!(
            (mm.log_var[0].exp() - var).abs() < 0.01,
            "{} vs {var}",
            mm.log_var[0].exp()
        );
    }

    #[test]
    fn moe_combine_rejects_empty_and_bad_weights() {
        assert!(moe_combine(&[], None).is_err());
        let e = DiagGaussian::standard(1);
        assert!(moe_combine(&[e.clone()], Some(&[0.7])).is_err());
        assert!(moe_combine(&[e.clone(), e.clone()], Some(&[1.5, -0.5])).is_err());
    }

    #[test]
    fn degenerate_weights_always_pick_component_zero() {
        let mix = moe_combine(
            &[g(&[5.0], &[0.01]), g(&[-5.0], &[1.0])],
            Some(&[1.0, 0.0]),
        )
        .unwrap();
        let mut rng = RngState::from_seed(6);
        for _ in 0..200 {
            let z = moe_sample(&mix, &mut rng);
            assert!(z[0] > 0.0, "sample {z:?} came from the wrong component");
        }
    }

    #[test]
    fn uniform_two_component_selection_frequency() {
        let mix = moe_combine(&[g(&[-30.0], &[0.01]), g(&[30.0], &[0.01])], None).unwrap();
        let mut rng = RngState::from_seed(27);
        let n = 10_000;
        let mut first = 0usize;
        for _ in 0..n {
            if moe_sample(&mix, &mut rng)[0] < 0.0 {
                first += 1;
            }
        }
        let freq = first as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.01, "frequency {freq}");
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn gaussian_strategy(dim: usize) -> impl Strategy<Value = DiagGaussian> {
            (
                proptest::collection::vec(-3.0..3.0f64, dim),
                proptest::collection::vec(0.1..5.0f64, dim),
            )
                .prop_map(|(mean, var)| {
                    DiagGaussian::new(mean, var.into_iter().map(f64::ln).collect()).unwrap()
                })
        }

        proptest! {
            #[test]
            fn poe_variance_strictly_sharper_than_prior(
                prior in gaussian_strategy(3),
                experts in proptest::collection::vec(gaussian_strategy(3), 1..5),
            ) {
                let fused = poe_combine(&prior, &experts).unwrap();
                for d in 0..3 {
                    prop_assert!(fused.log_var[d].exp() < prior.log_var[d].exp());
                }
            }

            #[test]
            fn poe_permutation_invariance_bitwise(
                prior in gaussian_strategy(2),
                experts in proptest::collection::vec(gaussian_strategy(2), 2..5),
                seed in 0u64..1000,
            ) {
                let base = poe_combine(&prior, &experts).unwrap();
                let mut permuted = experts.clone();
                let mut rng = RngState::from_seed(seed);
                rng.shuffle(&mut permuted);
                let fused = poe_combine(&prior, &permuted).unwrap();
                for d in 0..2 {
                    prop_assert_eq!(fused.mean[d].to_bits(), base.mean[d].to_bits());
                    prop_assert_eq!(fused.log_var[d].to_bits(), base.log_var[d].to_bits());
                }
            }

            #[test]
            fn kl_is_nonnegative_and_zero_on_self(
                q in gaussian_strategy(3),
                p in gaussian_strategy(3),
            ) {
                prop_assert!(kl_diag(&q, &p).unwrap() >= -1e-12);
                prop_assert_eq!(kl_diag(&q, &q).unwrap(), 0.0);
            }
        }
    }
}
