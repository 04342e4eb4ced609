//! Classification metrics and the repeat-aggregated report type.

use crate::error::{contract, Result};
use crate::losses::cross_entropy;
use crate::numerics::Matrix;

/// Area under the ROC curve via the rank statistic: the probability that a
/// random positive outscores a random negative, ties counted one half
/// (midranks). Requires both classes present.
pub fn auroc(scores: &[f64], labels: &[usize]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(contract(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(&y) = labels.iter().find(|&&y| y > 1) {
        return Err(contract(format!("label {y} is not binary")));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(contract(format!("non-finite score {s}")));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(contract("auroc requires both classes present"));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));

    // Midranks over tied groups; ranks are 1-based.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Variational estimate of the information a predictor carries about the
/// labels, in nats: empirical label entropy minus the cross-entropy of the
/// predictions. Can be negative for worse-than-prior predictors and is
/// reported unclamped.
pub fn information_quantity(probs: &Matrix, labels: &[usize]) -> Result<f64> {
    if probs.rows() != labels.len() {
        return Err(contract(format!(
            "{} probability rows for {} labels",
            probs.rows(),
            labels.len()
        )));
    }
    let n = labels.len();
    if n == 0 {
        return Err(contract("information_quantity requires a nonempty batch"));
    }
    let c = probs.cols();
    let mut counts = vec![0usize; c];
    for (r, &y) in labels.iter().enumerate() {
        if y >= c {
            return Err(contract(format!(
                "label {y} at row {r} out of range for {c} classes"
            )));
        }
        counts[y] += 1;
    }
    if counts.iter().filter(|&&k| k > 0).count() < 2 {
        return Err(contract("information_quantity requires at least two classes present"));
    }
    let entropy: f64 = counts
        .iter()
        .filter(|&&k| k > 0)
        .map(|&k| {
            let p = k as f64 / n as f64;
            -p * p.ln()
        })
        .sum();
    Ok(entropy - cross_entropy(probs, labels)?)
}

/// Mean and half-width of the normal-approximation 95% interval.
pub fn mean_ci95(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, 1.96 * var.sqrt() / (n as f64).sqrt())
}

/// One experimental condition with its per-repeat values.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub keys: Vec<String>,
    pub mean: f64,
    pub ci95: f64,
    pub per_repeat: Vec<f64>,
}

/// Repeat-aggregated results for a grid of conditions. The metric is AUROC
/// unless stated otherwise by `metric`; information quantities are in nats.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub key_names: Vec<String>,
    pub metric: String,
    pub rows: Vec<ReportRow>,
}

impl MetricsReport {
    pub fn new(key_names: &[&str], metric: &str) -> Self {
        MetricsReport {
            key_names: key_names.iter().map(|s| s.to_string()).collect(),
            metric: metric.to_string(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, keys: Vec<String>, per_repeat: Vec<f64>) {
        let (mean, ci95) = mean_ci95(&per_repeat);
        self.rows.push(ReportRow {
            keys,
            mean,
            ci95,
            per_repeat,
        });
    }

    pub fn row(&self, keys: &[&str]) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.keys == keys)
    }

    /// Wide format: one row per condition with mean and 95% CI.
    pub fn to_csv(&self) -> String {
        let mut out = self.key_names.join(",");
        out.push_str(&format!(",{}_mean,{}_ci95\n", self.metric, self.metric));
        for row in &self.rows {
            out.push_str(&row.keys.join(","));
            out.push_str(&format!(",{},{}\n", row.mean, row.ci95));
        }
        out
    }

    /// Plot-ready long format: one row per condition and repeat.
    pub fn to_long_csv(&self) -> String {
        let mut out = self.key_names.join(",");
        out.push_str(&format!(",repeat,{}\n", self.metric));
        for row in &self.rows {
            for (i, v) in row.per_repeat.iter().enumerate() {
                out.push_str(&row.keys.join(","));
                out.push_str(&format!(",{i},{v}\n"));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// O(N^2) pair-counting oracle, ties worth one half.
    fn auroc_pairs(scores: &[f64], labels: &[usize]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &yi) in labels.iter().enumerate() {
            if yi != 1 {
                continue;
            }
            for (j, &yj) in labels.iter().enumerate() {
                if yj != 0 {
                    continue;
                }
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn separated_scores_give_one() {
        let scores = [0.9, 0.8, 0.2, 0.1];
        let labels = [1, 1, 0, 0];
        assert_eq!(auroc(&scores, &labels).unwrap(), 1.0);
    }

    #[test]
    fn identical_scores_give_half() {
        let scores = [0.4; 6];
        let labels = [1, 0, 1, 0, 0, 1];
        assert_eq!(auroc(&scores, &labels).unwrap(), 0.5);
    }

    #[test]
    fn reference_pair_counting_case() {
        // 3 of 4 positive-negative pairs won.
        let labels = [1, 0, 1, 0];
        let scores = [0.9, 0.8, 0.4, 0.2];
        assert_eq!(auroc(&scores, &labels).unwrap(), 0.75);
    }

    #[test]
    fn matches_pair_counting_with_ties_exactly() {
        let mut rng = crate::numerics::RngState::from_seed(31);
        for _ in 0..200 {
            let n = 2 + rng.next_index(40);
            // coarse grid of score values forces plenty of ties
            let scores: Vec<f64> = (0..n).map(|_| rng.next_index(7) as f64 / 4.0).collect();
            let mut labels: Vec<usize> = (0..n).map(|_| rng.next_index(2)).collect();
            labels[0] = 1;
            if n > 1 {
                labels[1] = 0;
            }
            let fast = auroc(&scores, &labels).unwrap();
            let slow = auroc_pairs(&scores, &labels);
            assert_eq!(fast.to_bits(), slow.to_bits(), "{scores:?} {labels:?}");
        }
    }

    #[test]
    fn invariant_under_strictly_increasing_transforms() {
        let mut rng = crate::numerics::RngState::from_seed(32);
        let scores: Vec<f64> = (0..30).map(|_| rng.next_normal()).collect();
        let mut labels: Vec<usize> = (0..30).map(|_| rng.next_index(2)).collect();
        labels[0] = 1;
        labels[1] = 0;
        let base = auroc(&scores, &labels).unwrap();
        let exp_scores: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
        let affine_scores: Vec<f64> = scores.iter().map(|s| 3.0 * s + 11.0).collect();
        assert_eq!(auroc(&exp_scores, &labels).unwrap(), base);
        assert_eq!(auroc(&affine_scores, &labels).unwrap(), base);
    }

    #[test]
    fn complement_property_without_ties() {
        let scores = [0.11, 0.72, 0.31, 0.95, 0.52, 0.08];
        let labels = [0, 1, 0, 1, 1, 0];
        let a = auroc(&scores, &labels).unwrap();
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        let b = auroc(&neg, &labels).unwrap();
        assert!((a + b - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_class_is_rejected() {
        assert!(auroc(&[0.1, 0.2], &[1, 1]).is_err());
    }

    #[test]
    fn information_of_perfect_confident_predictions() {
        let probs = Matrix::from_rows(&[
            vec![1.0 - 1e-13, 1e-13],
            vec![1e-13, 1.0 - 1e-13],
        ])
        .unwrap();
        let iq = information_quantity(&probs, &[0, 1]).unwrap();
        assert!((iq - std::f64::consts::LN_2).abs() < 1e-9);
    }

    #[test]
    fn prior_predictor_carries_zero_information() {
        // 1 positive of 4: predictor always emits the empirical prior.
        let prior = vec![0.75, 0.25];
        let probs = Matrix::from_rows(&[prior.clone(), prior.clone(), prior.clone(), prior])
            .unwrap();
        let iq = information_quantity(&probs, &[0, 0, 0, 1]).unwrap();
        assert!(iq.abs() < 1e-10, "{iq}");
    }

    #[test]
    fn reference_point_eight_case() {
        // balanced labels, 0.8 on the correct class: ln 2 - (-ln 0.8)
        let probs = Matrix::from_rows(&[vec![0.8, 0.2], vec![0.2, 0.8]]).unwrap();
        let iq = information_quantity(&probs, &[0, 1]).unwrap();
        let expected = std::f64::consts::LN_2 + 0.8f64.ln();
        assert!((iq - expected).abs() < 1e-12);
        assert!((iq - 0.470).abs() < 1e-3);
    }

    #[test]
    fn information_is_bounded_by_log_classes() {
        let mut rng = crate::numerics::RngState::from_seed(33);
        for _ in 0..50 {
            let n = 4 + rng.next_index(20);
            let mut rows = Vec::with_capacity(n);
            for _ in 0..n {
                let a = rng.next_uniform().max(1e-6);
                let b = rng.next_uniform().max(1e-6);
                rows.push(vec![a / (a + b), b / (a + b)]);
            }
            let probs = Matrix::from_rows(&rows).unwrap();
            let mut labels: Vec<usize> = (0..n).map(|_| rng.next_index(2)).collect();
            labels[0] = 0;
            labels[1] = 1;
            let iq = information_quantity(&probs, &labels).unwrap();
            assert!(iq <= 2.0f64.ln() + 1e-9);
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<usize>)> {
            proptest::collection::vec((0u8..12, proptest::bool::ANY), 2..50).prop_map(|cells| {
                let mut scores: Vec<f64> =
                    cells.iter().map(|(s, _)| *s as f64 / 8.0).collect();
                let mut labels: Vec<usize> =
                    cells.iter().map(|(_, y)| usize::from(*y)).collect();
                labels[0] = 1;
                let n = labels.len();
                labels[n - 1] = 0;
                // break exact score ties between the forced labels rarely
                scores[0] += 0.0;
                (scores, labels)
            })
        }

        proptest! {
            #[test]
            fn auroc_invariant_under_monotone_transform((scores, labels) in instance()) {
                let base = auroc(&scores, &labels).unwrap();
                let mapped: Vec<f64> = scores.iter().map(|s| (2.0 * s).exp()).collect();
                prop_assert_eq!(auroc(&mapped, &labels).unwrap(), base);
            }

            #[test]
            fn auroc_complement_sums_to_one_without_ties(n in 4usize..40, seed in 0u64..500) {
                let mut rng = crate::numerics::RngState::from_seed(seed);
                let scores: Vec<f64> = (0..n).map(|_| rng.next_normal()).collect();
                let mut labels: Vec<usize> = (0..n).map(|_| rng.next_index(2)).collect();
                labels[0] = 1;
                labels[1] = 0;
                let a = auroc(&scores, &labels).unwrap();
                let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
                let b = auroc(&neg, &labels).unwrap();
                prop_assert!((a + b - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn report_aggregates_and_serializes() {
        let mut report = MetricsReport::new(&["variant", "views"], "auroc");
        report.push(vec!["poe".into(), "2".into()], vec![0.8, 0.9]);
        let row = report.row(&["poe", "2"]).unwrap();
        assert!((row.mean - 0.85).abs() < 1e-12);
        let expected_ci = 1.96 * (0.005f64).sqrt() / (2.0f64).sqrt();
        assert!((row.ci95 - expected_ci).abs() < 1e-12);
        let csv = report.to_csv();
        assert!(csv.starts_with("variant,views,auroc_mean,auroc_ci95\n"));
        assert!(csv.contains("poe,2,0.85"));
        let long = report.to_long_csv();
        assert!(long.contains("poe,2,0,0.8"));
        assert!(long.contains("poe,2,1,0.9"));
    }
}
