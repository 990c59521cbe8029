use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// Binary confusion counts with class 1 (unstable) as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn from_predictions(labels: &[usize], preds: &[usize]) -> Self {
        let mut c = Self::default();
        for (&y, &p) in labels.iter().zip(preds) {
            match (y == 1, p == 1) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            return 0.0;
        }
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    /// `2PR / (P + R)`, written as `2TP / (2TP + FP + FN)`; 0 when undefined.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            return 0.0;
        }
        (2 * self.tp) as f64 / denom as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub f1: f64,
    /// Absent when the evaluation set holds a single class.
    pub auc: Option<f64>,
    pub confusion: Confusion,
}

impl Metrics {
    /// `scores` are class-1 probabilities used for AUC.
    pub fn compute(labels: &[usize], preds: &[usize], scores: &[f64]) -> Self {
        let confusion = Confusion::from_predictions(labels, preds);
        Self { accuracy: confusion.accuracy(), f1: confusion.f1(), auc: auc_rank(labels, scores), confusion }
    }
}

/// Mann-Whitney AUC: the probability that a random positive outranks a random
/// negative, ties counted as one half via midranks.
pub fn auc_rank(labels: &[usize], scores: &[f64]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = alloc::vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share their mean.
        let mid = (i + j + 2) as f64 / 2.0;
        for k in i..=j {
            ranks[order[k]] = mid;
        }
        i = j + 1;
    }
    let pos_rank_sum: f64 = labels.iter().zip(&ranks).filter(|(y, _)| **y == 1).map(|(_, r)| r).sum();
    let u = pos_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use alloc::vec;
    use proptest::prelude::*;

    /// ROC by sweeping every distinct threshold from high to low and
    /// integrating with the trapezoid rule.
    fn auc_trapezoid(labels: &[usize], scores: &[f64]) -> f64 {
        let p = labels.iter().filter(|&&y| y == 1).count() as f64;
        let n = labels.len() as f64 - p;
        let mut thresholds: Vec<f64> = scores.to_vec();
        thresholds.sort_by(|a, b| b.total_cmp(a));
        thresholds.dedup();
        let (mut px, mut py, mut area) = (0.0, 0.0, 0.0);
        for t in thresholds {
            let tp = labels.iter().zip(scores).filter(|(y, s)| **y == 1 && **s >= t).count() as f64;
            let fp = labels.iter().zip(scores).filter(|(y, s)| **y == 0 && **s >= t).count() as f64;
            let (x, y) = (fp / n, tp / p);
            area += (x - px) * (y + py) / 2.0;
            px = x;
            py = y;
        }
        area + (1.0 - px) * (1.0 + py) / 2.0
    }

    #[test]
    fn perfect_predictions() {
        let y = [0, 1, 1, 0];
        let m = Metrics::compute(&y, &y, &[0.1, 0.9, 0.8, 0.2]);
        assert_eq!((m.accuracy, m.f1, m.auc), (1.0, 1.0, Some(1.0)));
    }

    #[test]
    fn f1_from_counts() {
        let c = Confusion { tp: 2, fp: 1, fn_: 1, tn: 2 };
        assert!((c.f1() - 2.0 / 3.0).abs() < 1e-15);
        let y = [1, 1, 1, 0, 0, 0];
        let p = [1, 1, 0, 1, 0, 0];
        assert_eq!(Confusion::from_predictions(&y, &p), c);
    }

    #[test]
    fn constant_scores_give_half() {
        assert_eq!(auc_rank(&[0, 1, 1, 0, 1], &[0.3; 5]), Some(0.5));
    }

    #[test]
    fn single_class_has_no_auc() {
        let m = Metrics::compute(&[1, 1], &[1, 0], &[0.9, 0.2]);
        assert_eq!(m.auc, None);
        assert_eq!(m.accuracy, 0.5);
    }

    proptest! {
        #[test]
        fn rank_auc_matches_threshold_sweep(seed in any::<u64>(), n in 2usize..200, ties in any::<bool>()) {
            let mut rng = SeededRng::new(seed);
            let mut labels: Vec<usize> = (0..n).map(|_| rng.below(2)).collect();
            labels[0] = 0;
            labels[1] = 1;
            let scores: Vec<f64> = (0..n)
                .map(|_| if ties { rng.below(5) as f64 / 4.0 } else { rng.uniform() })
                .collect();
            let a = auc_rank(&labels, &scores).unwrap();
            prop_assert!((a - auc_trapezoid(&labels, &scores)).abs() < 1e-9);
        }

        #[test]
        fn metrics_agree_with_confusion(seed in any::<u64>(), n in 1usize..100) {
            let mut rng = SeededRng::new(seed);
            let y: Vec<usize> = (0..n).map(|_| rng.below(2)).collect();
            let p: Vec<usize> = (0..n).map(|_| rng.below(2)).collect();
            let m = Metrics::compute(&y, &p, &vec![0.5; n]);
            let c = m.confusion;
            prop_assert_eq!(m.accuracy, (c.tp + c.tn) as f64 / c.total() as f64);
            prop_assert!((0.0..=1.0).contains(&m.f1));
        }
    }
}
