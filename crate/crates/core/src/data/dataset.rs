use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Model-ready windows `[N, L, F]` with hard labels and optional soft
/// targets `[N, c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub seq_len: usize,
    pub feature_dim: usize,
    pub xs: Vec<f64>,
    pub labels: Vec<usize>,
    pub soft: Option<Vec<f64>>,
}

impl Dataset {
    pub fn new(seq_len: usize, feature_dim: usize, xs: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if xs.len() != labels.len() * seq_len * feature_dim {
            return Err(Error::Shape {
                op: "dataset",
                detail: format!("{} values for {} samples of [{}, {}]", xs.len(), labels.len(), seq_len, feature_dim),
            });
        }
        Ok(Self { seq_len, feature_dim, xs, labels, soft: None })
    }

    pub fn with_soft(mut self, soft: Vec<f64>, n_classes: usize) -> Result<Self> {
        if soft.len() != self.len() * n_classes {
            return Err(Error::Shape { op: "dataset", detail: format!("{} soft targets for {} samples", soft.len(), self.len()) });
        }
        self.soft = Some(soft);
        Ok(self)
    }

    pub fn empty(seq_len: usize, feature_dim: usize) -> Self {
        Self { seq_len, feature_dim, xs: Vec::new(), labels: Vec::new(), soft: None }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_len(&self) -> usize {
        self.seq_len * self.feature_dim
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let s = self.sample_len();
        &self.xs[i * s..(i + 1) * s]
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        let s = self.sample_len();
        let mut xs = Vec::with_capacity(idx.len() * s);
        for &i in idx {
            xs.extend_from_slice(self.sample(i));
        }
        let soft = self.soft.as_ref().map(|sv| {
            let c = sv.len() / self.len().max(1);
            idx.iter().flat_map(|&i| sv[i * c..(i + 1) * c].iter().copied()).collect()
        });
        Self { seq_len: self.seq_len, feature_dim: self.feature_dim, xs, labels: idx.iter().map(|&i| self.labels[i]).collect(), soft }
    }

    /// Appends `other`; soft targets survive only if both sides carry them.
    pub fn concat(&self, other: &Dataset) -> Result<Self> {
        if (self.seq_len, self.feature_dim) != (other.seq_len, other.feature_dim) {
            return Err(Error::Shape {
                op: "dataset_concat",
                detail: format!("[{}, {}] vs [{}, {}]", self.seq_len, self.feature_dim, other.seq_len, other.feature_dim),
            });
        }
        let mut out = self.clone();
        out.xs.extend_from_slice(&other.xs);
        out.labels.extend_from_slice(&other.labels);
        out.soft = match (&self.soft, &other.soft) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            _ => None,
        };
        Ok(out)
    }

    pub fn class_counts(&self, n_classes: usize) -> Vec<usize> {
        let mut c = alloc::vec![0; n_classes];
        for &y in &self.labels {
            if y < n_classes {
                c[y] += 1;
            }
        }
        c
    }

    /// Keeps the first `l` steps of every window.
    pub fn truncate_steps(&self, l: usize) -> Result<Self> {
        if l == 0 || l > self.seq_len {
            return Err(Error::InvalidArgument(format!("cannot truncate {}-step windows to {}", self.seq_len, l)));
        }
        let f = self.feature_dim;
        let xs = (0..self.len()).flat_map(|i| self.sample(i)[..l * f].iter().copied()).collect();
        Ok(Self { seq_len: l, feature_dim: f, xs, labels: self.labels.clone(), soft: self.soft.clone() })
    }
}

/// Per-class shuffled split; each class contributes `round(n_c * test_frac)`
/// test samples. Both index lists are sorted.
pub fn stratified_split(labels: &[usize], test_frac: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = SeededRng::for_stage(seed, "split");
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for c in 0..n_classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        rng.shuffle(&mut idx);
        let k = libm::round(idx.len() as f64 * test_frac) as usize;
        test.extend_from_slice(&idx[..k]);
        train.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn subset_and_concat() {
        let d = Dataset::new(2, 1, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], vec![0, 1, 0]).unwrap();
        let s = d.subset(&[2, 0]);
        assert_eq!(s.xs, vec![5.0, 6.0, 1.0, 2.0]);
        assert_eq!(s.labels, vec![0, 0]);
        let c = d.concat(&s).unwrap();
        assert_eq!(c.len(), 5);
        assert_eq!(d.truncate_steps(1).unwrap().xs, vec![1.0, 3.0, 5.0]);
        assert!(d.truncate_steps(3).is_err());
        assert!(Dataset::new(2, 1, vec![1.0], vec![0]).is_err());
    }

    proptest! {
        #[test]
        fn split_preserves_class_ratio(seed in any::<u64>(), n0 in 1usize..300, n1 in 1usize..300) {
            let labels: Vec<usize> = (0..n0 + n1).map(|i| usize::from(i >= n0)).collect();
            let (tr, te) = stratified_split(&labels, 0.2, seed);
            prop_assert_eq!(tr.len() + te.len(), n0 + n1);
            let te1 = te.iter().filter(|&&i| labels[i] == 1).count() as f64;
            let expect = te.len() as f64 * n1 as f64 / (n0 + n1) as f64;
            prop_assert!((te1 - expect).abs() <= 1.0);
            let mut all: Vec<usize> = tr.iter().chain(&te).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n0 + n1).collect::<Vec<_>>());
        }
    }
}
