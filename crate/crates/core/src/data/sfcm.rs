//! Semi-supervised fuzzy c-means with fuzzifier 2.
//!
//! Objective, with `g_ij = f_ij b_j` the prior target and `D_ij = |x_i - c_j|^2`:
//!
//! `J = sum_ij u_ij^2 D_ij + lambda sum_ij (u_ij - g_ij)^2 D_ij`
//!
//! The default [`MembershipRule::Exact`] alternates the closed-form minimizers
//! of `J` (membership under the row-sum constraint, then centroids), so `J`
//! never increases. [`MembershipRule::AsPrinted`] uses the variant whose prior
//! correction sums `f` over samples instead of clusters, clips negative
//! memberships and renormalizes rows, with plain weighted-mean centroids.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MembershipRule {
    #[default]
    Exact,
    AsPrinted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SfcmConfig {
    pub n_clusters: usize,
    pub lambda: f64,
    pub max_iterations: usize,
    /// Stop once no centroid moves farther than this.
    pub tolerance: f64,
    #[serde(default)]
    pub rule: MembershipRule,
}

impl Default for SfcmConfig {
    fn default() -> Self {
        Self { n_clusters: 2, lambda: 5.0, max_iterations: 1000, tolerance: 1e-6, rule: MembershipRule::Exact }
    }
}

impl SfcmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_clusters < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 clusters, got {}", self.n_clusters)));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance must be > 0, got {}", self.tolerance)));
        }
        Ok(())
    }
}

/// Fuzzy memberships `[n, m]` together with the priors that shaped them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipMatrix {
    pub n_clusters: usize,
    pub u: Vec<f64>,
    /// Prior cluster per sample (`f_ij = 1` for that cluster).
    pub priors: Vec<Option<usize>>,
    /// `b_j = 1` for clusters that own at least one prior.
    pub b: Vec<f64>,
}

impl MembershipMatrix {
    pub fn len(&self) -> usize {
        self.priors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.priors.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.u[i * self.n_clusters..(i + 1) * self.n_clusters]
    }

    /// Argmax cluster per sample.
    pub fn hard_labels(&self) -> Vec<usize> {
        crate::model::argmax_rows(&self.u, self.n_clusters)
    }

    fn target(&self, i: usize, j: usize) -> f64 {
        if self.priors[i] == Some(j) {
            self.b[j]
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SfcmResult {
    pub membership: MembershipMatrix,
    /// `[m, d]` centroids.
    pub centroids: Vec<f64>,
    pub dim: usize,
    /// Objective after each iteration.
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Fits memberships and centroids on `[n, dim]` features. Priors name the
/// cluster a labeled sample should belong to.
pub fn sfcm_fit(features: &[f64], dim: usize, priors: &[Option<usize>], cfg: &SfcmConfig) -> Result<SfcmResult> {
    cfg.validate()?;
    let m = cfg.n_clusters;
    if dim == 0 || features.len() % dim != 0 || features.len() / dim != priors.len() {
        return Err(Error::Shape {
            op: "sfcm_fit",
            detail: format!("{} feature values, dim {}, {} priors", features.len(), dim, priors.len()),
        });
    }
    let n = priors.len();
    if n < m {
        return Err(Error::InvalidArgument(format!("{} samples cannot fill {} clusters", n, m)));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("clustering features must be finite".into()));
    }
    if let Some(p) = priors.iter().flatten().find(|&&p| p >= m) {
        return Err(Error::InvalidArgument(format!("prior cluster {} out of range for {} clusters", p, m)));
    }
    let mut b = vec![0.0; m];
    for &p in priors.iter().flatten() {
        b[p] = 1.0;
    }
    let mut mm = MembershipMatrix { n_clusters: m, u: vec![0.0; n * m], priors: priors.to_vec(), b };
    let mut centroids = init_centroids(features, dim, priors, m);
    let mut objective = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let lambda = cfg.lambda;
    let prior_mass: Vec<f64> = (0..m).map(|j| priors.iter().filter(|p| **p == Some(j)).count() as f64).collect();
    let mut d2 = vec![0.0; n * m];
    while iterations < cfg.max_iterations {
        iterations += 1;
        distances(features, dim, &centroids, m, &mut d2);
        for i in 0..n {
            let di = &d2[i * m..(i + 1) * m];
            let row = &mut mm.u[i * m..(i + 1) * m];
            if let Some(z) = di.iter().position(|v| *v == 0.0) {
                row.iter_mut().enumerate().for_each(|(j, u)| *u = f64::from(u8::from(j == z)));
                continue;
            }
            let g: Vec<f64> = (0..m).map(|j| if priors[i] == Some(j) { mm.b[j] } else { 0.0 }).collect();
            for j in 0..m {
                let ratio: f64 = di.iter().map(|dk| di[j] / dk).sum();
                let corr = match cfg.rule {
                    MembershipRule::Exact => g.iter().sum::<f64>(),
                    MembershipRule::AsPrinted => mm.b[j] * prior_mass[j],
                };
                row[j] = ((1.0 + lambda * (1.0 - corr)) / ratio + lambda * g[j]) / (1.0 + lambda);
            }
            if cfg.rule == MembershipRule::AsPrinted {
                row.iter_mut().for_each(|u| *u = u.max(0.0));
                if row.iter().sum::<f64>() <= 0.0 {
                    for j in 0..m {
                        row[j] = 1.0 / di.iter().map(|dk| di[j] / dk).sum::<f64>();
                    }
                }
            }
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|u| *u /= s);
        }
        let next = update_centroids(features, dim, &mm, lambda, cfg.rule, &centroids);
        let shift = (0..m)
            .map(|j| libm::sqrt((0..dim).map(|k| libm::pow(next[j * dim + k] - centroids[j * dim + k], 2.0)).sum()))
            .fold(0.0, f64::max);
        centroids = next;
        objective.push(sfcm_objective(features, dim, &mm, &centroids, lambda));
        if shift < cfg.tolerance {
            converged = true;
            break;
        }
    }
    Ok(SfcmResult { membership: mm, centroids, dim, objective, iterations, converged })
}

/// `J` for the given memberships and centroids.
pub fn sfcm_objective(features: &[f64], dim: usize, mm: &MembershipMatrix, centroids: &[f64], lambda: f64) -> f64 {
    let m = mm.n_clusters;
    let mut d2 = vec![0.0; mm.len() * m];
    distances(features, dim, centroids, m, &mut d2);
    let mut j_total = 0.0;
    for i in 0..mm.len() {
        for j in 0..m {
            let u = mm.u[i * m + j];
            let g = mm.target(i, j);
            j_total += (u * u + lambda * (u - g) * (u - g)) * d2[i * m + j];
        }
    }
    j_total
}

fn distances(xs: &[f64], dim: usize, c: &[f64], m: usize, out: &mut [f64]) {
    for (i, x) in xs.chunks(dim).enumerate() {
        for j in 0..m {
            out[i * m + j] = x.iter().zip(&c[j * dim..(j + 1) * dim]).map(|(a, b)| (a - b) * (a - b)).sum();
        }
    }
}

/// Prior means where available, remaining clusters by farthest-point
/// selection starting from the sample farthest from the data mean.
fn init_centroids(xs: &[f64], dim: usize, priors: &[Option<usize>], m: usize) -> Vec<f64> {
    let n = priors.len();
    let mut c = vec![0.0; m * dim];
    let mut set = vec![false; m];
    for j in 0..m {
        let members: Vec<usize> = (0..n).filter(|&i| priors[i] == Some(j)).collect();
        if members.is_empty() {
            continue;
        }
        for &i in &members {
            for k in 0..dim {
                c[j * dim + k] += xs[i * dim + k] / members.len() as f64;
            }
        }
        set[j] = true;
    }
    let dist2 = |i: usize, p: &[f64]| -> f64 { (0..dim).map(|k| libm::pow(xs[i * dim + k] - p[k], 2.0)).sum() };
    for j in 0..m {
        if set[j] {
            continue;
        }
        let chosen: Vec<usize> = (0..m).filter(|&q| set[q]).collect();
        let score = |i: usize| -> f64 {
            if chosen.is_empty() {
                let mean: Vec<f64> = (0..dim).map(|k| (0..n).map(|r| xs[r * dim + k]).sum::<f64>() / n as f64).collect();
                dist2(i, &mean)
            } else {
                chosen.iter().map(|&q| dist2(i, &c[q * dim..(q + 1) * dim])).fold(f64::INFINITY, f64::min)
            }
        };
        let best = (0..n).fold(0, |b, i| if score(i) > score(b) { i } else { b });
        c[j * dim..(j + 1) * dim].copy_from_slice(&xs[best * dim..(best + 1) * dim]);
        set[j] = true;
    }
    c
}

fn update_centroids(xs: &[f64], dim: usize, mm: &MembershipMatrix, lambda: f64, rule: MembershipRule, prev: &[f64]) -> Vec<f64> {
    let m = mm.n_clusters;
    let mut num = vec![0.0; m * dim];
    let mut den = vec![0.0; m];
    for i in 0..mm.len() {
        for j in 0..m {
            let u = mm.u[i * m + j];
            let w = match rule {
                MembershipRule::Exact => {
                    let g = mm.target(i, j);
                    u * u + lambda * (u - g) * (u - g)
                }
                MembershipRule::AsPrinted => u * u,
            };
            den[j] += w;
            for k in 0..dim {
                num[j * dim + k] += w * xs[i * dim + k];
            }
        }
    }
    (0..m * dim).map(|t| if den[t / dim] > 0.0 { num[t] / den[t / dim] } else { prev[t] }).collect()
}
