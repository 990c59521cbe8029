//! Kernel two-sample statistic.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Unbiased squared-MMD estimate with the RBF kernel
/// `k(x, y) = exp(-|x - y|^2 / (2 sigma^2))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mmd {
    /// The U-statistic itself; can be slightly negative.
    pub raw: f64,
    /// `max(raw, 0)`.
    pub value: f64,
    pub bandwidth: f64,
}

/// `bandwidth = None` uses the median pairwise distance of the pooled sample.
/// Rows are `dim`-dimensional. The result is exactly symmetric in `x`, `y`.
pub fn mmd_rbf(x: &[f64], y: &[f64], dim: usize, bandwidth: Option<f64>) -> Result<Mmd> {
    if dim == 0 || x.len() % dim != 0 || y.len() % dim != 0 {
        return Err(Error::Shape { op: "mmd_rbf", detail: format!("{} and {} values for dimension {}", x.len(), y.len(), dim) });
    }
    let (m, n) = (x.len() / dim, y.len() / dim);
    if m < 2 || n < 2 {
        return Err(Error::InvalidArgument(format!("MMD needs at least 2 samples per set, got {} and {}", m, n)));
    }
    let sigma = match bandwidth {
        Some(s) if s > 0.0 && s.is_finite() => s,
        Some(s) => return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {}", s))),
        None => median_distance(x, y, dim),
    };
    let gamma = if sigma > 0.0 { 1.0 / (2.0 * sigma * sigma) } else { f64::INFINITY };
    let k = |a: &[f64], b: &[f64]| -> f64 {
        let d2: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
        if d2 == 0.0 {
            1.0
        } else {
            libm::exp(-gamma * d2)
        }
    };
    let within = |s: &[f64], cnt: usize| -> f64 {
        let mut acc = 0.0;
        for i in 0..cnt {
            for j in i + 1..cnt {
                acc += k(&s[i * dim..(i + 1) * dim], &s[j * dim..(j + 1) * dim]);
            }
        }
        2.0 * acc / (cnt * (cnt - 1)) as f64
    };
    let cross = |a: &[f64], ca: usize, b: &[f64], cb: usize| -> f64 {
        let mut acc = 0.0;
        for i in 0..ca {
            for j in 0..cb {
                acc += k(&a[i * dim..(i + 1) * dim], &b[j * dim..(j + 1) * dim]);
            }
        }
        acc / (ca * cb) as f64
    };
    let kxy = 0.5 * (cross(x, m, y, n) + cross(y, n, x, m));
    let raw = within(x, m) + within(y, n) - 2.0 * kxy;
    Ok(Mmd { raw, value: raw.max(0.0), bandwidth: sigma })
}

/// Rows per set used for the bandwidth heuristic; larger sets are thinned at
/// an even stride.
const MEDIAN_ROWS: usize = 1000;

/// Median Euclidean distance over all distinct pairs of the pooled rows.
pub fn median_distance(x: &[f64], y: &[f64], dim: usize) -> f64 {
    fn thin(s: &[f64], dim: usize) -> impl Iterator<Item = &[f64]> {
        let stride = (s.len() / dim).div_ceil(MEDIAN_ROWS).max(1);
        s.chunks(dim).step_by(stride)
    }
    let rows: Vec<&[f64]> = thin(x, dim).chain(thin(y, dim)).collect();
    let mut d = Vec::with_capacity(rows.len() * (rows.len() - 1) / 2);
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            d.push(libm::sqrt(rows[i].iter().zip(rows[j]).map(|(p, q)| (p - q) * (p - q)).sum()));
        }
    }
    if d.is_empty() {
        return 0.0;
    }
    d.sort_by(f64::total_cmp);
    let h = d.len() / 2;
    if d.len() % 2 == 1 {
        d[h]
    } else {
        0.5 * (d[h - 1] + d[h])
    }
}
