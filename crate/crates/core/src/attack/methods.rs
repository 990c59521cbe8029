use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{AdvBatch, AttackConfig, AttackMethod};
use crate::error::{Error, Result};
use crate::model::{argmax_rows, Classifier};
use crate::rng::SeededRng;

/// Samples per attack pass; matches the inference chunk so single samples and
/// batches see identical arithmetic.
const CHUNK: usize = 32;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Runs `cfg` against `model` on a labeled batch, in chunks. `seed` drives the
/// PGD random start.
pub fn attack(model: &dyn Classifier, xs: &[f64], labels: &[usize], cfg: &AttackConfig, seed: u64) -> Result<AdvBatch> {
    let per = check_inputs(model, xs, labels, cfg)?;
    let mut rng = SeededRng::for_stage(seed, "attack");
    let mut out = empty_batch();
    let n = labels.len();
    for (ci, ys) in labels.chunks(CHUNK).enumerate() {
        let start = ci * CHUNK;
        let x = &xs[start * per..(start + ys.len()) * per];
        let mut crng = rng.fork("chunk");
        let b = match cfg.method {
            AttackMethod::Mifgsm => mi_fgsm(model, x, ys, cfg)?,
            AttackMethod::Pgd => pgd(model, x, ys, cfg, &mut crng)?,
            AttackMethod::Cw => cw_attack(model, x, ys, cfg)?,
        };
        out.extend(b, ys.len() as f64, n as f64);
    }
    Ok(out)
}

/// Momentum iterative FGSM: `g <- mu g + grad / |grad|_1`, then a signed step
/// of size alpha, projected onto the l-inf ball and the valid range.
pub fn mi_fgsm(model: &dyn Classifier, xs: &[f64], labels: &[usize], cfg: &AttackConfig) -> Result<AdvBatch> {
    let per = check_inputs(model, xs, labels, cfg)?;
    let mask = sample_mask(model, cfg);
    let (eps, alpha, mu) = (cfg.epsilon, cfg.step_size(), cfg.momentum);
    let mut x = xs.to_vec();
    let mut g = vec![0.0; xs.len()];
    let mut trace = Vec::with_capacity(cfg.steps + 1);
    let mut clean_pred = None;
    for _ in 0..cfg.steps {
        let (logits, loss, grad) = ce_grad(model, &x, labels)?;
        clean_pred.get_or_insert_with(|| argmax_rows(&logits, model.n_classes()));
        trace.push(loss);
        for s in 0..labels.len() {
            let r = s * per..(s + 1) * per;
            let l1: f64 = grad[r.clone()].iter().zip(&mask).filter(|(_, m)| **m).map(|(v, _)| v.abs()).sum();
            for (k, i) in r.enumerate() {
                if !mask[k] {
                    continue;
                }
                let gi = if l1 > 0.0 { grad[i] / l1 } else { 0.0 };
                g[i] = mu * g[i] + gi;
                x[i] = project(x[i] + alpha * sign(g[i]), xs[i], eps, cfg.clamp);
            }
        }
    }
    let clean_pred = match clean_pred {
        Some(p) => p,
        None => model.predict(xs, labels.len())?,
    };
    finish(model, xs, x, labels, clean_pred, trace, &mask)
}

/// Projected gradient descent on the l-inf ball with an optional uniform
/// random start.
pub fn pgd(model: &dyn Classifier, xs: &[f64], labels: &[usize], cfg: &AttackConfig, rng: &mut SeededRng) -> Result<AdvBatch> {
    let per = check_inputs(model, xs, labels, cfg)?;
    let mask = sample_mask(model, cfg);
    let (eps, alpha) = (cfg.epsilon, cfg.step_size());
    let clean_pred = model.predict(xs, labels.len())?;
    let mut x = xs.to_vec();
    if cfg.random_start {
        for (i, v) in x.iter_mut().enumerate() {
            if mask[i % per] {
                *v = project(*v + rng.uniform_range(-eps, eps), xs[i], eps, cfg.clamp);
            }
        }
    }
    let mut trace = Vec::with_capacity(cfg.steps + 1);
    for _ in 0..cfg.steps {
        let (_, loss, grad) = ce_grad(model, &x, labels)?;
        trace.push(loss);
        for (i, v) in x.iter_mut().enumerate() {
            if mask[i % per] {
                *v = project(*v + alpha * sign(grad[i]), xs[i], eps, cfg.clamp);
            }
        }
    }
    finish(model, xs, x, labels, clean_pred, trace, &mask)
}

/// Carlini-Wagner style l2 attack: Adam on `|d|^2 + lambda max(Z_y - max_j Z_j, -conf)`.
///
/// The returned iterate per sample is the smallest perturbation that reached
/// the full confidence margin, else the smallest one that flipped the
/// prediction, else the last. Samples the model already misclassifies are
/// returned unchanged.
pub fn cw_attack(model: &dyn Classifier, xs: &[f64], labels: &[usize], cfg: &AttackConfig) -> Result<AdvBatch> {
    let per = check_inputs(model, xs, labels, cfg)?;
    let mask = sample_mask(model, cfg);
    let c = model.n_classes();
    let nb = labels.len();
    let n_mask = mask.iter().filter(|m| **m).count();
    let radius = cfg.epsilon * libm::sqrt(n_mask as f64);
    let (conf, lambda, lr) = (cfg.cw.confidence, cfg.cw.lambda, cfg.cw.lr);

    let mut delta = vec![0.0; xs.len()];
    let (mut m1, mut m2) = (vec![0.0; xs.len()], vec![0.0; xs.len()]);
    // (tier, squared norm, perturbation, prediction); tier 0 = confident, 1 = flipped, 2 = neither.
    let mut best: Vec<(u8, f64, Vec<f64>, usize)> = (0..nb).map(|s| (3, f64::INFINITY, Vec::new(), labels[s])).collect();
    let mut active = vec![true; nb];
    let mut clean_pred = Vec::new();
    let mut trace = Vec::with_capacity(cfg.steps + 1);
    for it in 0..=cfg.steps {
        let x: Vec<f64> = xs.iter().zip(&delta).map(|(a, d)| a + d).collect();
        let mut margins = vec![0.0; nb];
        let mut upstream = |logits: &[f64]| -> Vec<f64> {
            let mut u = vec![0.0; logits.len()];
            for (s, row) in logits.chunks(c).enumerate() {
                let y = labels[s];
                let j = (0..c).filter(|&j| j != y).fold(usize::MAX, |b, j| if b == usize::MAX || row[j] > row[b] { j } else { b });
                margins[s] = row[y] - row[j];
                if margins[s] > -conf {
                    u[s * c + y] = lambda;
                    u[s * c + j] = -lambda;
                }
            }
            u
        };
        let (logits, grad) = model.logits_and_input_grad(&x, nb, &mut upstream)?;
        let preds = argmax_rows(&logits, c);
        if it == 0 {
            clean_pred = preds.clone();
            for s in 0..nb {
                active[s] = clean_pred[s] == labels[s];
            }
        }
        let mut obj = 0.0;
        for s in 0..nb {
            let r = s * per..(s + 1) * per;
            let n2: f64 = delta[r.clone()].iter().map(|d| d * d).sum();
            obj += n2 + lambda * margins[s].max(-conf);
            if !active[s] {
                continue;
            }
            let tier = if margins[s] <= -conf && preds[s] != labels[s] {
                0
            } else if preds[s] != labels[s] {
                1
            } else {
                2
            };
            let b = &mut best[s];
            if tier < b.0 || (tier == b.0 && (tier == 2 || n2 < b.1)) {
                *b = (tier, n2, delta[r].to_vec(), preds[s]);
            }
        }
        trace.push(obj / nb as f64);
        if it == cfg.steps {
            break;
        }
        let t = (it + 1) as f64;
        let (bc1, bc2) = (1.0 - libm::pow(ADAM_BETA1, t), 1.0 - libm::pow(ADAM_BETA2, t));
        for s in (0..nb).filter(|&s| active[s]) {
            let r = s * per..(s + 1) * per;
            for (k, i) in r.clone().enumerate() {
                if !mask[k] {
                    continue;
                }
                let gi = 2.0 * delta[i] + grad[i];
                m1[i] = ADAM_BETA1 * m1[i] + (1.0 - ADAM_BETA1) * gi;
                m2[i] = ADAM_BETA2 * m2[i] + (1.0 - ADAM_BETA2) * gi * gi;
                delta[i] -= lr * (m1[i] / bc1) / (libm::sqrt(m2[i] / bc2) + ADAM_EPS);
                if let Some((lo, hi)) = cfg.clamp {
                    delta[i] = (xs[i] + delta[i]).clamp(lo, hi) - xs[i];
                }
            }
            if radius.is_finite() {
                let n = libm::sqrt(delta[r.clone()].iter().map(|d| d * d).sum::<f64>());
                if n > radius {
                    let k = radius / n;
                    delta[r].iter_mut().for_each(|d| *d *= k);
                }
            }
        }
    }
    let mut x_adv = xs.to_vec();
    let mut adv_pred = Vec::with_capacity(nb);
    for (s, (_, _, d, p)) in best.into_iter().enumerate() {
        if active[s] {
            x_adv[s * per..(s + 1) * per].iter_mut().zip(&d).for_each(|(a, b)| *a += b);
            adv_pred.push(p);
        } else {
            adv_pred.push(clean_pred[s]);
        }
    }
    let (linf, l2) = norms(xs, &x_adv, per);
    Ok(AdvBatch { x_adv, labels: labels.to_vec(), clean_pred, adv_pred, linf, l2, loss_trace: trace })
}

fn check_inputs(model: &dyn Classifier, xs: &[f64], labels: &[usize], cfg: &AttackConfig) -> Result<usize> {
    let (l, f) = model.sample_dims();
    cfg.validate(f)?;
    if xs.len() != labels.len() * l * f {
        return Err(Error::Shape {
            op: "attack",
            detail: format!("{} values for {} samples of [{}, {}]", xs.len(), labels.len(), l, f),
        });
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= model.n_classes()) {
        return Err(Error::InvalidArgument(format!("label {} out of range", y)));
    }
    Ok(l * f)
}

fn sample_mask(model: &dyn Classifier, cfg: &AttackConfig) -> Vec<bool> {
    let (l, f) = model.sample_dims();
    cfg.mask(l, f)
}

fn empty_batch() -> AdvBatch {
    AdvBatch {
        x_adv: Vec::new(),
        labels: Vec::new(),
        clean_pred: Vec::new(),
        adv_pred: Vec::new(),
        linf: Vec::new(),
        l2: Vec::new(),
        loss_trace: Vec::new(),
    }
}

/// Sign with `sign(0) = 0`.
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Onto `[x0 - eps, x0 + eps]`, then the valid range.
fn project(v: f64, x0: f64, eps: f64, clamp: Option<(f64, f64)>) -> f64 {
    let v = v.max(x0 - eps).min(x0 + eps);
    match clamp {
        Some((lo, hi)) => v.max(lo).min(hi),
        None => v,
    }
}

/// Logits, mean cross-entropy and its input gradient (summed over the batch).
fn ce_grad(model: &dyn Classifier, xs: &[f64], labels: &[usize]) -> Result<(Vec<f64>, f64, Vec<f64>)> {
    let c = model.n_classes();
    let mut loss = 0.0;
    let mut upstream = |logits: &[f64]| -> Vec<f64> {
        let mut u = crate::model::softmax_rows(logits, c);
        for (s, row) in logits.chunks(c).enumerate() {
            loss += ce(row, labels[s]);
            u[s * c + labels[s]] -= 1.0;
        }
        u
    };
    let (logits, grad) = model.logits_and_input_grad(xs, labels.len(), &mut upstream)?;
    Ok((logits, loss / labels.len() as f64, grad))
}

fn ce(row: &[f64], y: usize) -> f64 {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + libm::log(row.iter().map(|v| libm::exp(v - m)).sum::<f64>());
    lse - row[y]
}

fn norms(x0: &[f64], x: &[f64], per: usize) -> (Vec<f64>, Vec<f64>) {
    x0.chunks(per)
        .zip(x.chunks(per))
        .map(|(a, b)| {
            let d = a.iter().zip(b).map(|(p, q)| q - p);
            let linf = d.clone().fold(0.0f64, |m, v| m.max(v.abs()));
            (linf, libm::sqrt(d.map(|v| v * v).sum()))
        })
        .unzip()
}

fn finish(
    model: &dyn Classifier,
    xs: &[f64],
    x_adv: Vec<f64>,
    labels: &[usize],
    clean_pred: Vec<usize>,
    mut trace: Vec<f64>,
    mask: &[bool],
) -> Result<AdvBatch> {
    let per = mask.len();
    let c = model.n_classes();
    let logits = model.logits(&x_adv, labels.len())?;
    trace.push(logits.chunks(c).zip(labels).map(|(r, &y)| ce(r, y)).sum::<f64>() / labels.len() as f64);
    let adv_pred = argmax_rows(&logits, c);
    let (linf, l2) = norms(xs, &x_adv, per);
    Ok(AdvBatch { x_adv, labels: labels.to_vec(), clean_pred, adv_pred, linf, l2, loss_trace: trace })
}
