//! Least-squares GAN over flattened windows.
//!
//! Discriminator loss `0.5 E[(D(x) - 1)^2] + 0.5 E[D(G(z))^2]`, generator loss
//! `0.5 E[(D(G(z)) - 1)^2]`. Each iteration takes `k` discriminator steps and
//! one generator step; training stops after `epochs` passes over the real data
//! or `max_iterations` iterations, whichever comes first. Inputs are
//! standardized per dimension and generated samples mapped back.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{Adam, AdamConfig};
use crate::rng::SeededRng;
use crate::tensor::{ParamId, ParamStore, Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LsganConfig {
    pub latent_dim: usize,
    pub generator_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub max_iterations: usize,
    /// Discriminator steps per generator step.
    pub k: usize,
}

impl Default for LsganConfig {
    fn default() -> Self {
        Self {
            latent_dim: 16,
            generator_hidden: vec![128, 128],
            discriminator_hidden: vec![128, 64],
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            batch_size: 32,
            epochs: 1000,
            max_iterations: 3000,
            k: 5,
        }
    }
}

impl LsganConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if self.latent_dim == 0 || self.batch_size == 0 || !(self.lr > 0.0) {
            return Err(Error::InvalidArgument(format!("invalid LSGAN settings {:?}", self)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Hidden {
    Relu,
    LeakyRelu,
}

/// Fully connected network with a linear output layer.
#[derive(Debug, Clone)]
pub struct Mlp {
    store: ParamStore,
    layers: Vec<(ParamId, ParamId)>,
    hidden: Hidden,
}

impl Mlp {
    fn new(sizes: &[usize], hidden: Hidden, name: &str, rng: &mut SeededRng) -> Self {
        let mut store = ParamStore::new();
        let mut layers = Vec::new();
        for (i, w) in sizes.windows(2).enumerate() {
            let a = libm::sqrt(6.0 / (w[0] + w[1]) as f64);
            let data = (0..w[0] * w[1]).map(|_| rng.uniform_range(-a, a)).collect();
            let wid = store.add(format!("{name}.{i}.w"), Tensor::new(vec![w[0], w[1]], data).expect("shape"));
            let bid = store.add(format!("{name}.{i}.b"), Tensor::zeros(&[w[1]]));
            layers.push((wid, bid));
        }
        Self { store, layers, hidden }
    }

    fn forward(&self, tape: &mut Tape, x: Var, trainable: bool) -> Result<Var> {
        let mut h = x;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let (wv, bv) = if trainable {
                (tape.param(&self.store, w), tape.param(&self.store, b))
            } else {
                (tape.constant(self.store.get(w).value.clone()), tape.constant(self.store.get(b).value.clone()))
            };
            let z = tape.matmul(h, wv)?;
            h = tape.add_broadcast(z, bv)?;
            if i + 1 < self.layers.len() {
                h = match self.hidden {
                    Hidden::Relu => tape.relu(h),
                    Hidden::LeakyRelu => tape.leaky_relu(h, 0.2),
                };
            }
        }
        Ok(h)
    }

    fn eval(&self, x: Vec<f64>, rows: usize, cols: usize) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let xv = tape.constant(Tensor::new(vec![rows, cols], x)?);
        let y = self.forward(&mut tape, xv, false)?;
        Ok(tape.value(y).data().to_vec())
    }

    pub fn num_scalars(&self) -> usize {
        self.store.num_scalars()
    }
}

#[derive(Debug, Clone)]
pub struct Generator {
    net: Mlp,
    pub latent_dim: usize,
    pub out_dim: usize,
    mean: Vec<f64>,
    std: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Discriminator {
    net: Mlp,
    pub in_dim: usize,
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Discriminator {
    /// Scores for raw (unstandardized) samples.
    pub fn score(&self, xs: &[f64]) -> Result<Vec<f64>> {
        let rows = xs.len() / self.in_dim;
        let z = standardize(xs, &self.mean, &self.std);
        self.net.eval(z, rows, self.in_dim)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanHistory {
    /// Discriminator loss of the last discriminator step of each iteration.
    pub d_loss: Vec<f64>,
    pub g_loss: Vec<f64>,
    pub iterations: usize,
    pub epochs: usize,
    /// The real set had no spread in any dimension.
    pub degenerate: bool,
}

/// `(discriminator loss, generator loss)` for given discriminator outputs.
pub fn lsgan_losses(d_real: &[f64], d_fake: &[f64]) -> (f64, f64) {
    let mean = |v: &[f64], f: &dyn Fn(f64) -> f64| v.iter().map(|x| f(*x)).sum::<f64>() / v.len().max(1) as f64;
    let d = 0.5 * mean(d_real, &|x| (x - 1.0) * (x - 1.0)) + 0.5 * mean(d_fake, &|x| x * x);
    let g = 0.5 * mean(d_fake, &|x| (x - 1.0) * (x - 1.0));
    (d, g)
}

fn standardize(xs: &[f64], mean: &[f64], std: &[f64]) -> Vec<f64> {
    let d = mean.len();
    xs.iter().enumerate().map(|(i, v)| (v - mean[i % d]) / std[i % d]).collect()
}

fn squared_error(tape: &mut Tape, x: Var, target: f64) -> Var {
    let shifted = tape.add_scalar(x, -target);
    let sq = tape.mul(shifted, shifted).expect("same shape");
    let m = tape.mean(sq);
    tape.scale(m, 0.5)
}

fn latent(rng: &mut SeededRng, rows: usize, dim: usize) -> Tensor {
    Tensor::new(vec![rows, dim], (0..rows * dim).map(|_| rng.normal()).collect()).expect("shape")
}

/// Trains one GAN on `[n, dim]` real samples.
pub fn lsgan_train(real: &[f64], dim: usize, cfg: &LsganConfig, seed: u64) -> Result<(Generator, Discriminator, GanHistory)> {
    cfg.validate()?;
    if dim == 0 || real.len() % dim != 0 {
        return Err(Error::Shape { op: "lsgan_train", detail: format!("{} values for dimension {}", real.len(), dim) });
    }
    let n = real.len() / dim;
    if n < 2 * cfg.batch_size {
        return Err(Error::InvalidArgument(format!("LSGAN needs at least {} real samples, got {}", 2 * cfg.batch_size, n)));
    }
    let mean: Vec<f64> = (0..dim).map(|j| (0..n).map(|i| real[i * dim + j]).sum::<f64>() / n as f64).collect();
    let raw_std: Vec<f64> = (0..dim)
        .map(|j| libm::sqrt((0..n).map(|i| libm::pow(real[i * dim + j] - mean[j], 2.0)).sum::<f64>() / n as f64))
        .collect();
    let degenerate = raw_std.iter().all(|s| *s < 1e-12);
    let std: Vec<f64> = raw_std.iter().map(|s| s.max(1e-6)).collect();
    let data = standardize(real, &mean, &std);

    let mut rng = SeededRng::for_stage(seed, "lsgan");
    let mut gsizes = vec![cfg.latent_dim];
    gsizes.extend(&cfg.generator_hidden);
    gsizes.push(dim);
    let mut dsizes = vec![dim];
    dsizes.extend(&cfg.discriminator_hidden);
    dsizes.push(1);
    let mut g = Mlp::new(&gsizes, Hidden::Relu, "generator", &mut rng);
    let mut d = Mlp::new(&dsizes, Hidden::LeakyRelu, "discriminator", &mut rng);
    let adam = AdamConfig { beta1: cfg.beta1, beta2: cfg.beta2, ..AdamConfig::adam() };
    let (mut opt_g, mut opt_d) = (Adam::new(adam, &g.store), Adam::new(adam, &d.store));

    let bs = cfg.batch_size;
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let mut cursor = 0;
    let mut history = GanHistory { d_loss: Vec::new(), g_loss: Vec::new(), iterations: 0, epochs: 0, degenerate };
    'outer: while history.iterations < cfg.max_iterations {
        let mut last_d = 0.0;
        for _ in 0..cfg.k {
            if cursor + bs > n {
                history.epochs += 1;
                if history.epochs >= cfg.epochs {
                    break 'outer;
                }
                rng.shuffle(&mut order);
                cursor = 0;
            }
            let mut xb = Vec::with_capacity(bs * dim);
            for &i in &order[cursor..cursor + bs] {
                xb.extend_from_slice(&data[i * dim..(i + 1) * dim]);
            }
            cursor += bs;
            let fake = g.eval(latent(&mut rng, bs, cfg.latent_dim).into_data(), bs, cfg.latent_dim)?;
            let mut tape = Tape::new();
            let xr = tape.constant(Tensor::new(vec![bs, dim], xb)?);
            let xf = tape.constant(Tensor::new(vec![bs, dim], fake)?);
            let dr = d.forward(&mut tape, xr, true)?;
            let df = d.forward(&mut tape, xf, true)?;
            let lr_ = squared_error(&mut tape, dr, 1.0);
            let lf = squared_error(&mut tape, df, 0.0);
            let loss = tape.add(lr_, lf)?;
            last_d = tape.value(loss).data()[0];
            tape.backward(loss)?;
            d.store.zero_grad();
            d.store.accumulate_grads(&tape);
            opt_d.step(&mut d.store, cfg.lr)?;
        }
        let mut tape = Tape::new();
        let z = tape.constant(latent(&mut rng, bs, cfg.latent_dim));
        let xf = g.forward(&mut tape, z, true)?;
        let df = d.forward(&mut tape, xf, false)?;
        let loss = squared_error(&mut tape, df, 1.0);
        let gl = tape.value(loss).data()[0];
        tape.backward(loss)?;
        g.store.zero_grad();
        g.store.accumulate_grads(&tape);
        opt_g.step(&mut g.store, cfg.lr)?;
        history.d_loss.push(last_d);
        history.g_loss.push(gl);
        history.iterations += 1;
    }
    let generator = Generator { net: g, latent_dim: cfg.latent_dim, out_dim: dim, mean: mean.clone(), std: std.clone() };
    Ok((generator, Discriminator { net: d, in_dim: dim, mean, std }, history))
}

/// `n` samples `[n, out_dim]` in the original units; deterministic per seed.
pub fn lsgan_generate(generator: &Generator, n: usize, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut rng = SeededRng::for_stage(seed, "lsgan-sample");
    let z = latent(&mut rng, n, generator.latent_dim).into_data();
    let mut out = Vec::with_capacity(n * generator.out_dim);
    let chunk = 256;
    for zc in z.chunks(chunk * generator.latent_dim) {
        let rows = zc.len() / generator.latent_dim;
        let y = generator.net.eval(zc.to_vec(), rows, generator.latent_dim)?;
        out.extend(y.iter().enumerate().map(|(i, v)| v * generator.std[i % generator.out_dim] + generator.mean[i % generator.out_dim]));
    }
    Ok(out)
}
