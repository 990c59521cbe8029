//! QSTAformer and its classical baselines, built on the tape.
//!
//! Inputs are `[B, L, F]` in raw per-unit values; every model owns a
//! per-feature [`Normalizer`] applied as the first operation so gradients
//! with respect to the raw signal are available to attacks.

mod quantum_op;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::{CircuitParams, CircuitSpec, QuantumGradient};
use crate::rng::SeededRng;
use crate::tensor::{ParamId, ParamStore, Tape, Tensor, Var};

pub use quantum_op::circuit_layer;

pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Qstaformer,
    Transformer,
    Lstm,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Qstaformer => "qstaformer",
            Variant::Transformer => "transformer",
            Variant::Lstm => "lstm",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "qstaformer" => Ok(Variant::Qstaformer),
            "transformer" => Ok(Variant::Transformer),
            "lstm" => Ok(Variant::Lstm),
            _ => Err(Error::InvalidArgument(format!("unknown model variant '{}'", s))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Gelu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    pub seq_len: usize,
    pub feature_dim: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    /// Encoder depth; for QSTAformer the last layer is the quantum one.
    pub n_layers: usize,
    pub n_classes: usize,
    pub circuit: CircuitSpec,
    #[serde(default)]
    pub quantum_gradient: QuantumGradient,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Qstaformer,
            seq_len: 10,
            feature_dim: 9,
            d_model: 32,
            n_heads: 4,
            d_ff: 64,
            n_layers: 2,
            n_classes: 2,
            circuit: CircuitSpec::new(4, 4),
            quantum_gradient: QuantumGradient::Adjoint,
        }
    }
}

impl ModelConfig {
    pub fn with_variant(&self, variant: Variant) -> Self {
        Self { variant, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.seq_len == 0 || self.feature_dim == 0 {
            return bad(format!("seq_len and feature_dim must be positive ({}, {})", self.seq_len, self.feature_dim));
        }
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return bad(format!("d_model {} is not divisible by n_heads {}", self.d_model, self.n_heads));
        }
        if self.n_layers < 1 {
            return bad("n_layers must be at least 1".into());
        }
        if self.n_classes < 2 {
            return bad(format!("n_classes must be at least 2, got {}", self.n_classes));
        }
        if self.d_ff == 0 {
            return bad("d_ff must be positive".into());
        }
        if self.variant == Variant::Qstaformer {
            self.circuit.validate()?;
        }
        Ok(())
    }
}

/// Per-feature affine standardization `(x - mean) / std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn identity(f: usize) -> Self {
        Self { mean: vec![0.0; f], std: vec![1.0; f] }
    }

    /// Statistics over every time step of every sample in `xs` (`[N, L, F]`
    /// flattened). Standard deviations below 1e-6 are floored.
    pub fn fit(xs: &[f64], f: usize) -> Self {
        let rows = xs.len() / f.max(1);
        if rows == 0 {
            return Self::identity(f);
        }
        let mut mean = vec![0.0; f];
        for r in xs.chunks(f) {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= rows as f64);
        let mut var = vec![0.0; f];
        for r in xs.chunks(f) {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.iter().map(|s| libm::sqrt(s / rows as f64).max(1e-6)).collect();
        Self { mean, std }
    }

    pub fn apply(&self, xs: &[f64]) -> Vec<f64> {
        let f = self.mean.len();
        xs.iter().enumerate().map(|(i, v)| (v - self.mean[i % f]) / self.std[i % f]).collect()
    }
}

/// Sinusoidal table `[L, d]`: even columns `sin(pos / 10000^(2i/d))`, odd
/// columns the matching cosine.
pub fn positional_encoding(l: usize, d: usize) -> Tensor {
    let mut data = vec![0.0; l * d];
    for pos in 0..l {
        for c in 0..d {
            let i = (c / 2) as f64;
            let angle = pos as f64 / libm::pow(10000.0, 2.0 * i / d as f64);
            data[pos * d + c] = if c % 2 == 0 { libm::sin(angle) } else { libm::cos(angle) };
        }
    }
    Tensor::new(vec![l, d], data).expect("shape matches data")
}

/// Per-step angle offset `pi * i / (L - 1) - pi / 2` (0 when `L = 1`).
pub fn time_signal(l: usize) -> Vec<f64> {
    if l <= 1 {
        return vec![0.0; l];
    }
    (0..l).map(|i| core::f64::consts::PI * i as f64 / (l - 1) as f64 - core::f64::consts::FRAC_PI_2).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearIds {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormIds {
    pub gamma: ParamId,
    pub beta: ParamId,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttentionIds {
    pub q: LinearIds,
    pub k: LinearIds,
    pub v: LinearIds,
    pub o: LinearIds,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantumIds {
    /// `[d, n]` projection to circuit angles.
    pub wq: ParamId,
    /// `[n, d]` projection of `<Z>` back to the model width.
    pub wo: ParamId,
    pub theta: ParamId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub attn: AttentionIds,
    pub ln1: NormIds,
    pub ff1: LinearIds,
    pub ff2: LinearIds,
    pub ln2: NormIds,
    pub activation: Activation,
    pub quantum: Option<QuantumIds>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmIds {
    pub wx: ParamId,
    pub wh: ParamId,
    pub b: ParamId,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Body {
    Encoder { embed: LinearIds, embed_ln: NormIds, layers: Vec<EncoderLayer> },
    Lstm(LstmIds),
}

/// Whether parameters enter the tape as trainable leaves or as constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamMode {
    Train,
    Frozen,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub normalizer: Normalizer,
    pub body: Body,
    pub head: LinearIds,
}

struct Init<'a> {
    store: &'a mut ParamStore,
    rng: &'a mut SeededRng,
}

impl Init<'_> {
    fn xavier(&mut self, name: String, fan_in: usize, fan_out: usize) -> ParamId {
        let a = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
        let data = (0..fan_in * fan_out).map(|_| self.rng.uniform_range(-a, a)).collect();
        self.store.add(name, Tensor::new(vec![fan_in, fan_out], data).expect("shape"))
    }

    fn zeros(&mut self, name: String, n: usize) -> ParamId {
        self.store.add(name, Tensor::zeros(&[n]))
    }

    fn linear(&mut self, name: &str, i: usize, o: usize, bias: bool) -> LinearIds {
        let w = self.xavier(format!("{name}.w"), i, o);
        let b = bias.then(|| self.zeros(format!("{name}.b"), o));
        LinearIds { w, b }
    }

    fn norm(&mut self, name: &str, d: usize) -> NormIds {
        let gamma = self.store.add(format!("{name}.gamma"), Tensor::full(&[d], 1.0));
        let beta = self.zeros(format!("{name}.beta"), d);
        NormIds { gamma, beta }
    }
}

impl Model {
    /// Fresh weights: Xavier-uniform matrices, zero biases, unit LayerNorm
    /// gains, circuit angles uniform in `[-0.1, 0.1]`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = SeededRng::for_stage(seed, "model-init");
        let mut store = ParamStore::new();
        let mut init = Init { store: &mut store, rng: &mut rng };
        let (d, f) = (config.d_model, config.feature_dim);
        let body = match config.variant {
            Variant::Lstm => {
                let wx = init.xavier("lstm.wx".into(), f, 4 * d);
                let wh = init.xavier("lstm.wh".into(), d, 4 * d);
                let b = init.zeros("lstm.b".into(), 4 * d);
                Body::Lstm(LstmIds { wx, wh, b })
            }
            Variant::Qstaformer | Variant::Transformer => {
                let embed = init.linear("embed", f, d, true);
                let embed_ln = init.norm("embed.ln", d);
                let mut layers = Vec::with_capacity(config.n_layers);
                for li in 0..config.n_layers {
                    let p = format!("layers.{li}");
                    let attn = AttentionIds {
                        q: init.linear(&format!("{p}.attn.q"), d, d, true),
                        k: init.linear(&format!("{p}.attn.k"), d, d, true),
                        v: init.linear(&format!("{p}.attn.v"), d, d, true),
                        o: init.linear(&format!("{p}.attn.o"), d, d, true),
                    };
                    let ln1 = init.norm(&format!("{p}.ln1"), d);
                    let is_quantum = config.variant == Variant::Qstaformer && li + 1 == config.n_layers;
                    let quantum = if is_quantum {
                        let n = config.circuit.n_qubits;
                        let wq = init.xavier(format!("{p}.quantum.wq"), d, n);
                        let wo = init.xavier(format!("{p}.quantum.wo"), n, d);
                        let th = CircuitParams::uniform(&config.circuit, 0.1, init.rng);
                        let theta = init.store.add(format!("{p}.quantum.theta"), Tensor::from_vec(th.theta));
                        Some(QuantumIds { wq, wo, theta })
                    } else {
                        None
                    };
                    let ff1 = init.linear(&format!("{p}.ff1"), d, config.d_ff, true);
                    let ff2 = init.linear(&format!("{p}.ff2"), config.d_ff, d, true);
                    let ln2 = init.norm(&format!("{p}.ln2"), d);
                    let activation = if is_quantum { Activation::Gelu } else { Activation::Relu };
                    layers.push(EncoderLayer { attn, ln1, ff1, ff2, ln2, activation, quantum });
                }
                Body::Encoder { embed, embed_ln, layers }
            }
        };
        let head = init.linear("head", d, config.n_classes, true);
        let normalizer = Normalizer::identity(f);
        Ok(Self { config, params: store, normalizer, body, head })
    }

    /// Rebuilds a model from saved parameter arrays. Every parameter of the
    /// layout implied by `config` must be present with a matching shape.
    pub fn from_weights(config: ModelConfig, normalizer: Normalizer, weights: Vec<(String, Tensor)>) -> Result<Self> {
        let mut m = Self::new(config, 0)?;
        if normalizer.mean.len() != m.config.feature_dim || normalizer.std.len() != m.config.feature_dim {
            return Err(Error::InvalidArgument("normalizer width does not match feature_dim".into()));
        }
        m.normalizer = normalizer;
        if weights.len() != m.params.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameter arrays, got {}",
                m.params.len(),
                weights.len()
            )));
        }
        for (name, t) in weights {
            let id = m.params.find(&name).ok_or_else(|| Error::InvalidArgument(format!("unknown parameter '{name}'")))?;
            let p = m.params.get_mut(id);
            if p.value.shape() != t.shape() {
                return Err(Error::Shape {
                    op: "from_weights",
                    detail: format!("'{}' expects {:?}, got {:?}", name, p.value.shape(), t.shape()),
                });
            }
            p.value = t;
        }
        Ok(m)
    }

    fn p(&self, tape: &mut Tape, id: ParamId, mode: ParamMode) -> Var {
        match mode {
            ParamMode::Train => tape.param(&self.params, id),
            ParamMode::Frozen => tape.constant(self.params.get(id).value.clone()),
        }
    }

    fn linear(&self, tape: &mut Tape, x: Var, ids: LinearIds, mode: ParamMode) -> Result<Var> {
        let w = self.p(tape, ids.w, mode);
        let y = tape.matmul(x, w)?;
        match ids.b {
            Some(b) => {
                let b = self.p(tape, b, mode);
                tape.add_broadcast(y, b)
            }
            None => Ok(y),
        }
    }

    fn norm(&self, tape: &mut Tape, x: Var, ids: NormIds, mode: ParamMode) -> Result<Var> {
        let g = self.p(tape, ids.gamma, mode);
        let b = self.p(tape, ids.beta, mode);
        tape.layer_norm(x, g, b, LN_EPS)
    }

    /// Scaled dot-product self-attention over `h [B, L, d]`. Returns the
    /// output projection and the attention weights `[B*H, L, L]`.
    pub fn attention(&self, tape: &mut Tape, h: Var, ids: &AttentionIds, mode: ParamMode) -> Result<(Var, Var)> {
        let s = tape.value(h).shape().to_vec();
        let (b, l, d) = (s[0], s[1], s[2]);
        let nh = self.config.n_heads;
        let dh = d / nh;
        let split = |tape: &mut Tape, x: Var| -> Result<Var> {
            let x = tape.reshape(x, &[b, l, nh, dh])?;
            let x = tape.permute(x, &[0, 2, 1, 3])?;
            tape.reshape(x, &[b * nh, l, dh])
        };
        let q = self.linear(tape, h, ids.q, mode)?;
        let k = self.linear(tape, h, ids.k, mode)?;
        let v = self.linear(tape, h, ids.v, mode)?;
        let (q, k, v) = (split(tape, q)?, split(tape, k)?, split(tape, v)?);
        let scores = tape.bmm(q, k, true)?;
        let scores = tape.scale(scores, 1.0 / libm::sqrt(dh as f64));
        let weights = tape.softmax(scores)?;
        let ctx = tape.bmm(weights, v, false)?;
        let ctx = tape.reshape(ctx, &[b, nh, l, dh])?;
        let ctx = tape.permute(ctx, &[0, 2, 1, 3])?;
        let ctx = tape.reshape(ctx, &[b, l, d])?;
        Ok((self.linear(tape, ctx, ids.o, mode)?, weights))
    }

    fn ffn(&self, tape: &mut Tape, z: Var, layer: &EncoderLayer, mode: ParamMode) -> Result<Var> {
        let a = self.linear(tape, z, layer.ff1, mode)?;
        let a = match layer.activation {
            Activation::Relu => tape.relu(a),
            Activation::Gelu => tape.gelu(a),
        };
        self.linear(tape, a, layer.ff2, mode)
    }

    /// One encoder block. Classical: `LN(h + MHSA(h))` then
    /// `LN(z + FFN(z))`. Quantum: the attention sublayer gives `h'`, each
    /// position is mapped to angles `tanh(h' Wq) + t_i`, measured, projected
    /// back with `Wo` and added to `h'` before the GELU feed-forward sublayer.
    pub fn encoder_layer(&self, tape: &mut Tape, h: Var, layer: &EncoderLayer, mode: ParamMode) -> Result<Var> {
        let (a, _) = self.attention(tape, h, &layer.attn, mode)?;
        let r = tape.add(h, a)?;
        let hp = self.norm(tape, r, layer.ln1, mode)?;
        let z = match &layer.quantum {
            None => hp,
            Some(q) => {
                let qv = self.quantum_readout(tape, hp, q, mode)?;
                let wo = self.p(tape, q.wo, mode);
                let proj = tape.matmul(qv, wo)?;
                tape.add(hp, proj)?
            }
        };
        let f = self.ffn(tape, z, layer, mode)?;
        let r = tape.add(z, f)?;
        self.norm(tape, r, layer.ln2, mode)
    }

    /// `<Z>` per position, `[B, L, n]`.
    pub fn quantum_readout(&self, tape: &mut Tape, hp: Var, q: &QuantumIds, mode: ParamMode) -> Result<Var> {
        let l = tape.value(hp).shape()[1];
        let n = self.config.circuit.n_qubits;
        let wq = self.p(tape, q.wq, mode);
        let proj = tape.matmul(hp, wq)?;
        let act = tape.tanh(proj);
        let t: Vec<f64> = time_signal(l).into_iter().flat_map(|ti| core::iter::repeat_n(ti, n)).collect();
        let t = tape.constant(Tensor::new(vec![l, n], t)?);
        let angles = tape.add_broadcast(act, t)?;
        let theta = self.p(tape, q.theta, mode);
        circuit_layer(tape, &self.config.circuit, self.config.quantum_gradient, angles, theta)
    }

    fn normalize(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let neg_mean = tape.constant(Tensor::from_vec(self.normalizer.mean.iter().map(|m| -m).collect()));
        let inv_std = tape.constant(Tensor::from_vec(self.normalizer.std.iter().map(|s| 1.0 / s).collect()));
        let c = tape.add_broadcast(x, neg_mean)?;
        tape.mul_broadcast(c, inv_std)
    }

    /// `LN(x We + be) + PE`, `[B, L, d]`.
    pub fn embed(&self, tape: &mut Tape, x: Var, mode: ParamMode) -> Result<Var> {
        let Body::Encoder { embed, embed_ln, .. } = &self.body else {
            return Err(Error::InvalidArgument("the LSTM baseline has no embedding".into()));
        };
        let l = tape.value(x).shape()[1];
        let e = self.linear(tape, x, *embed, mode)?;
        let e = self.norm(tape, e, *embed_ln, mode)?;
        let pe = tape.constant(positional_encoding(l, self.config.d_model));
        tape.add_broadcast(e, pe)
    }

    fn lstm(&self, tape: &mut Tape, x: Var, ids: &LstmIds, mode: ParamMode) -> Result<Var> {
        let s = tape.value(x).shape().to_vec();
        let (b, l) = (s[0], s[1]);
        let d = self.config.d_model;
        let wx = self.p(tape, ids.wx, mode);
        let wh = self.p(tape, ids.wh, mode);
        let bias = self.p(tape, ids.b, mode);
        let xg = tape.matmul(x, wx)?;
        let xg = tape.add_broadcast(xg, bias)?;
        let mut h = tape.constant(Tensor::zeros(&[b, d]));
        let mut c = tape.constant(Tensor::zeros(&[b, d]));
        for t in 0..l {
            let xt = tape.slice(xg, 1, t, 1)?;
            let xt = tape.reshape(xt, &[b, 4 * d])?;
            let hg = tape.matmul(h, wh)?;
            let g = tape.add(xt, hg)?;
            let i = tape.slice(g, 1, 0, d)?;
            let fg = tape.slice(g, 1, d, d)?;
            let gg = tape.slice(g, 1, 2 * d, d)?;
            let o = tape.slice(g, 1, 3 * d, d)?;
            let (i, fg, gg, o) = (tape.sigmoid(i), tape.sigmoid(fg), tape.tanh(gg), tape.sigmoid(o));
            let keep = tape.mul(fg, c)?;
            let write = tape.mul(i, gg)?;
            c = tape.add(keep, write)?;
            let tc = tape.tanh(c);
            h = tape.mul(o, tc)?;
        }
        Ok(h)
    }

    /// Logits `[B, c]` for raw inputs `x [B, L, F]` already on the tape.
    pub fn forward(&self, tape: &mut Tape, x: Var, mode: ParamMode) -> Result<Var> {
        let s = tape.value(x).shape().to_vec();
        if s.len() != 3 || s[2] != self.config.feature_dim || s[1] == 0 {
            return Err(Error::Shape {
                op: "forward",
                detail: format!("expected [B, L, {}], got {:?}", self.config.feature_dim, s),
            });
        }
        let (b, l) = (s[0], s[1]);
        let x = self.normalize(tape, x)?;
        let last = match &self.body {
            Body::Lstm(ids) => self.lstm(tape, x, ids, mode)?,
            Body::Encoder { layers, .. } => {
                let mut h = self.embed(tape, x, mode)?;
                for layer in layers {
                    h = self.encoder_layer(tape, h, layer, mode)?;
                }
                let hl = tape.slice(h, 1, l - 1, 1)?;
                tape.reshape(hl, &[b, self.config.d_model])?
            }
        };
        self.linear(tape, last, self.head, mode)
    }

    /// Logits for a flat `[B, L, F]` buffer with frozen weights.
    pub fn predict_logits(&self, xs: &[f64], batch: usize) -> Result<Vec<f64>> {
        let (l, f) = self.input_dims(xs, batch)?;
        let mut out = Vec::with_capacity(batch * self.config.n_classes);
        let chunk = 32;
        let per = l * f;
        for start in (0..batch).step_by(chunk) {
            let nb = chunk.min(batch - start);
            let mut tape = Tape::new();
            let x = tape.constant(Tensor::new(vec![nb, l, f], xs[start * per..(start + nb) * per].to_vec())?);
            let y = self.forward(&mut tape, x, ParamMode::Frozen)?;
            out.extend_from_slice(tape.value(y).data());
        }
        Ok(out)
    }

    /// Softmax probabilities `[B, c]`.
    pub fn predict_proba(&self, xs: &[f64], batch: usize) -> Result<Vec<f64>> {
        let logits = self.predict_logits(xs, batch)?;
        Ok(softmax_rows(&logits, self.config.n_classes))
    }

    fn input_dims(&self, xs: &[f64], batch: usize) -> Result<(usize, usize)> {
        let f = self.config.feature_dim;
        if batch == 0 || xs.len() % (batch * f) != 0 {
            return Err(Error::Shape {
                op: "predict",
                detail: format!("{} values for batch {} and feature_dim {}", xs.len(), batch, f),
            });
        }
        Ok((xs.len() / (batch * f), f))
    }
}

/// Row-wise softmax over a flat `[rows, c]` buffer.
pub fn softmax_rows(logits: &[f64], c: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks(c) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = row.iter().map(|v| libm::exp(v - m)).collect();
        let s: f64 = e.iter().sum();
        out.extend(e.iter().map(|v| v / s));
    }
    out
}

/// Row-wise argmax over a flat `[rows, c]` buffer; ties go to the lower index.
pub fn argmax_rows(v: &[f64], c: usize) -> Vec<usize> {
    v.chunks(c)
        .map(|r| r.iter().enumerate().fold(0, |best, (i, x)| if *x > r[best] { i } else { best }))
        .collect()
}

/// What attacks need from a model: logits and input gradients on raw inputs.
pub trait Classifier {
    fn n_classes(&self) -> usize;

    /// `(L, F)` of one sample.
    fn sample_dims(&self) -> (usize, usize);

    fn logits(&self, xs: &[f64], batch: usize) -> Result<Vec<f64>>;

    /// Logits together with `d/dx sum(logits * U)`, where `U = upstream(logits)`
    /// is treated as a constant.
    fn logits_and_input_grad(
        &self,
        xs: &[f64],
        batch: usize,
        upstream: &mut dyn FnMut(&[f64]) -> Vec<f64>,
    ) -> Result<(Vec<f64>, Vec<f64>)>;

    fn predict(&self, xs: &[f64], batch: usize) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.logits(xs, batch)?, self.n_classes()))
    }
}

impl Classifier for Model {
    fn n_classes(&self) -> usize {
        self.config.n_classes
    }

    fn sample_dims(&self) -> (usize, usize) {
        (self.config.seq_len, self.config.feature_dim)
    }

    fn logits(&self, xs: &[f64], batch: usize) -> Result<Vec<f64>> {
        self.predict_logits(xs, batch)
    }

    fn logits_and_input_grad(
        &self,
        xs: &[f64],
        batch: usize,
        upstream: &mut dyn FnMut(&[f64]) -> Vec<f64>,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let (l, f) = self.input_dims(xs, batch)?;
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![batch, l, f], xs.to_vec())?, true);
        let y = self.forward(&mut tape, x, ParamMode::Frozen)?;
        let logits = tape.value(y).data().to_vec();
        let u = upstream(&logits);
        if u.len() != logits.len() {
            return Err(Error::Shape { op: "input_grad", detail: format!("upstream {} vs logits {}", u.len(), logits.len()) });
        }
        let shape = tape.value(y).shape().to_vec();
        let u = tape.constant(Tensor::new(shape, u)?);
        let prod = tape.mul(y, u)?;
        let s = tape.sum(prod);
        tape.backward(s)?;
        let g = tape.grad(x).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; xs.len()]);
        Ok((logits, g))
    }
}

#[cfg(test)]
mod tests;
