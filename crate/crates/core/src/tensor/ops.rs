use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::kernels::{self, gelu, gelu_grad, sigmoid, softmax_rows};
use super::{Op, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Operation with a hand-written local gradient, recorded on a [`Tape`].
pub trait CustomOp {
    fn name(&self) -> &'static str;
    /// Returns one optional gradient per input given the output gradient.
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad_out: &[f64]) -> Vec<Option<Vec<f64>>>;
}

fn shape_err(op: &'static str, detail: alloc::string::String) -> Error {
    Error::Shape { op, detail }
}

fn is_suffix(full: &[usize], suffix: &[usize]) -> bool {
    suffix.len() <= full.len() && full[full.len() - suffix.len()..] == *suffix
}

impl Tape {
    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(shape_err(op, format!("{:?} vs {:?}", sa, sb)));
        }
        Ok(())
    }

    fn zip_op(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| f(*x, *y)).collect();
        Tensor { shape: va.shape().to_vec(), data }
    }

    fn map_op(&self, x: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let v = self.value(x);
        Tensor { shape: v.shape().to_vec(), data: v.data().iter().map(|&t| f(t)).collect() }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let t = self.zip_op(a, b, |x, y| x + y);
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let t = self.zip_op(a, b, |x, y| x - y);
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let t = self.zip_op(a, b, |x, y| x * y);
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, Op::Mul(a, b), rg))
    }

    /// `a + b` where `b`'s shape is a trailing suffix of `a`'s (bias rows,
    /// positional tables).
    pub fn add_broadcast(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if !is_suffix(va.shape(), vb.shape()) || vb.is_empty() {
            return Err(shape_err("add_broadcast", format!("{:?} vs {:?}", va.shape(), vb.shape())));
        }
        let n = vb.len();
        let data = va.data().iter().enumerate().map(|(i, x)| x + vb.data()[i % n]).collect();
        let t = Tensor { shape: va.shape().to_vec(), data };
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, Op::AddBroadcast(a, b), rg))
    }

    /// `a * b` with suffix broadcasting of `b`.
    pub fn mul_broadcast(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if !is_suffix(va.shape(), vb.shape()) || vb.is_empty() {
            return Err(shape_err("mul_broadcast", format!("{:?} vs {:?}", va.shape(), vb.shape())));
        }
        let n = vb.len();
        let data = va.data().iter().enumerate().map(|(i, x)| x * vb.data()[i % n]).collect();
        let t = Tensor { shape: va.shape().to_vec(), data };
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, Op::MulBroadcast(a, b), rg))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let t = self.map_op(x, |v| v * c);
        let rg = self.rg(&[x]);
        self.push(t, Op::Scale(x, c), rg)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let t = self.map_op(x, |v| v + c);
        let rg = self.rg(&[x]);
        self.push(t, Op::AddScalar(x), rg)
    }

    /// `a[..., k] @ b[k, n]`, leading axes of `a` are treated as rows.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if vb.shape().len() != 2 || va.shape().is_empty() || va.last_dim() != vb.shape()[0] {
            return Err(shape_err("matmul", format!("{:?} x {:?}", va.shape(), vb.shape())));
        }
        let (k, n) = (vb.shape()[0], vb.shape()[1]);
        let m = va.len() / k.max(1);
        let mut out = vec![0.0; m * n];
        kernels::gemm_nn(va.data(), vb.data(), &mut out, m, k, n);
        let mut shape = va.shape().to_vec();
        *shape.last_mut().unwrap() = n;
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor { shape, data: out }, Op::MatMul(a, b), rg))
    }

    /// Batched matmul over equal leading axes: `a[..., m, k] @ b[..., k, n]`,
    /// or `b[..., n, k]^T` when `transpose_b`.
    pub fn bmm(&mut self, a: Var, b: Var, transpose_b: bool) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let (sa, sb) = (va.shape(), vb.shape());
        let r = sa.len();
        if r < 2 || sb.len() != r || sa[..r - 2] != sb[..r - 2] {
            return Err(shape_err("bmm", format!("{:?} x {:?}", sa, sb)));
        }
        let (m, k) = (sa[r - 2], sa[r - 1]);
        let (kb, n) = if transpose_b { (sb[r - 1], sb[r - 2]) } else { (sb[r - 2], sb[r - 1]) };
        if k != kb {
            return Err(shape_err("bmm", format!("{:?} x {:?} (transpose_b={})", sa, sb, transpose_b)));
        }
        let nb: usize = sa[..r - 2].iter().product();
        let mut out = vec![0.0; nb * m * n];
        for bi in 0..nb {
            let ab = &va.data()[bi * m * k..(bi + 1) * m * k];
            let bb = &vb.data()[bi * k * n..(bi + 1) * k * n];
            let ob = &mut out[bi * m * n..(bi + 1) * m * n];
            if transpose_b {
                kernels::gemm_nt(ab, bb, ob, m, k, n);
            } else {
                kernels::gemm_nn(ab, bb, ob, m, k, n);
            }
        }
        let mut shape = sa[..r - 2].to_vec();
        shape.push(m);
        shape.push(n);
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor { shape, data: out }, Op::Bmm { a, b, transpose_b }, rg))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        if v.shape().len() != 2 {
            return Err(shape_err("transpose", format!("expected rank 2, got {:?}", v.shape())));
        }
        let (r, c) = (v.shape()[0], v.shape()[1]);
        let data = kernels::permute(v.data(), v.shape(), &[1, 0]);
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor { shape: vec![c, r], data }, Op::Transpose(x), rg))
    }

    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let v = self.value(x);
        let rank = v.shape().len();
        let mut seen = vec![false; rank];
        if axes.len() != rank || axes.iter().any(|&a| a >= rank || core::mem::replace(&mut seen[a], true)) {
            return Err(shape_err("permute", format!("axes {:?} for shape {:?}", axes, v.shape())));
        }
        let shape = axes.iter().map(|&a| v.shape()[a]).collect();
        let data = kernels::permute(v.data(), v.shape(), axes);
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor { shape, data }, Op::Permute { x, axes: axes.to_vec() }, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(x);
        if shape.iter().product::<usize>() != v.len() {
            return Err(shape_err("reshape", format!("{:?} -> {:?}", v.shape(), shape)));
        }
        let t = Tensor { shape: shape.to_vec(), data: v.data().to_vec() };
        let rg = self.rg(&[x]);
        Ok(self.push(t, Op::Reshape(x), rg))
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = self.value(*inputs.first().ok_or_else(|| shape_err("concat", "no inputs".into()))?);
        let base = first.shape().to_vec();
        if axis >= base.len() {
            return Err(shape_err("concat", format!("axis {} for shape {:?}", axis, base)));
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.value(v).shape();
            if s.len() != base.len() || s.iter().enumerate().any(|(i, d)| i != axis && *d != base[i]) {
                return Err(shape_err("concat", format!("{:?} vs {:?} on axis {}", base, s, axis)));
            }
            total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in inputs {
                let t = self.value(v);
                let w = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * w..(o + 1) * w]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let rg = self.rg(inputs);
        Ok(self.push(Tensor { shape, data }, Op::Concat { inputs: inputs.to_vec(), axis }, rg))
    }

    /// Contiguous range `[start, start+len)` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let v = self.value(x);
        let s = v.shape();
        if axis >= s.len() || start + len > s[axis] {
            return Err(shape_err("slice", format!("[{}..{}) on axis {} of {:?}", start, start + len, axis, s)));
        }
        let outer: usize = s[..axis].iter().product();
        let inner: usize = s[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * s[axis] * inner + start * inner;
            data.extend_from_slice(&v.data()[base..base + len * inner]);
        }
        let mut shape = s.to_vec();
        shape[axis] = len;
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor { shape, data }, Op::Slice { x, axis, start }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.map_op(x, |v| v.max(0.0));
        let rg = self.rg(&[x]);
        self.push(t, Op::Relu(x), rg)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let t = self.map_op(x, |v| if v > 0.0 { v } else { slope * v });
        let rg = self.rg(&[x]);
        self.push(t, Op::LeakyRelu(x, slope), rg)
    }

    /// GELU with the tanh approximation
    /// `0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))`, within 1e-3 of the
    /// erf form everywhere.
    pub fn gelu(&mut self, x: Var) -> Var {
        let t = self.map_op(x, gelu);
        let rg = self.rg(&[x]);
        self.push(t, Op::Gelu(x), rg)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let t = self.map_op(x, libm::tanh);
        let rg = self.rg(&[x]);
        self.push(t, Op::Tanh(x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let t = self.map_op(x, sigmoid);
        let rg = self.rg(&[x]);
        self.push(t, Op::Sigmoid(x), rg)
    }

    /// Softmax over the trailing axis, max-subtracted.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let n = v.last_dim();
        if n == 0 || v.is_empty() {
            return Err(shape_err("softmax", format!("empty axis in shape {:?}", v.shape())));
        }
        let t = Tensor { shape: v.shape().to_vec(), data: softmax_rows(v.data(), n) };
        let rg = self.rg(&[x]);
        Ok(self.push(t, Op::Softmax(x), rg))
    }

    /// Normalizes the trailing axis to zero mean / unit variance, then
    /// applies `gamma * xhat + beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (vx, vg, vb) = (self.value(x), self.value(gamma), self.value(beta));
        let n = vx.last_dim();
        if n == 0 || vg.shape() != [n] || vb.shape() != [n] {
            return Err(shape_err(
                "layer_norm",
                format!("x {:?}, gamma {:?}, beta {:?}", vx.shape(), vg.shape(), vb.shape()),
            ));
        }
        let rows = vx.len() / n;
        let mut xhat = vec![0.0; vx.len()];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; vx.len()];
        for r in 0..rows {
            let row = &vx.data()[r * n..(r + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let inv = 1.0 / libm::sqrt(var + eps);
            inv_std[r] = inv;
            for j in 0..n {
                let h = (row[j] - mean) * inv;
                xhat[r * n + j] = h;
                out[r * n + j] = vg.data()[j] * h + vb.data()[j];
            }
        }
        let t = Tensor { shape: vx.shape().to_vec(), data: out };
        let rg = self.rg(&[x, gamma, beta]);
        Ok(self.push(t, Op::LayerNorm { x, gamma, beta, xhat, inv_std }, rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s = v.data().iter().sum::<f64>() / v.len().max(1) as f64;
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::Mean(x), rg)
    }

    /// Mean over rows of `-log softmax(logits)[label]`. `logits` is `[c]` or
    /// `[B, c]`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let v = self.value(logits);
        let c = v.last_dim();
        let rows = v.len() / c.max(1);
        if c == 0 || rows != labels.len() {
            return Err(shape_err("cross_entropy", format!("logits {:?} vs {} labels", v.shape(), labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(Error::InvalidArgument(format!("cross_entropy: label {} out of range for {} classes", bad, c)));
        }
        let probs = softmax_rows(v.data(), c);
        let mut loss = 0.0;
        for (r, &l) in labels.iter().enumerate() {
            let row = &v.data()[r * c..(r + 1) * c];
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + libm::log(row.iter().map(|z| libm::exp(z - mx)).sum::<f64>());
            loss += lse - row[l];
        }
        loss /= rows as f64;
        let rg = self.rg(&[logits]);
        Ok(self.push(Tensor::scalar(loss), Op::CrossEntropy { logits, labels: labels.to_vec(), probs }, rg))
    }

    /// Mean over rows of `-sum_k t_k log softmax(logits)_k` for probability
    /// targets of the same shape as `logits`.
    pub fn soft_cross_entropy(&mut self, logits: Var, targets: &[f64]) -> Result<Var> {
        let v = self.value(logits);
        let c = v.last_dim();
        if c == 0 || targets.len() != v.len() {
            return Err(shape_err("soft_cross_entropy", format!("logits {:?} vs {} targets", v.shape(), targets.len())));
        }
        let rows = v.len() / c;
        let probs = softmax_rows(v.data(), c);
        let mut loss = 0.0;
        for r in 0..rows {
            let row = &v.data()[r * c..(r + 1) * c];
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + libm::log(row.iter().map(|z| libm::exp(z - mx)).sum::<f64>());
            for k in 0..c {
                loss += targets[r * c + k] * (lse - row[k]);
            }
        }
        loss /= rows as f64;
        let rg = self.rg(&[logits]);
        Ok(self.push(Tensor::scalar(loss), Op::SoftCrossEntropy { logits, targets: targets.to_vec(), probs }, rg))
    }

    /// Records an operation whose value was computed by the caller.
    pub fn custom(&mut self, inputs: &[Var], value: Tensor, op: Box<dyn CustomOp>) -> Var {
        let rg = self.rg(inputs);
        self.push(value, Op::Custom { inputs: inputs.to_vec(), op }, rg)
    }
}

fn reduce_broadcast(g: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (i, v) in g.iter().enumerate() {
        out[i % n] += v;
    }
    out
}

/// Local gradient contributions of node `i` given its output gradient `g`.
pub(super) fn backward_node(tape: &Tape, i: usize, g: &[f64]) -> Vec<(Var, Vec<f64>)> {
    let val = |v: Var| tape.value(v);
    let out = &tape.nodes[i].value;
    let need = |v: Var| tape.requires_grad(v);
    let mut res = Vec::new();
    match &tape.nodes[i].op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            res.push((*a, g.to_vec()));
            res.push((*b, g.to_vec()));
        }
        Op::Sub(a, b) => {
            res.push((*a, g.to_vec()));
            res.push((*b, g.iter().map(|v| -v).collect()));
        }
        Op::Mul(a, b) => {
            if need(*a) {
                res.push((*a, g.iter().zip(val(*b).data()).map(|(x, y)| x * y).collect()));
            }
            if need(*b) {
                res.push((*b, g.iter().zip(val(*a).data()).map(|(x, y)| x * y).collect()));
            }
        }
        Op::AddBroadcast(a, b) => {
            res.push((*a, g.to_vec()));
            if need(*b) {
                res.push((*b, reduce_broadcast(g, val(*b).len())));
            }
        }
        Op::MulBroadcast(a, b) => {
            let (va, vb) = (val(*a), val(*b));
            let n = vb.len();
            if need(*a) {
                res.push((*a, g.iter().enumerate().map(|(k, x)| x * vb.data()[k % n]).collect()));
            }
            if need(*b) {
                let prod: Vec<f64> = g.iter().zip(va.data()).map(|(x, y)| x * y).collect();
                res.push((*b, reduce_broadcast(&prod, n)));
            }
        }
        Op::Scale(x, c) => res.push((*x, g.iter().map(|v| v * c).collect())),
        Op::AddScalar(x) => res.push((*x, g.to_vec())),
        Op::MatMul(a, b) => {
            let (va, vb) = (val(*a), val(*b));
            let (k, n) = (vb.shape()[0], vb.shape()[1]);
            let m = va.len() / k.max(1);
            if need(*a) {
                let mut ga = vec![0.0; m * k];
                kernels::gemm_nt(g, vb.data(), &mut ga, m, n, k);
                res.push((*a, ga));
            }
            if need(*b) {
                let mut gb = vec![0.0; k * n];
                kernels::gemm_tn(va.data(), g, &mut gb, m, k, n);
                res.push((*b, gb));
            }
        }
        Op::Bmm { a, b, transpose_b } => {
            let (va, vb) = (val(*a), val(*b));
            let r = va.shape().len();
            let (m, k) = (va.shape()[r - 2], va.shape()[r - 1]);
            let n = out.shape()[r - 1];
            let nb = va.len() / (m * k).max(1);
            let mut ga = if need(*a) { Some(vec![0.0; va.len()]) } else { None };
            let mut gb = if need(*b) { Some(vec![0.0; vb.len()]) } else { None };
            for bi in 0..nb {
                let gg = &g[bi * m * n..(bi + 1) * m * n];
                let ab = &va.data()[bi * m * k..(bi + 1) * m * k];
                let bb = &vb.data()[bi * k * n..(bi + 1) * k * n];
                if let Some(ga) = ga.as_mut() {
                    let dst = &mut ga[bi * m * k..(bi + 1) * m * k];
                    if *transpose_b {
                        // b is [n, k]: ga = g @ b
                        kernels::gemm_nn(gg, bb, dst, m, n, k);
                    } else {
                        kernels::gemm_nt(gg, bb, dst, m, n, k);
                    }
                }
                if let Some(gb) = gb.as_mut() {
                    let dst = &mut gb[bi * k * n..(bi + 1) * k * n];
                    if *transpose_b {
                        // gb[n, k] = g^T @ a
                        kernels::gemm_tn(gg, ab, dst, m, n, k);
                    } else {
                        kernels::gemm_tn(ab, gg, dst, m, k, n);
                    }
                }
            }
            if let Some(ga) = ga {
                res.push((*a, ga));
            }
            if let Some(gb) = gb {
                res.push((*b, gb));
            }
        }
        Op::Transpose(x) => {
            res.push((*x, kernels::permute(g, out.shape(), &[1, 0])));
        }
        Op::Permute { x, axes } => {
            let mut inv = vec![0; axes.len()];
            for (k, &a) in axes.iter().enumerate() {
                inv[a] = k;
            }
            res.push((*x, kernels::permute(g, out.shape(), &inv)));
        }
        Op::Reshape(x) => res.push((*x, g.to_vec())),
        Op::Concat { inputs, axis } => {
            let s = out.shape();
            let outer: usize = s[..*axis].iter().product();
            let inner: usize = s[axis + 1..].iter().product();
            let total = s[*axis] * inner;
            let mut offset = 0;
            for &v in inputs {
                let w = val(v).shape()[*axis] * inner;
                if need(v) {
                    let mut gv = Vec::with_capacity(outer * w);
                    for o in 0..outer {
                        gv.extend_from_slice(&g[o * total + offset..o * total + offset + w]);
                    }
                    res.push((v, gv));
                }
                offset += w;
            }
        }
        Op::Slice { x, axis, start } => {
            let vx = val(*x);
            let s = vx.shape();
            let outer: usize = s[..*axis].iter().product();
            let inner: usize = s[axis + 1..].iter().product();
            let len = out.shape()[*axis];
            let mut gx = vec![0.0; vx.len()];
            for o in 0..outer {
                let dst = o * s[*axis] * inner + start * inner;
                let src = o * len * inner;
                gx[dst..dst + len * inner].copy_from_slice(&g[src..src + len * inner]);
            }
            res.push((*x, gx));
        }
        Op::Relu(x) => {
            res.push((*x, g.iter().zip(val(*x).data()).map(|(gv, v)| if *v > 0.0 { *gv } else { 0.0 }).collect()));
        }
        Op::LeakyRelu(x, slope) => {
            res.push((*x, g.iter().zip(val(*x).data()).map(|(gv, v)| if *v > 0.0 { *gv } else { slope * gv }).collect()));
        }
        Op::Gelu(x) => {
            res.push((*x, g.iter().zip(val(*x).data()).map(|(gv, v)| gv * gelu_grad(*v)).collect()));
        }
        Op::Tanh(x) => {
            res.push((*x, g.iter().zip(out.data()).map(|(gv, y)| gv * (1.0 - y * y)).collect()));
        }
        Op::Sigmoid(x) => {
            res.push((*x, g.iter().zip(out.data()).map(|(gv, y)| gv * y * (1.0 - y)).collect()));
        }
        Op::Softmax(x) => {
            let n = out.last_dim();
            let mut gx = vec![0.0; g.len()];
            for ((grow, yrow), orow) in g.chunks(n).zip(out.data().chunks(n)).zip(gx.chunks_mut(n)) {
                let dot: f64 = grow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                for ((o, gv), y) in orow.iter_mut().zip(grow).zip(yrow) {
                    *o = y * (gv - dot);
                }
            }
            res.push((*x, gx));
        }
        Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
            let n = out.last_dim();
            let gam = val(*gamma).data();
            if need(*gamma) {
                let mut gg = vec![0.0; n];
                for (k, (gv, h)) in g.iter().zip(xhat).enumerate() {
                    gg[k % n] += gv * h;
                }
                res.push((*gamma, gg));
            }
            if need(*beta) {
                res.push((*beta, reduce_broadcast(g, n)));
            }
            if need(*x) {
                let mut gx = vec![0.0; g.len()];
                let nf = n as f64;
                for (r, inv) in inv_std.iter().enumerate() {
                    let base = r * n;
                    let mut s1 = 0.0;
                    let mut s2 = 0.0;
                    for j in 0..n {
                        let gh = g[base + j] * gam[j];
                        s1 += gh;
                        s2 += gh * xhat[base + j];
                    }
                    for j in 0..n {
                        let gh = g[base + j] * gam[j];
                        gx[base + j] = inv / nf * (nf * gh - s1 - xhat[base + j] * s2);
                    }
                }
                res.push((*x, gx));
            }
        }
        Op::Sum(x) => res.push((*x, vec![g[0]; val(*x).len()])),
        Op::Mean(x) => {
            let n = val(*x).len();
            res.push((*x, vec![g[0] / n.max(1) as f64; n]));
        }
        Op::CrossEntropy { logits, labels, probs } => {
            let c = val(*logits).last_dim();
            let scale = g[0] / labels.len() as f64;
            let mut gl: Vec<f64> = probs.iter().map(|p| p * scale).collect();
            for (r, &l) in labels.iter().enumerate() {
                gl[r * c + l] -= scale;
            }
            res.push((*logits, gl));
        }
        Op::SoftCrossEntropy { logits, targets, probs } => {
            let c = val(*logits).last_dim();
            let rows = probs.len() / c;
            let scale = g[0] / rows as f64;
            let mut gl = vec![0.0; probs.len()];
            for r in 0..rows {
                let tsum: f64 = targets[r * c..(r + 1) * c].iter().sum();
                for k in 0..c {
                    gl[r * c + k] = scale * (tsum * probs[r * c + k] - targets[r * c + k]);
                }
            }
            res.push((*logits, gl));
        }
        Op::Custom { inputs, op } => {
            let ins: Vec<&Tensor> = inputs.iter().map(|&v| val(v)).collect();
            for (v, gv) in inputs.iter().zip(op.backward(&ins, out, g)) {
                if let Some(gv) = gv {
                    res.push((*v, gv));
                }
            }
        }
    }
    res
}
