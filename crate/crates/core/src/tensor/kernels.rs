//! Raw loops over row-major slices.

/// `acc += x`
pub(crate) fn axpy(acc: &mut [f64], x: &[f64]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += *b;
    }
}

/// `c[m,n] += a[m,k] * b[k,n]`. Each output row accumulates over `p` in
/// order, so a row's result does not depend on how many rows are present.
pub(crate) fn gemm_nn(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    let full = m / 4 * 4;
    for (blk, cblk) in c[..full * n].chunks_exact_mut(4 * n).enumerate() {
        let i = blk * 4;
        let (c0, rest) = cblk.split_at_mut(n);
        let (c1, rest) = rest.split_at_mut(n);
        let (c2, c3) = rest.split_at_mut(n);
        for p in 0..k {
            let (a0, a1, a2, a3) = (a[i * k + p], a[(i + 1) * k + p], a[(i + 2) * k + p], a[(i + 3) * k + p]);
            let brow = &b[p * n..(p + 1) * n];
            let rows = c0.iter_mut().zip(c1.iter_mut()).zip(c2.iter_mut()).zip(c3.iter_mut());
            for ((((x0, x1), x2), x3), &bv) in rows.zip(brow) {
                *x0 += a0 * bv;
                *x1 += a1 * bv;
                *x2 += a2 * bv;
                *x3 += a3 * bv;
            }
        }
    }
    for i in full..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            let brow = &b[p * n..(p + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

/// `c[m,n] += a[m,k] * b[n,k]^T`
pub(crate) fn gemm_nt(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    let bt = permute(&b[..n * k], &[n, k], &[1, 0]);
    gemm_nn(a, &bt, c, m, k, n);
}

/// `c[k,n] += a[m,k]^T * b[m,n]`
pub(crate) fn gemm_tn(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    let full = m / 4 * 4;
    for i in (0..full).step_by(4) {
        let (b0, b1, b2, b3) =
            (&b[i * n..(i + 1) * n], &b[(i + 1) * n..(i + 2) * n], &b[(i + 2) * n..(i + 3) * n], &b[(i + 3) * n..(i + 4) * n]);
        for p in 0..k {
            let (a0, a1, a2, a3) = (a[i * k + p], a[(i + 1) * k + p], a[(i + 2) * k + p], a[(i + 3) * k + p]);
            let crow = &mut c[p * n..(p + 1) * n];
            for j in 0..n {
                crow[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
            }
        }
    }
    for i in full..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            let crow = &mut c[p * n..(p + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

pub(crate) fn strides(shape: &[usize]) -> alloc::vec::Vec<usize> {
    let mut s = alloc::vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Gathers `x` (with `shape`) into the axis order `axes`.
pub(crate) fn permute(x: &[f64], shape: &[usize], axes: &[usize]) -> alloc::vec::Vec<f64> {
    let rank = axes.len();
    let mut out = alloc::vec::Vec::with_capacity(x.len());
    if rank == 0 || x.is_empty() {
        out.extend_from_slice(x);
        return out;
    }
    let in_strides = strides(shape);
    let out_shape: alloc::vec::Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let src: alloc::vec::Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let (inner_len, inner_stride) = (out_shape[rank - 1], src[rank - 1]);
    let outer = x.len() / inner_len;
    let mut idx = alloc::vec![0usize; rank];
    let mut off = 0usize;
    for _ in 0..outer {
        if inner_stride == 1 {
            out.extend_from_slice(&x[off..off + inner_len]);
        } else {
            out.extend((0..inner_len).map(|t| x[off + t * inner_stride]));
        }
        for d in (0..rank - 1).rev() {
            idx[d] += 1;
            off += src[d];
            if idx[d] < out_shape[d] {
                break;
            }
            off -= src[d] * out_shape[d];
            idx[d] = 0;
        }
    }
    out
}

pub(crate) const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
pub(crate) const GELU_A: f64 = 0.044_715;

/// GELU, tanh approximation.
pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::tanh(GELU_C * (x + GELU_A * x * x * x)))
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    let t = libm::tanh(GELU_C * (x + GELU_A * x * x * x));
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Row-wise stabilized softmax over trailing axis of width `n`.
pub(crate) fn softmax_rows(x: &[f64], n: usize) -> alloc::vec::Vec<f64> {
    let mut out = alloc::vec![0.0; x.len()];
    for (row, orow) in x.chunks(n).zip(out.chunks_mut(n)) {
        let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for (o, &v) in orow.iter_mut().zip(row) {
            *o = libm::exp(v - mx);
            s += *o;
        }
        for o in orow.iter_mut() {
            *o /= s;
        }
    }
    out
}
