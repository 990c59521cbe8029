use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::gradcheck::finite_diff_check;
use crate::rng::SeededRng;

fn t(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

fn close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
    }
}

#[test]
fn matmul_identity_returns_operand() {
    let mut tape = Tape::new();
    let eye = tape.constant(t(&[3, 3], &[1., 0., 0., 0., 1., 0., 0., 0., 1.]));
    let a = tape.constant(t(&[3, 2], &[1., 2., 3., 4., 5., 6.]));
    let out = tape.matmul(eye, a).unwrap();
    assert_eq!(tape.value(out), tape.value(a));
}

#[test]
fn add_zero_is_identity() {
    let mut tape = Tape::new();
    let x = tape.constant(t(&[2], &[1.5, -2.0]));
    let z = tape.constant(Tensor::zeros(&[2]));
    let out = tape.add(x, z).unwrap();
    assert_eq!(tape.value(out).data(), &[1.5, -2.0]);
}

#[test]
fn matmul_shape_mismatch_names_op() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::zeros(&[2, 3]));
    let b = tape.constant(Tensor::zeros(&[4, 2]));
    let err = tape.matmul(a, b).unwrap_err();
    let msg = alloc::format!("{err}");
    assert!(msg.contains("matmul") && msg.contains("[2, 3]") && msg.contains("[4, 2]"), "{msg}");
}

#[test]
fn softmax_examples() {
    let mut tape = Tape::new();
    let a = tape.constant(t(&[2], &[0.0, 0.0]));
    let sa = tape.softmax(a).unwrap();
    close(tape.value(sa).data(), &[0.5, 0.5], 1e-15);

    let b = tape.constant(t(&[2], &[1000.0, 0.0]));
    let sb = tape.softmax(b).unwrap();
    assert!(tape.value(sb).is_finite());
    close(tape.value(sb).data(), &[1.0, 0.0], 1e-15);

    let c = tape.constant(t(&[2], &[core::f64::consts::LN_2, 0.0]));
    let sc = tape.softmax(c).unwrap();
    close(tape.value(sc).data(), &[2.0 / 3.0, 1.0 / 3.0], 1e-15);

    let e = tape.constant(Tensor::zeros(&[0]));
    assert!(tape.softmax(e).is_err());
}

#[test]
fn layer_norm_examples() {
    let mut tape = Tape::new();
    let one3 = tape.constant(Tensor::full(&[3], 1.0));
    let zero3 = tape.constant(Tensor::zeros(&[3]));
    let x = tape.constant(t(&[3], &[5.0, 5.0, 5.0]));
    let y = tape.layer_norm(x, one3, zero3, 1e-5).unwrap();
    close(tape.value(y).data(), &[0.0; 3], 1e-12);

    let one2 = tape.constant(Tensor::full(&[2], 1.0));
    let zero2 = tape.constant(Tensor::zeros(&[2]));
    let x2 = tape.constant(t(&[2], &[1.0, -1.0]));
    let y2 = tape.layer_norm(x2, one2, zero2, 0.0).unwrap();
    close(tape.value(y2).data(), &[1.0, -1.0], 1e-15);

    let g0 = tape.constant(Tensor::zeros(&[3]));
    let beta = tape.constant(t(&[3], &[0.5, -1.0, 2.0]));
    let x3 = tape.constant(t(&[3], &[1.0, 7.0, -3.0]));
    let y3 = tape.layer_norm(x3, g0, beta, 1e-5).unwrap();
    close(tape.value(y3).data(), &[0.5, -1.0, 2.0], 0.0);
}

#[test]
fn activation_examples() {
    let mut tape = Tape::new();
    let x = tape.constant(t(&[1], &[-3.0]));
    let r = tape.relu(x);
    assert_eq!(tape.value(r).data(), &[0.0]);
    let z = tape.constant(t(&[1], &[0.0]));
    let g = tape.gelu(z);
    let th = tape.tanh(z);
    assert_eq!(tape.value(g).data(), &[0.0]);
    assert_eq!(tape.value(th).data(), &[0.0]);
}

#[test]
fn gelu_tanh_form_tracks_erf_form() {
    let mut x = -6.0;
    while x <= 6.0 {
        let exact = 0.5 * x * (1.0 + libm::erf(x / core::f64::consts::SQRT_2));
        assert!((kernels::gelu(x) - exact).abs() < 1e-3, "x={x}");
        x += 0.01;
    }
}

#[test]
fn cross_entropy_examples() {
    let mut tape = Tape::new();
    let a = tape.constant(t(&[2], &[0.0, 0.0]));
    let la = tape.cross_entropy(a, &[0]).unwrap();
    assert!((tape.value(la).data()[0] - core::f64::consts::LN_2).abs() < 1e-15);

    let b = tape.constant(t(&[2], &[10.0, -10.0]));
    let lb = tape.cross_entropy(b, &[0]).unwrap();
    assert!(tape.value(lb).data()[0] < 1e-8);

    // -log(e^3 / (e + e^2 + e^3)) = log(1 + e^-1 + e^-2)
    let c = tape.constant(t(&[3], &[1.0, 2.0, 3.0]));
    let lc = tape.cross_entropy(c, &[2]).unwrap();
    let expected = libm::log(1.0 + libm::exp(-1.0) + libm::exp(-2.0));
    assert!((tape.value(lc).data()[0] - expected).abs() < 1e-14);
    assert!((expected - 0.40761).abs() < 1e-5);

    assert!(tape.cross_entropy(c, &[3]).is_err());
}

#[test]
fn backward_examples() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::scalar(3.0), true);
    let y = tape.mul(x, x).unwrap();
    tape.backward(y).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[6.0]);

    // loss = sum(W x): dloss/dW[i][j] = x[j] for every row i.
    let mut tape = Tape::new();
    let w = tape.leaf(t(&[2, 3], &[0.1, 0.2, 0.3, -0.4, 0.5, 0.6]), true);
    let xv = tape.constant(t(&[3, 1], &[1.0, -2.0, 4.0]));
    let wx = tape.matmul(w, xv).unwrap();
    let loss = tape.sum(wx);
    tape.backward(loss).unwrap();
    assert_eq!(tape.grad(w).unwrap(), &[1.0, -2.0, 4.0, 1.0, -2.0, 4.0]);
    assert!(tape.grad(xv).is_none());
}

#[test]
fn backward_rejects_non_scalar() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::from_vec(vec![1.0, 2.0]), true);
    assert!(tape.backward(x).is_err());
}

#[test]
fn double_backward_accumulates_twice() {
    let mut tape = Tape::new();
    let w = tape.leaf(t(&[2, 2], &[0.3, -0.7, 1.1, 0.2]), true);
    let x = tape.constant(t(&[1, 2], &[0.5, -1.5]));
    let h = tape.matmul(x, w).unwrap();
    let a = tape.tanh(h);
    let sq = tape.mul(a, a).unwrap();
    let loss = tape.sum(sq);
    tape.backward(loss).unwrap();
    let once = tape.grad(w).unwrap().to_vec();
    tape.backward(loss).unwrap();
    let twice = tape.grad(w).unwrap();
    for (o, t2) in once.iter().zip(twice) {
        assert_eq!(*t2, 2.0 * o);
    }
}

#[test]
fn param_store_round_trip() {
    let mut store = ParamStore::new();
    let id = store.add("w", t(&[2], &[1.0, 2.0]));
    let mut tape = Tape::new();
    let w = tape.param(&store, id);
    let sq = tape.mul(w, w).unwrap();
    let loss = tape.sum(sq);
    tape.backward(loss).unwrap();
    store.accumulate_grads(&tape);
    assert_eq!(store.get(id).grad, vec![2.0, 4.0]);
    store.zero_grad();
    assert_eq!(store.get(id).grad, vec![0.0, 0.0]);
}

#[test]
fn shapes_of_structural_ops() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::new(vec![2, 3, 4], (0..24).map(f64::from).collect()).unwrap());
    let p = tape.permute(x, &[1, 0, 2]).unwrap();
    assert_eq!(tape.value(p).shape(), &[3, 2, 4]);
    assert_eq!(tape.value(p).data()[4], 12.0);
    let s = tape.slice(x, 1, 2, 1).unwrap();
    assert_eq!(tape.value(s).shape(), &[2, 1, 4]);
    assert_eq!(tape.value(s).data(), &[8., 9., 10., 11., 20., 21., 22., 23.]);
    let c = tape.concat(&[s, s], 2).unwrap();
    assert_eq!(tape.value(c).shape(), &[2, 1, 8]);
    assert!(tape.reshape(x, &[5, 5]).is_err());
    assert!(tape.permute(x, &[0, 0, 1]).is_err());
}

/// Random composition touching every primitive; returns a scalar.
fn composite(t: &mut Tape, v: &[Var], labels: &[usize]) -> crate::error::Result<Var> {
    let (x, w, g, b, m) = (v[0], v[1], v[2], v[3], v[4]);
    let h = t.matmul(x, w)?; // [2,3,4]
    let h = t.add_broadcast(h, b)?;
    let h = t.layer_norm(h, g, b, 1e-5)?;
    let hr = t.relu(h);
    let hg = t.gelu(h);
    let hs = t.sigmoid(hg);
    let h = t.add(hr, hs)?;
    let h = t.mul(h, h)?;
    let h = t.mul_broadcast(h, g)?;
    let q = t.tanh(h);
    let k = t.permute(q, &[0, 1, 2])?;
    let att = t.bmm(q, k, true)?; // [2,3,3]
    let att = t.scale(att, 0.5);
    let att = t.softmax(att)?;
    let ctx = t.bmm(att, q, false)?; // [2,3,4]
    let lk = t.leaky_relu(ctx, 0.2);
    let mixed = t.sub(lk, hs)?;
    let last = t.slice(mixed, 1, 2, 1)?;
    let last = t.reshape(last, &[2, 4])?;
    let lt = t.transpose(last)?; // [4,2]
    let lt = t.add_scalar(lt, 0.1);
    let lt2 = t.transpose(lt)?;
    let both = t.concat(&[lt2, last], 1)?; // [2,8]
    let logits = t.matmul(both, m)?; // [2,2]
    let ce = t.cross_entropy(logits, labels)?;
    let sm = t.mean(logits);
    let sm = t.scale(sm, 0.3);
    let total = t.concat(&[ce, sm], 0);
    match total {
        Ok(_) => unreachable!("scalars have no axis"),
        Err(_) => {
            let ce1 = t.reshape(ce, &[1])?;
            let sm1 = t.reshape(sm, &[1])?;
            let cat = t.concat(&[ce1, sm1], 0)?;
            Ok(t.sum(cat))
        }
    }
}

fn random_params(seed: u64) -> Vec<Tensor> {
    let mut rng = SeededRng::new(seed);
    let mut mk = |shape: &[usize], s: f64| {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| s * rng.normal()).collect()).unwrap()
    };
    vec![mk(&[2, 3, 5], 1.0), mk(&[5, 4], 0.5), mk(&[4], 1.0), mk(&[4], 0.3), mk(&[8, 2], 0.5)]
}

proptest::proptest! {
    #![proptest_config(proptest::prelude::ProptestConfig::with_cases(120))]
    #[test]
    fn reverse_mode_matches_central_differences(seed in 0u64..1_000_000) {
        let params = random_params(seed);
        let labels = [(seed % 2) as usize, ((seed / 2) % 2) as usize];
        let r = finite_diff_check(&params, 1e-5, |t, v| composite(t, v, &labels)).unwrap();
        proptest::prop_assert!(r.max_rel_error <= 1e-5, "seed {} err {}", seed, r.max_rel_error);
    }

    #[test]
    fn softmax_sums_to_one_and_is_permutation_equivariant(
        xs in proptest::collection::vec(-50.0f64..50.0, 1..12),
        rot in 0usize..12,
    ) {
        let n = xs.len();
        let rot = rot % n;
        let mut rotated = xs.clone();
        rotated.rotate_left(rot);
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::from_vec(xs));
        let b = tape.constant(Tensor::from_vec(rotated));
        let sa = tape.softmax(a).unwrap();
        let sb = tape.softmax(b).unwrap();
        let pa = tape.value(sa).data().to_vec();
        let pb = tape.value(sb).data().to_vec();
        proptest::prop_assert!((pa.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        proptest::prop_assert!(pa.iter().all(|p| (0.0..=1.0).contains(p)));
        for i in 0..n {
            proptest::prop_assert!((pa[(i + rot) % n] - pb[i]).abs() <= 1e-15);
        }
    }

    #[test]
    fn layer_norm_ignores_constant_shift(
        xs in proptest::collection::vec(-5.0f64..5.0, 2..10),
        shift in -100.0f64..100.0,
    ) {
        let n = xs.len();
        let shifted: Vec<f64> = xs.iter().map(|v| v + shift).collect();
        let mut tape = Tape::new();
        let g = tape.constant(Tensor::full(&[n], 1.0));
        let b = tape.constant(Tensor::zeros(&[n]));
        let a = tape.constant(Tensor::from_vec(xs));
        let s = tape.constant(Tensor::from_vec(shifted));
        let ya = tape.layer_norm(a, g, b, 1e-5).unwrap();
        let ys = tape.layer_norm(s, g, b, 1e-5).unwrap();
        for (p, q) in tape.value(ya).data().iter().zip(tape.value(ys).data()) {
            proptest::prop_assert!((p - q).abs() <= 1e-9);
        }
    }
}
