use alloc::vec;
use alloc::vec::Vec;

use proptest::prelude::*;

use super::*;
use crate::gradcheck::rel_error;
use crate::quantum::CircuitSpec;

fn tiny(variant: Variant) -> ModelConfig {
    ModelConfig {
        variant,
        seq_len: 3,
        feature_dim: 3,
        d_model: 8,
        n_heads: 2,
        d_ff: 8,
        n_layers: 2,
        n_classes: 2,
        circuit: CircuitSpec::new(2, 2),
        quantum_gradient: QuantumGradient::Adjoint,
    }
}

fn random_inputs(n: usize, l: usize, f: usize, seed: u64) -> Vec<f64> {
    let mut rng = SeededRng::new(seed);
    (0..n * l * f).map(|_| rng.normal()).collect()
}

fn set(model: &mut Model, name: &str, v: f64) {
    let id = model.params.find(name).unwrap_or_else(|| panic!("no param {name}"));
    model.params.get_mut(id).value.data_mut().iter_mut().for_each(|x| *x = v);
}

fn set_values(model: &mut Model, name: &str, vals: &[f64]) {
    let id = model.params.find(name).unwrap();
    model.params.get_mut(id).value.data_mut().copy_from_slice(vals);
}

#[test]
fn positional_encoding_row_zero_alternates() {
    let pe = positional_encoding(4, 6);
    assert_eq!(&pe.data()[..6], &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    assert!(pe.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    assert_eq!(pe.shape(), &[4, 6]);
    assert_eq!(positional_encoding(4, 6), pe);
}

#[test]
fn time_signal_spans_half_turns() {
    let t = time_signal(10);
    assert!((t[0] + core::f64::consts::FRAC_PI_2).abs() < 1e-15);
    assert!((t[9] - core::f64::consts::FRAC_PI_2).abs() < 1e-15);
    assert_eq!(time_signal(1), vec![0.0]);
}

#[test]
fn embed_of_zero_is_positional_table() {
    let mut m = Model::new(tiny(Variant::Transformer), 1).unwrap();
    set(&mut m, "embed.w", 0.0);
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::zeros(&[2, 3, 3]));
    let h = m.embed(&mut tape, x, ParamMode::Frozen).unwrap();
    let pe = positional_encoding(3, 8);
    assert_eq!(tape.value(h).shape(), &[2, 3, 8]);
    for (i, v) in tape.value(h).data().iter().enumerate() {
        assert_eq!(*v, pe.data()[i % 24]);
    }
}

#[test]
fn attention_rows_are_stochastic_and_singleton_is_one() {
    let m = Model::new(tiny(Variant::Transformer), 2).unwrap();
    let Body::Encoder { layers, .. } = &m.body else { unreachable!() };
    let mut tape = Tape::new();
    let h = tape.constant(Tensor::new(vec![2, 3, 8], random_inputs(2, 3, 8, 3)).unwrap());
    let (_, w) = m.attention(&mut tape, h, &layers[0].attn, ParamMode::Frozen).unwrap();
    for row in tape.value(w).data().chunks(3) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
    }
    let h1 = tape.constant(Tensor::new(vec![1, 1, 8], random_inputs(1, 1, 8, 4)).unwrap());
    let (_, w1) = m.attention(&mut tape, h1, &layers[0].attn, ParamMode::Frozen).unwrap();
    assert!(tape.value(w1).data().iter().all(|v| *v == 1.0));
}

#[test]
fn zero_value_projection_silences_attention() {
    let mut m = Model::new(tiny(Variant::Transformer), 2).unwrap();
    set(&mut m, "layers.0.attn.v.w", 0.0);
    let Body::Encoder { layers, .. } = m.body.clone() else { unreachable!() };
    let mut tape = Tape::new();
    let h = tape.constant(Tensor::new(vec![1, 3, 8], random_inputs(1, 3, 8, 5)).unwrap());
    let (a, _) = m.attention(&mut tape, h, &layers[0].attn, ParamMode::Frozen).unwrap();
    assert!(tape.value(a).data().iter().all(|v| *v == 0.0));
}

#[test]
fn zero_angle_projection_reads_all_ones() {
    let mut cfg = tiny(Variant::Qstaformer);
    cfg.seq_len = 1;
    let mut m = Model::new(cfg, 3).unwrap();
    set(&mut m, "layers.1.quantum.wq", 0.0);
    set(&mut m, "layers.1.quantum.theta", 0.0);
    let Body::Encoder { layers, .. } = m.body.clone() else { unreachable!() };
    let q = layers[1].quantum.unwrap();
    let mut tape = Tape::new();
    let hp = tape.constant(Tensor::new(vec![2, 1, 8], random_inputs(2, 1, 8, 6)).unwrap());
    let z = m.quantum_readout(&mut tape, hp, &q, ParamMode::Frozen).unwrap();
    assert!(tape.value(z).data().iter().all(|v| (v - 1.0).abs() < 1e-15));
}

#[test]
fn quantum_readout_is_bounded() {
    let m = Model::new(tiny(Variant::Qstaformer), 4).unwrap();
    let Body::Encoder { layers, .. } = m.body.clone() else { unreachable!() };
    let mut tape = Tape::new();
    let hp = tape.constant(Tensor::new(vec![4, 3, 8], random_inputs(4, 3, 8, 7)).unwrap());
    let z = m.quantum_readout(&mut tape, hp, &layers[1].quantum.unwrap(), ParamMode::Frozen).unwrap();
    assert!(tape.value(z).data().iter().all(|v| (-1.0..=1.0).contains(v)));
}

#[test]
fn zero_output_projection_matches_classical_stack() {
    let mut q = Model::new(tiny(Variant::Qstaformer), 5).unwrap();
    set(&mut q, "layers.1.quantum.wo", 0.0);
    let mut t = Model::new(tiny(Variant::Transformer), 99).unwrap();
    for p in t.params.iter_mut() {
        let id = q.params.find(&p.name).unwrap();
        p.value = q.params.get(id).value.clone();
    }
    if let Body::Encoder { layers, .. } = &mut t.body {
        layers[1].activation = Activation::Gelu;
    }
    let xs = random_inputs(3, 3, 3, 8);
    let a = q.predict_logits(&xs, 3).unwrap();
    let b = t.predict_logits(&xs, 3).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn classifier_head_examples() {
    let mut m = Model::new(tiny(Variant::Qstaformer), 6).unwrap();
    set(&mut m, "head.w", 0.0);
    let xs = random_inputs(2, 3, 3, 9);
    let p = m.predict_proba(&xs, 2).unwrap();
    assert!(p.iter().all(|v| (v - 0.5).abs() < 1e-15));
    set_values(&mut m, "head.b", &[10.0, -10.0]);
    let p = m.predict_proba(&xs, 2).unwrap();
    assert!(p[0] > 0.999_999 && p[2] > 0.999_999);
}

#[test]
fn batch_of_one_matches_batched_path_bit_exactly() {
    for v in [Variant::Qstaformer, Variant::Transformer, Variant::Lstm] {
        let m = Model::new(tiny(v), 7).unwrap();
        let xs = random_inputs(4, 3, 3, 10);
        let all = m.predict_logits(&xs, 4).unwrap();
        assert_eq!(all.len(), 8);
        for i in 0..4 {
            let one = m.predict_logits(&xs[i * 9..(i + 1) * 9], 1).unwrap();
            assert_eq!(one[0].to_bits(), all[2 * i].to_bits());
            assert_eq!(one[1].to_bits(), all[2 * i + 1].to_bits());
        }
        // Reversed batch order reverses outputs.
        let rev: Vec<f64> = xs.chunks(9).rev().flatten().copied().collect();
        let out = m.predict_logits(&rev, 4).unwrap();
        let back: Vec<f64> = out.chunks(2).rev().flatten().copied().collect();
        assert_eq!(back, all);
        let p = m.predict_proba(&xs, 4).unwrap();
        for r in p.chunks(2) {
            assert!((r[0] + r[1] - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn zero_lstm_has_constant_state() {
    let mut m = Model::new(tiny(Variant::Lstm), 8).unwrap();
    for name in ["lstm.wx", "lstm.wh", "lstm.b"] {
        set(&mut m, name, 0.0);
    }
    let a = m.predict_logits(&random_inputs(2, 3, 3, 11), 2).unwrap();
    assert_eq!(a[0], a[2]);
    assert_eq!(a[1], a[3]);
}

#[test]
fn variant_parsing_and_validation() {
    assert!(Variant::parse("qlstm").is_err());
    assert_eq!(Variant::parse("lstm").unwrap(), Variant::Lstm);
    let mut cfg = ModelConfig::default();
    cfg.n_heads = 5;
    assert!(Model::new(cfg, 0).is_err());
    let mut cfg = ModelConfig::default();
    cfg.n_classes = 1;
    assert!(cfg.validate().is_err());
    let m = Model::new(ModelConfig::default(), 0).unwrap();
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::zeros(&[1, 10, 4]));
    assert!(m.forward(&mut tape, x, ParamMode::Frozen).is_err());
}

#[test]
fn weights_round_trip_through_from_weights() {
    let m = Model::new(tiny(Variant::Qstaformer), 12).unwrap();
    let w: Vec<(String, Tensor)> = m.params.iter().map(|p| (p.name.clone(), p.value.clone())).collect();
    let r = Model::from_weights(m.config.clone(), m.normalizer.clone(), w.clone()).unwrap();
    assert_eq!(r.params, m.params);
    let mut short = w;
    short.pop();
    assert!(Model::from_weights(m.config.clone(), m.normalizer.clone(), short).is_err());
}

#[test]
fn normalizer_standardizes_columns() {
    let xs = vec![1.0, 10.0, 3.0, 30.0];
    let n = Normalizer::fit(&xs, 2);
    assert_eq!(n.mean, vec![2.0, 20.0]);
    assert_eq!(n.std, vec![1.0, 10.0]);
    assert_eq!(n.apply(&xs), vec![-1.0, -1.0, 1.0, 1.0]);
}

/// Central differences over every parameter of the model.
fn model_gradcheck(model: &Model, xs: &[f64], labels: &[usize]) -> Vec<(String, f64)> {
    crate::gradcheck::model_gradcheck(model, xs, labels, 1e-5).unwrap()
}

#[test]
fn tiny_qstaformer_gradients_match_finite_differences() {
    for method in [QuantumGradient::Adjoint, QuantumGradient::ParameterShift] {
        let mut cfg = tiny(Variant::Qstaformer);
        cfg.quantum_gradient = method;
        let mut m = Model::new(cfg, 13).unwrap();
        m.normalizer = Normalizer { mean: vec![0.1, -0.2, 0.3], std: vec![1.5, 0.5, 2.0] };
        let xs = random_inputs(3, 3, 3, 14);
        for (name, err) in model_gradcheck(&m, &xs, &[0, 1, 1]) {
            assert!(err <= 1e-4, "{name}: {err}");
        }
    }
}

#[test]
fn baseline_gradients_match_finite_differences() {
    for v in [Variant::Transformer, Variant::Lstm] {
        let m = Model::new(tiny(v), 15).unwrap();
        let xs = random_inputs(2, 3, 3, 16);
        for (name, err) in model_gradcheck(&m, &xs, &[1, 0]) {
            assert!(err <= 1e-4, "{name}: {err}");
        }
    }
}

#[test]
fn input_gradient_matches_finite_differences() {
    let m = Model::new(tiny(Variant::Qstaformer), 17).unwrap();
    let xs = random_inputs(2, 3, 3, 18);
    let u = [0.3, -1.0, 0.7, 0.2];
    let (_, g) = m.logits_and_input_grad(&xs, 2, &mut |_| u.to_vec()).unwrap();
    let obj = |x: &[f64]| -> f64 { m.logits(x, 2).unwrap().iter().zip(&u).map(|(a, b)| a * b).sum() };
    let h = 1e-5;
    for k in 0..xs.len() {
        let mut a = xs.clone();
        a[k] += h;
        let mut b = xs.clone();
        b[k] -= h;
        let num = (obj(&a) - obj(&b)) / (2.0 * h);
        assert!(rel_error(g[k], num) < 1e-6, "{k}: {} vs {}", g[k], num);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn argmax_ignores_logit_shift(seed in any::<u64>(), c in -50.0f64..50.0) {
        let m = Model::new(tiny(Variant::Qstaformer), seed).unwrap();
        let xs = random_inputs(4, 3, 3, seed ^ 1);
        let lg = m.predict_logits(&xs, 4).unwrap();
        let shifted: Vec<f64> = lg.iter().map(|v| v + c).collect();
        prop_assert_eq!(argmax_rows(&lg, 2), argmax_rows(&shifted, 2));
    }
}
