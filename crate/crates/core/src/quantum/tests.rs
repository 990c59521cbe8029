use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};

use num_complex::Complex64 as C;
use proptest::prelude::*;

use super::*;
use crate::rng::SeededRng;

// Dense oracle: gates as explicit 2^n x 2^n matrices built from Kronecker
// products, qubit j at bit j (so the leftmost factor is the highest qubit).

type Mat = Vec<Vec<C>>;

fn c(re: f64) -> C {
    C::new(re, 0.0)
}

fn eye(n: usize) -> Mat {
    (0..n).map(|i| (0..n).map(|j| c(if i == j { 1.0 } else { 0.0 })).collect()).collect()
}

fn kron(a: &Mat, b: &Mat) -> Mat {
    let (ra, rb) = (a.len(), b.len());
    let mut out = vec![vec![c(0.0); ra * rb]; ra * rb];
    for i in 0..ra {
        for j in 0..ra {
            for k in 0..rb {
                for l in 0..rb {
                    out[i * rb + k][j * rb + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

fn matmul(a: &Mat, b: &Mat) -> Mat {
    let n = a.len();
    let mut out = vec![vec![c(0.0); n]; n];
    for i in 0..n {
        for k in 0..n {
            for j in 0..n {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter().zip(b).map(|(r, s)| r.iter().zip(s).map(|(x, y)| x + y).collect()).collect()
}

fn pauli(axis: Axis) -> Mat {
    let i = C::new(0.0, 1.0);
    match axis {
        Axis::X => vec![vec![c(0.0), c(1.0)], vec![c(1.0), c(0.0)]],
        Axis::Y => vec![vec![c(0.0), -i], vec![i, c(0.0)]],
        Axis::Z => vec![vec![c(1.0), c(0.0)], vec![c(0.0), c(-1.0)]],
    }
}

fn rot(axis: Axis, theta: f64) -> Mat {
    let p = pauli(axis);
    let (co, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    (0..2).map(|r| (0..2).map(|k| c(if r == k { co } else { 0.0 }) - C::new(0.0, s) * p[r][k]).collect()).collect()
}

fn embed(n: usize, factors: &[(usize, Mat)]) -> Mat {
    let mut out = vec![vec![c(1.0)]];
    for q in (0..n).rev() {
        let f = factors.iter().find(|(k, _)| *k == q).map(|(_, m)| m.clone()).unwrap_or_else(|| eye(2));
        out = kron(&out, &f);
    }
    out
}

fn dense_rot(n: usize, q: usize, axis: Axis, theta: f64) -> Mat {
    embed(n, &[(q, rot(axis, theta))])
}

fn dense_cnot(n: usize, ctl: usize, tgt: usize) -> Mat {
    let p0 = vec![vec![c(1.0), c(0.0)], vec![c(0.0), c(0.0)]];
    let p1 = vec![vec![c(0.0), c(0.0)], vec![c(0.0), c(1.0)]];
    add(&embed(n, &[(ctl, p0)]), &embed(n, &[(ctl, p1), (tgt, pauli(Axis::X))]))
}

fn apply(m: &Mat, v: &[C]) -> Vec<C> {
    m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

fn circuit_unitary(spec: &CircuitSpec, theta: &[f64], features: &[f64]) -> Mat {
    let nt = spec.n_total();
    let n = spec.n_qubits;
    let mut u = eye(1 << nt);
    for (j, f) in features.iter().enumerate() {
        u = matmul(&dense_rot(nt, j, Axis::X, *f), &u);
    }
    for l in 0..spec.n_layers {
        let a = &theta[l * (n + 1)..(l + 1) * (n + 1)];
        for j in 0..n {
            u = matmul(&dense_rot(nt, j, Axis::Y, a[j]), &u);
        }
        for i in 0..n {
            u = matmul(&dense_cnot(nt, i, (i + 1) % n), &u);
        }
        u = matmul(&dense_cnot(nt, n - 1, n), &u);
        u = matmul(&dense_rot(nt, n, Axis::Y, a[n]), &u);
    }
    u
}

fn oracle_expectations(spec: &CircuitSpec, theta: &[f64], features: &[f64]) -> Vec<f64> {
    let u = circuit_unitary(spec, theta, features);
    let mut e0 = vec![c(0.0); 1 << spec.n_total()];
    e0[0] = c(1.0);
    let psi = apply(&u, &e0);
    (0..spec.n_qubits)
        .map(|j| psi.iter().enumerate().map(|(i, a)| if i >> j & 1 == 0 { a.norm_sqr() } else { -a.norm_sqr() }).sum())
        .collect()
}

fn max_amp_diff(a: &[C], b: &[C]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn random_state(n: usize, rng: &mut SeededRng) -> StateVector {
    let mut amps: Vec<C> = (0..1 << n).map(|_| C::new(rng.normal(), rng.normal())).collect();
    let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    amps.iter_mut().for_each(|a| *a /= norm);
    StateVector::from_amplitudes(amps).unwrap()
}

fn spec_with(n: usize, layers: usize) -> CircuitSpec {
    CircuitSpec::new(n, layers)
}

#[test]
fn rx_zero_is_identity() {
    let mut rng = SeededRng::new(1);
    let s0 = random_state(3, &mut rng);
    let mut s = s0.clone();
    s.apply_rotation(1, Axis::X, 0.0).unwrap();
    assert_eq!(s, s0);
}

#[test]
fn rx_pi_flips_z() {
    let mut s = StateVector::zero(1);
    s.apply_rotation(0, Axis::X, PI).unwrap();
    assert!((s.expectation_z(0) + 1.0).abs() < 1e-15);
}

#[test]
fn ry_half_pi_matches_matrix_oracle() {
    let mut s = StateVector::zero(1);
    s.apply_rotation(0, Axis::Y, FRAC_PI_2).unwrap();
    assert!(s.expectation_z(0).abs() < 1e-12);
    let want = apply(&rot(Axis::Y, FRAC_PI_2), &[c(1.0), c(0.0)]);
    assert!(max_amp_diff(s.amplitudes(), &want) < 1e-15);
}

#[test]
fn rotation_out_of_range_errors() {
    let mut s = StateVector::zero(2);
    assert!(s.apply_rotation(2, Axis::X, 0.1).is_err());
}

#[test]
fn cnot_examples() {
    let mut s = StateVector::basis(&[0, 0]);
    s.apply_cnot(0, 1).unwrap();
    assert_eq!(s, StateVector::basis(&[0, 0]));
    let mut s = StateVector::basis(&[1, 0]);
    s.apply_cnot(0, 1).unwrap();
    assert_eq!(s, StateVector::basis(&[1, 1]));
    assert!(s.apply_cnot(1, 1).is_err());
    assert!(s.apply_cnot(0, 2).is_err());
}

#[test]
fn hadamard_then_cnot_gives_bell_state() {
    // H = RY(pi/2) RX(pi) up to a global phase.
    let mut s = StateVector::zero(2);
    s.apply_rotation(0, Axis::X, PI).unwrap();
    s.apply_rotation(0, Axis::Y, FRAC_PI_2).unwrap();
    s.apply_cnot(0, 1).unwrap();
    let p: Vec<f64> = s.amplitudes().iter().map(|a| a.norm_sqr()).collect();
    for (got, want) in p.iter().zip([0.5, 0.0, 0.0, 0.5]) {
        assert!((got - want).abs() < 1e-12);
    }
    assert!((s.amplitudes()[0].norm() - FRAC_1_SQRT_2).abs() < 1e-12);
    let z = pauli_z_expectations(&s, 2);
    assert!(z.iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn pauli_z_examples() {
    assert_eq!(pauli_z_expectations(&StateVector::zero(3), 3), vec![1.0; 3]);
    assert_eq!(pauli_z_expectations(&StateVector::basis(&[1, 0, 0]), 3), vec![-1.0, 1.0, 1.0]);
}

#[test]
fn angle_encode_examples() {
    let mut s = StateVector::zero(3);
    angle_encode(&mut s, &[0.0, 0.0]).unwrap();
    assert_eq!(s, StateVector::zero(3));

    let mut s = StateVector::zero(4);
    angle_encode(&mut s, &[PI, 0.0, 0.0]).unwrap();
    let z = pauli_z_expectations(&s, 3);
    assert!((z[0] + 1.0).abs() < 1e-12 && (z[1] - 1.0).abs() < 1e-12 && (z[2] - 1.0).abs() < 1e-12);

    let mut s = StateVector::zero(3);
    assert!(angle_encode(&mut s, &[0.1, 0.2, 0.3]).is_err());
}

#[test]
fn angle_encode_two_qubits_matches_dense_oracle() {
    let mut rng = SeededRng::new(5);
    let f = [rng.uniform_range(-PI, PI), rng.uniform_range(-PI, PI)];
    let mut s = StateVector::zero(3);
    angle_encode(&mut s, &f).unwrap();
    let u = matmul(&dense_rot(3, 1, Axis::X, f[1]), &dense_rot(3, 0, Axis::X, f[0]));
    let want = apply(&u, StateVector::zero(3).amplitudes());
    assert!(max_amp_diff(s.amplitudes(), &want) < 1e-12);
    // The 4x4 main-register block is RX(f1) (x) RX(f0).
    let small = kron(&rot(Axis::X, f[1]), &rot(Axis::X, f[0]));
    let want4 = apply(&small, &[c(1.0), c(0.0), c(0.0), c(0.0)]);
    assert!(max_amp_diff(&s.amplitudes()[..4], &want4) < 1e-12);
}

#[test]
fn variational_layer_examples() {
    let mut s = StateVector::zero(3);
    variational_layer(&mut s, &[0.0, 0.0, 0.0]).unwrap();
    assert_eq!(s, StateVector::zero(3));

    let mut s = StateVector::zero(3);
    variational_layer(&mut s, &[PI, 0.0, 0.0]).unwrap();
    let spec = spec_with(2, 1);
    let mut u = eye(8);
    u = matmul(&dense_rot(3, 0, Axis::Y, PI), &u);
    u = matmul(&dense_rot(3, 1, Axis::Y, 0.0), &u);
    u = matmul(&dense_cnot(3, 0, 1), &u);
    u = matmul(&dense_cnot(3, 1, 0), &u);
    u = matmul(&dense_cnot(3, 1, 2), &u);
    u = matmul(&dense_rot(3, 2, Axis::Y, 0.0), &u);
    let want = apply(&u, StateVector::zero(3).amplitudes());
    assert!(max_amp_diff(s.amplitudes(), &want) < 1e-12);
    assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
    assert_eq!(spec.n_total(), 3);
}

#[test]
fn run_circuit_examples() {
    let spec = spec_with(3, 2);
    let z = run_circuit(&spec, &CircuitParams::zeros(&spec), &[0.0; 3]).unwrap();
    assert_eq!(z, vec![1.0; 3]);

    let spec = spec_with(2, 1);
    let mut rng = SeededRng::new(9);
    let p = CircuitParams::uniform(&spec, PI, &mut rng);
    let f = [rng.uniform_range(-PI, PI), rng.uniform_range(-PI, PI)];
    let got = run_circuit(&spec, &p, &f).unwrap();
    let want = oracle_expectations(&spec, &p.theta, &f);
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() < 1e-12);
    }
}

#[test]
fn spec_validation() {
    assert!(spec_with(1, 1).validate().is_err());
    assert!(spec_with(2, 0).validate().is_err());
    assert!(spec_with(4, 4).validate().is_ok());
    let spec = spec_with(2, 1);
    assert!(run_circuit(&spec, &CircuitParams::zeros(&spec), &[0.0]).is_err());
    assert!(CircuitParams::from_vec(&spec, vec![0.0; 2]).is_err());
}

#[test]
fn single_rx_shift_gradient() {
    // <Z> = cos(theta) after RX(theta), so the shift rule gives -sin(theta).
    let shifted = |th: f64| {
        let mut s = StateVector::zero(1);
        s.apply_rotation(0, Axis::X, th).unwrap();
        s.expectation_z(0)
    };
    let d = |th: f64| (shifted(th + FRAC_PI_2) - shifted(th - FRAC_PI_2)) / 2.0;
    assert!((d(FRAC_PI_2) + 1.0).abs() < 1e-12);
    assert!(d(0.0).abs() < 1e-12);
    // Inside the full circuit with zero variational angles the encoding gate
    // sits at an extremum when its feature is 0.
    let spec = spec_with(2, 1);
    let j = circuit_jacobian(&spec, &CircuitParams::zeros(&spec), &[0.0, 0.0]).unwrap();
    assert!(j.d_features.iter().all(|v| v.abs() < 1e-12));
    assert!(j.d_theta.iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn shift_gradient_matches_finite_differences_small() {
    let spec = spec_with(3, 2);
    let mut rng = SeededRng::new(3);
    let p = CircuitParams::uniform(&spec, PI, &mut rng);
    let f: Vec<f64> = (0..3).map(|_| rng.uniform_range(-PI, PI)).collect();
    let jac = circuit_jacobian(&spec, &p, &f).unwrap();
    let h = 1e-5;
    for k in 0..spec.n_params() {
        let (mut a, mut b) = (p.clone(), p.clone());
        a.theta[k] += h;
        b.theta[k] -= h;
        let (za, zb) = (run_circuit(&spec, &a, &f).unwrap(), run_circuit(&spec, &b, &f).unwrap());
        for j in 0..3 {
            let num = (za[j] - zb[j]) / (2.0 * h);
            assert!((jac.d_theta_at(j, k) - num).abs() < 1e-8);
        }
    }
}

#[test]
fn adjoint_matches_parameter_shift() {
    let mut rng = SeededRng::new(21);
    for (n, l) in [(2, 1), (3, 2), (4, 4)] {
        let spec = spec_with(n, l);
        let p = CircuitParams::uniform(&spec, PI, &mut rng);
        let f: Vec<f64> = (0..n).map(|_| rng.uniform_range(-2.0, 2.0)).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let (ta, fa) = circuit_vjp(&spec, &p, &f, &w, QuantumGradient::Adjoint).unwrap();
        let (ts, fs) = circuit_vjp(&spec, &p, &f, &w, QuantumGradient::ParameterShift).unwrap();
        for (a, b) in ta.iter().zip(&ts).chain(fa.iter().zip(&fs)) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn run_circuit_is_pure() {
    let spec = spec_with(4, 4);
    let mut rng = SeededRng::new(4);
    let p = CircuitParams::uniform(&spec, 1.0, &mut rng);
    let f = [0.3, -0.2, 1.1, 0.7];
    let a = run_circuit(&spec, &p, &f).unwrap();
    let b = run_circuit(&spec, &p, &f).unwrap();
    assert_eq!(a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), b.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
}

fn axis_of(k: u8) -> Axis {
    match k % 3 {
        0 => Axis::X,
        1 => Axis::Y,
        _ => Axis::Z,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn norm_preserved_over_long_sequences(seed in any::<u64>(), len in 1usize..1000, n in 1usize..5) {
        let mut rng = SeededRng::new(seed);
        let mut s = random_state(n, &mut rng);
        for _ in 0..len {
            if n >= 2 && rng.below(3) == 0 {
                let ctl = rng.below(n);
                let tgt = (ctl + 1 + rng.below(n - 1)) % n;
                s.apply_cnot(ctl, tgt).unwrap();
            } else {
                let q = rng.below(n);
                s.apply_rotation(q, axis_of(rng.below(3) as u8), rng.uniform_range(-PI, PI)).unwrap();
            }
            prop_assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gates_match_dense_matrices(seed in any::<u64>(), n in 1usize..4) {
        let mut rng = SeededRng::new(seed);
        let s0 = random_state(n, &mut rng);
        for q in 0..n {
            for k in 0..3u8 {
                let th = rng.uniform_range(-PI, PI);
                let mut s = s0.clone();
                s.apply_rotation(q, axis_of(k), th).unwrap();
                let want = apply(&dense_rot(n, q, axis_of(k), th), s0.amplitudes());
                prop_assert!(max_amp_diff(s.amplitudes(), &want) < 1e-12);
            }
            for t in (0..n).filter(|t| *t != q) {
                let mut s = s0.clone();
                s.apply_cnot(q, t).unwrap();
                let want = apply(&dense_cnot(n, q, t), s0.amplitudes());
                prop_assert!(max_amp_diff(s.amplitudes(), &want) < 1e-12);
            }
        }
    }

    #[test]
    fn cnot_is_self_inverse(seed in any::<u64>(), n in 2usize..5) {
        let mut rng = SeededRng::new(seed);
        let s0 = random_state(n, &mut rng);
        let mut s = s0.clone();
        let ctl = rng.below(n);
        let tgt = (ctl + 1) % n;
        s.apply_cnot(ctl, tgt).unwrap();
        s.apply_cnot(ctl, tgt).unwrap();
        prop_assert!(max_amp_diff(s.amplitudes(), s0.amplitudes()) < 1e-12);
    }

    #[test]
    fn circuit_matches_dense_unitary(seed in any::<u64>(), n in 2usize..4, l in 1usize..4) {
        let spec = spec_with(n, l);
        let mut rng = SeededRng::new(seed);
        let p = CircuitParams::uniform(&spec, PI, &mut rng);
        let f: Vec<f64> = (0..n).map(|_| rng.uniform_range(-PI, PI)).collect();
        let s = simulate(&spec, &p, &f).unwrap();
        let u = circuit_unitary(&spec, &p.theta, &f);
        let want = apply(&u, StateVector::zero(spec.n_total()).amplitudes());
        prop_assert!(max_amp_diff(s.amplitudes(), &want) < 1e-12);
        let z = run_circuit(&spec, &p, &f).unwrap();
        prop_assert!(z.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn shift_rule_matches_finite_differences(seed in any::<u64>(), n in 2usize..5, l in 1usize..5) {
        let spec = spec_with(n, l);
        let mut rng = SeededRng::new(seed);
        let p = CircuitParams::uniform(&spec, PI, &mut rng);
        let f: Vec<f64> = (0..n).map(|_| rng.uniform_range(-PI, PI)).collect();
        let jac = circuit_jacobian(&spec, &p, &f).unwrap();
        let h = 1e-5;
        let rel = |a: f64, num: f64| (a - num).abs() / num.abs().max(1.0);
        for k in 0..spec.n_params() {
            let (mut a, mut b) = (p.clone(), p.clone());
            a.theta[k] += h;
            b.theta[k] -= h;
            let (za, zb) = (run_circuit(&spec, &a, &f).unwrap(), run_circuit(&spec, &b, &f).unwrap());
            for j in 0..n {
                prop_assert!(rel(jac.d_theta_at(j, k), (za[j] - zb[j]) / (2.0 * h)) < 1e-6);
            }
        }
        for m in 0..n {
            let (mut fa, mut fb) = (f.clone(), f.clone());
            fa[m] += h;
            fb[m] -= h;
            let (za, zb) = (run_circuit(&spec, &p, &fa).unwrap(), run_circuit(&spec, &p, &fb).unwrap());
            for j in 0..n {
                prop_assert!(rel(jac.d_feature_at(j, m), (za[j] - zb[j]) / (2.0 * h)) < 1e-6);
            }
        }
    }
}
