use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::state::{pauli_z_expectations, Axis, StateVector};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    /// `RX(feature_j)` on main qubit `j`.
    #[default]
    Angle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Entanglement {
    /// CNOT `i -> (i+1) mod n` over the main register, then CNOT `n-1 -> aux`.
    #[default]
    RingAux,
}

/// Backward rule used when the circuit sits inside a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum QuantumGradient {
    /// Reverse sweep over the statevector; one forward and one backward
    /// simulation per call.
    #[default]
    Adjoint,
    /// Two shifted simulations per angle.
    ParameterShift,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitSpec {
    pub n_qubits: usize,
    pub n_layers: usize,
    #[serde(default)]
    pub encoding: Encoding,
    #[serde(default)]
    pub entanglement: Entanglement,
}

impl Default for CircuitSpec {
    fn default() -> Self {
        Self::new(4, 4)
    }
}

impl CircuitSpec {
    pub fn new(n_qubits: usize, n_layers: usize) -> Self {
        Self { n_qubits, n_layers, encoding: Encoding::Angle, entanglement: Entanglement::RingAux }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits < 2 {
            return Err(Error::InvalidArgument(format!("circuit needs at least 2 main qubits, got {}", self.n_qubits)));
        }
        if self.n_qubits > 12 {
            return Err(Error::InvalidArgument(format!("{} main qubits exceeds the 12-qubit limit", self.n_qubits)));
        }
        if self.n_layers < 1 {
            return Err(Error::InvalidArgument("circuit needs at least 1 variational layer".into()));
        }
        Ok(())
    }

    /// Main qubits plus the auxiliary.
    pub fn n_total(&self) -> usize {
        self.n_qubits + 1
    }

    /// Angles per layer: one per main qubit plus the auxiliary.
    pub fn angles_per_layer(&self) -> usize {
        self.n_qubits + 1
    }

    pub fn n_params(&self) -> usize {
        self.n_layers * self.angles_per_layer()
    }

    /// Flat gate list for this topology.
    pub fn program(&self) -> Vec<Gate> {
        let n = self.n_qubits;
        let mut g = Vec::with_capacity(n + self.n_layers * (2 * n + 2));
        for j in 0..n {
            g.push(Gate::Rot { qubit: j, axis: Axis::X, angle: Angle::Feature(j) });
        }
        for l in 0..self.n_layers {
            let base = l * self.angles_per_layer();
            for j in 0..n {
                g.push(Gate::Rot { qubit: j, axis: Axis::Y, angle: Angle::Theta(base + j) });
            }
            for i in 0..n {
                g.push(Gate::Cnot { control: i, target: (i + 1) % n });
            }
            g.push(Gate::Cnot { control: n - 1, target: n });
            g.push(Gate::Rot { qubit: n, axis: Axis::Y, angle: Angle::Theta(base + n) });
        }
        g
    }
}

/// Source of a rotation angle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Angle {
    Feature(usize),
    Theta(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Rot { qubit: usize, axis: Axis, angle: Angle },
    Cnot { control: usize, target: usize },
}

/// Trainable angles, `[n_layers x (n_qubits + 1)]` row-major; the last
/// column of each row drives the auxiliary qubit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitParams {
    pub n_layers: usize,
    pub width: usize,
    pub theta: Vec<f64>,
}

impl CircuitParams {
    pub fn zeros(spec: &CircuitSpec) -> Self {
        Self { n_layers: spec.n_layers, width: spec.angles_per_layer(), theta: vec![0.0; spec.n_params()] }
    }

    pub fn from_vec(spec: &CircuitSpec, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != spec.n_params() {
            return Err(Error::Shape {
                op: "circuit_params",
                detail: format!("expected {} angles, got {}", spec.n_params(), theta.len()),
            });
        }
        Ok(Self { n_layers: spec.n_layers, width: spec.angles_per_layer(), theta })
    }

    /// Uniform in `[-a, a]`.
    pub fn uniform(spec: &CircuitSpec, a: f64, rng: &mut SeededRng) -> Self {
        let theta = (0..spec.n_params()).map(|_| rng.uniform_range(-a, a)).collect();
        Self { n_layers: spec.n_layers, width: spec.angles_per_layer(), theta }
    }

    pub fn layer(&self, l: usize) -> &[f64] {
        &self.theta[l * self.width..(l + 1) * self.width]
    }
}

fn check_dims(spec: &CircuitSpec, theta: &[f64], features: &[f64]) -> Result<()> {
    spec.validate()?;
    if theta.len() != spec.n_params() {
        return Err(Error::Shape {
            op: "run_circuit",
            detail: format!("expected {} angles, got {}", spec.n_params(), theta.len()),
        });
    }
    if features.len() != spec.n_qubits {
        return Err(Error::Shape {
            op: "run_circuit",
            detail: format!("expected {} features, got {}", spec.n_qubits, features.len()),
        });
    }
    Ok(())
}

/// `RX(features[j])` on main qubit `j`.
pub fn angle_encode(state: &mut StateVector, features: &[f64]) -> Result<()> {
    if features.len() + 1 != state.n_qubits() {
        return Err(Error::Shape {
            op: "angle_encode",
            detail: format!("{} features for {} main qubits", features.len(), state.n_qubits().saturating_sub(1)),
        });
    }
    for (j, f) in features.iter().enumerate() {
        state.apply_rotation(j, Axis::X, *f)?;
    }
    Ok(())
}

/// One variational block: RY on each main qubit, ring CNOTs, CNOT into the
/// auxiliary, RY on the auxiliary.
pub fn variational_layer(state: &mut StateVector, angles: &[f64]) -> Result<()> {
    let n = state.n_qubits().saturating_sub(1);
    if angles.len() != n + 1 || n < 2 {
        return Err(Error::Shape {
            op: "variational_layer",
            detail: format!("{} angles for a {}-qubit register", angles.len(), state.n_qubits()),
        });
    }
    for j in 0..n {
        state.apply_rotation(j, Axis::Y, angles[j])?;
    }
    for i in 0..n {
        state.apply_cnot(i, (i + 1) % n)?;
    }
    state.apply_cnot(n - 1, n)?;
    state.apply_rotation(n, Axis::Y, angles[n])
}

fn angle_of(a: Angle, theta: &[f64], features: &[f64]) -> f64 {
    match a {
        Angle::Feature(j) => features[j],
        Angle::Theta(k) => theta[k],
    }
}

/// Half-angle `(cos, sin)` for every gate of `program` (zeros for CNOTs).
fn gate_trig(program: &[Gate], theta: &[f64], features: &[f64], shift: Option<(usize, f64)>) -> Vec<(f64, f64)> {
    program
        .iter()
        .enumerate()
        .map(|(gi, g)| match *g {
            Gate::Rot { angle, .. } => {
                let mut a = angle_of(angle, theta, features);
                if let Some((sg, d)) = shift {
                    if sg == gi {
                        a += d;
                    }
                }
                let (s, c) = libm::sincos(a / 2.0);
                (c, s)
            }
            Gate::Cnot { .. } => (0.0, 0.0),
        })
        .collect()
}

fn run_program(spec: &CircuitSpec, program: &[Gate], trig: &[(f64, f64)]) -> StateVector {
    let mut s = StateVector::zero(spec.n_total());
    for (g, &(c, sn)) in program.iter().zip(trig) {
        match *g {
            Gate::Rot { qubit, axis, .. } => s.rotate_cs(qubit, axis, c, sn),
            Gate::Cnot { control, target } => s.cnot_unchecked(control, target),
        }
    }
    s
}

fn execute(spec: &CircuitSpec, program: &[Gate], theta: &[f64], features: &[f64], shift: Option<(usize, f64)>) -> StateVector {
    run_program(spec, program, &gate_trig(program, theta, features, shift))
}

/// Final state of the circuit on `|0...0>`.
pub fn simulate(spec: &CircuitSpec, params: &CircuitParams, features: &[f64]) -> Result<StateVector> {
    check_dims(spec, &params.theta, features)?;
    Ok(execute(spec, &spec.program(), &params.theta, features, None))
}

/// `[<Z_0>, ..., <Z_{n-1}>]` after encoding and all variational layers.
pub fn run_circuit(spec: &CircuitSpec, params: &CircuitParams, features: &[f64]) -> Result<Vec<f64>> {
    let s = simulate(spec, params, features)?;
    Ok(pauli_z_expectations(&s, spec.n_qubits))
}

/// Row-major Jacobians: `d_theta[j * n_params + k] = d<Z_j>/d theta_k` and
/// `d_features[j * n + m] = d<Z_j>/d feature_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitJacobian {
    pub n_outputs: usize,
    pub d_theta: Vec<f64>,
    pub d_features: Vec<f64>,
}

impl CircuitJacobian {
    pub fn d_theta_at(&self, j: usize, k: usize) -> f64 {
        self.d_theta[j * (self.d_theta.len() / self.n_outputs) + k]
    }

    pub fn d_feature_at(&self, j: usize, m: usize) -> f64 {
        self.d_features[j * (self.d_features.len() / self.n_outputs) + m]
    }
}

/// Parameter-shift Jacobian over every trainable angle and every encoded
/// feature.
pub fn circuit_jacobian(spec: &CircuitSpec, params: &CircuitParams, features: &[f64]) -> Result<CircuitJacobian> {
    check_dims(spec, &params.theta, features)?;
    let n = spec.n_qubits;
    let np = spec.n_params();
    let program = spec.program();
    let mut d_theta = vec![0.0; n * np];
    let mut d_features = vec![0.0; n * n];
    let half_pi = core::f64::consts::FRAC_PI_2;
    for (gi, g) in program.iter().enumerate() {
        let Gate::Rot { angle, .. } = *g else { continue };
        let up = pauli_z_expectations(&execute(spec, &program, &params.theta, features, Some((gi, half_pi))), n);
        let dn = pauli_z_expectations(&execute(spec, &program, &params.theta, features, Some((gi, -half_pi))), n);
        for j in 0..n {
            let d = (up[j] - dn[j]) / 2.0;
            match angle {
                Angle::Theta(k) => d_theta[j * np + k] += d,
                Angle::Feature(m) => d_features[j * n + m] += d,
            }
        }
    }
    Ok(CircuitJacobian { n_outputs: n, d_theta, d_features })
}

/// Vector-Jacobian product: given `upstream[j] = dL/d<Z_j>`, returns
/// `(dL/dtheta, dL/dfeatures)`.
pub fn circuit_vjp(
    spec: &CircuitSpec,
    params: &CircuitParams,
    features: &[f64],
    upstream: &[f64],
    method: QuantumGradient,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dims(spec, &params.theta, features)?;
    if upstream.len() != spec.n_qubits {
        return Err(Error::Shape {
            op: "circuit_vjp",
            detail: format!("expected {} upstream values, got {}", spec.n_qubits, upstream.len()),
        });
    }
    match method {
        QuantumGradient::ParameterShift => {
            let jac = circuit_jacobian(spec, params, features)?;
            let (n, np) = (spec.n_qubits, spec.n_params());
            let mut gt = vec![0.0; np];
            let mut gf = vec![0.0; n];
            for j in 0..n {
                for k in 0..np {
                    gt[k] += upstream[j] * jac.d_theta[j * np + k];
                }
                for m in 0..n {
                    gf[m] += upstream[j] * jac.d_features[j * n + m];
                }
            }
            Ok((gt, gf))
        }
        QuantumGradient::Adjoint => {
            let program = spec.program();
            let trig = gate_trig(&program, &params.theta, features, None);
            let psi = run_program(spec, &program, &trig);
            Ok(adjoint_sweep(spec, &program, &trig, psi, upstream))
        }
    }
}

/// Adjoint vector-Jacobian product reusing `final_state`, the output of
/// [`simulate`] for the same inputs.
pub fn circuit_vjp_from_state(
    spec: &CircuitSpec,
    params: &CircuitParams,
    features: &[f64],
    final_state: StateVector,
    upstream: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dims(spec, &params.theta, features)?;
    if upstream.len() != spec.n_qubits || final_state.n_qubits() != spec.n_total() {
        return Err(Error::Shape {
            op: "circuit_vjp",
            detail: format!("upstream {} / state {} qubits for spec {:?}", upstream.len(), final_state.n_qubits(), spec),
        });
    }
    let program = spec.program();
    let trig = gate_trig(&program, &params.theta, features, None);
    Ok(adjoint_sweep(spec, &program, &trig, final_state, upstream))
}

/// Adjoint-state reverse sweep. With `O = sum_j w_j Z_j` and `lambda = O psi`
/// carried backwards, each rotation `exp(-i a P / 2)` contributes
/// `Im <lambda | P | psi_k>` where `psi_k` is the state just after it.
fn adjoint_sweep(
    spec: &CircuitSpec,
    program: &[Gate],
    trig: &[(f64, f64)],
    mut psi: StateVector,
    upstream: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let mut lam = psi.clone();
    lam.apply_weighted_z(upstream);
    let mut gt = vec![0.0; spec.n_params()];
    let mut gf = vec![0.0; spec.n_qubits];
    for (g, &(c, s)) in program.iter().zip(trig).rev() {
        match *g {
            Gate::Rot { qubit, axis, angle } => {
                let d = lam.im_inner_with_pauli(qubit, axis, &psi);
                match angle {
                    Angle::Theta(k) => gt[k] += d,
                    Angle::Feature(m) => gf[m] += d,
                }
                psi.rotate_cs(qubit, axis, c, -s);
                lam.rotate_cs(qubit, axis, c, -s);
            }
            Gate::Cnot { control, target } => {
                psi.cnot_unchecked(control, target);
                lam.cnot_unchecked(control, target);
            }
        }
    }
    (gt, gf)
}
