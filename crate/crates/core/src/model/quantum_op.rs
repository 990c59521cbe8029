use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::quantum::{
    circuit_vjp, circuit_vjp_from_state, pauli_z_expectations, simulate, CircuitParams, CircuitSpec, QuantumGradient,
    StateVector,
};
use crate::tensor::{CustomOp, Tape, Tensor, Var};

/// Per-row circuit evaluation: `angles [..., n]` and `theta [n_params]` map to
/// `<Z> [..., n]`, one independent circuit per row. Final states are kept for
/// the adjoint backward pass.
struct CircuitOp {
    spec: CircuitSpec,
    method: QuantumGradient,
    states: Vec<StateVector>,
}

impl CustomOp for CircuitOp {
    fn name(&self) -> &'static str {
        "circuit"
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad_out: &[f64]) -> Vec<Option<Vec<f64>>> {
        let (angles, theta) = (inputs[0], inputs[1]);
        let n = self.spec.n_qubits;
        let params = CircuitParams { n_layers: self.spec.n_layers, width: n + 1, theta: theta.data().to_vec() };
        let mut g_angles = vec![0.0; angles.len()];
        let mut g_theta = vec![0.0; theta.len()];
        for (r, (row, up)) in angles.data().chunks(n).zip(grad_out.chunks(n)).enumerate() {
            if up.iter().all(|v| *v == 0.0) {
                continue;
            }
            let res = match self.method {
                QuantumGradient::Adjoint => {
                    circuit_vjp_from_state(&self.spec, &params, row, self.states[r].clone(), up)
                }
                QuantumGradient::ParameterShift => circuit_vjp(&self.spec, &params, row, up, self.method),
            };
            let (gt, gf) = res.expect("dimensions were checked when the op was recorded");
            g_angles[r * n..(r + 1) * n].copy_from_slice(&gf);
            g_theta.iter_mut().zip(&gt).for_each(|(a, b)| *a += b);
        }
        vec![Some(g_angles), Some(g_theta)]
    }
}

/// Records the circuit layer on `tape`.
pub fn circuit_layer(tape: &mut Tape, spec: &CircuitSpec, method: QuantumGradient, angles: Var, theta: Var) -> Result<Var> {
    let n = spec.n_qubits;
    let (va, vt) = (tape.value(angles), tape.value(theta));
    if va.last_dim() != n || vt.len() != spec.n_params() {
        return Err(Error::Shape {
            op: "circuit_layer",
            detail: alloc::format!("angles {:?}, theta {:?} for {} qubits", va.shape(), vt.shape(), n),
        });
    }
    let params = CircuitParams::from_vec(spec, vt.data().to_vec())?;
    let track = tape.requires_grad(angles) || tape.requires_grad(theta);
    let mut out = Vec::with_capacity(va.len());
    let mut states = Vec::new();
    for row in va.data().chunks(n) {
        let s = simulate(spec, &params, row)?;
        out.extend(pauli_z_expectations(&s, n));
        if track && method == QuantumGradient::Adjoint {
            states.push(s);
        }
    }
    let value = Tensor::new(va.shape().to_vec(), out)?;
    Ok(tape.custom(&[angles, theta], value, Box::new(CircuitOp { spec: *spec, method, states })))
}
