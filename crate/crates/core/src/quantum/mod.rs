//! Exact statevector simulation of the angle-encoded, ring-entangled
//! variational circuit, with parameter-shift and adjoint gradients.

mod circuit;
mod state;

pub use circuit::{
    angle_encode, circuit_jacobian, circuit_vjp, circuit_vjp_from_state, run_circuit, simulate, variational_layer, Angle, CircuitJacobian,
    CircuitParams, CircuitSpec, Encoding, Entanglement, Gate, QuantumGradient,
};
pub use state::{pauli_z_expectations, Axis, StateVector};

#[cfg(test)]
mod tests;
