use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Rotation axis of a single-qubit gate `exp(-i theta P / 2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Pure state of `n_qubits` qubits. Qubit `j` is bit `j` of the amplitude
/// index (little-endian), so basis label `|q0 q1 ...>` has `q0` in bit 0.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// `|0...0>`
    pub fn zero(n_qubits: usize) -> Self {
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amps[0] = Complex64::new(1.0, 0.0);
        Self { n_qubits, amps }
    }

    /// Computational basis state with the given per-qubit bits.
    pub fn basis(bits: &[u8]) -> Self {
        let idx = bits.iter().enumerate().fold(0usize, |acc, (j, b)| acc | (usize::from(*b & 1) << j));
        let mut s = Self::zero(bits.len());
        s.amps[0] = Complex64::new(0.0, 0.0);
        s.amps[idx] = Complex64::new(1.0, 0.0);
        s
    }

    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let n = amps.len();
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::InvalidArgument(format!("{} amplitudes is not a power of two", n)));
        }
        Ok(Self { n_qubits: n.trailing_zeros() as usize, amps })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    fn check_qubit(&self, q: usize) -> Result<()> {
        if q >= self.n_qubits {
            return Err(Error::InvalidArgument(format!(
                "qubit {} out of range for {}-qubit register",
                q, self.n_qubits
            )));
        }
        Ok(())
    }

    /// `exp(-i theta P / 2)` on `qubit`.
    pub fn apply_rotation(&mut self, qubit: usize, axis: Axis, theta: f64) -> Result<()> {
        self.check_qubit(qubit)?;
        self.rotate_unchecked(qubit, axis, theta);
        Ok(())
    }

    pub(crate) fn rotate_unchecked(&mut self, qubit: usize, axis: Axis, theta: f64) {
        let (s, c) = libm::sincos(theta / 2.0);
        self.rotate_cs(qubit, axis, c, s);
    }

    /// Rotation by the angle whose half-angle cosine and sine are `c`, `s`.
    pub(crate) fn rotate_cs(&mut self, qubit: usize, axis: Axis, c: f64, s: f64) {
        match axis {
            Axis::Y => self.for_pairs(qubit, |x, y| {
                (Complex64::new(c * x.re - s * y.re, c * x.im - s * y.im), Complex64::new(s * x.re + c * y.re, s * x.im + c * y.im))
            }),
            // [[c, -is], [-is, c]]
            Axis::X => self.for_pairs(qubit, |x, y| {
                (Complex64::new(c * x.re + s * y.im, c * x.im - s * y.re), Complex64::new(c * y.re + s * x.im, c * y.im - s * x.re))
            }),
            // diag(c - is, c + is)
            Axis::Z => self.for_pairs(qubit, |x, y| {
                (Complex64::new(c * x.re + s * x.im, c * x.im - s * x.re), Complex64::new(c * y.re - s * y.im, c * y.im + s * y.re))
            }),
        }
    }

    /// Visits every amplitude pair differing only in `qubit`.
    #[inline(always)]
    fn for_pairs(&mut self, qubit: usize, f: impl Fn(Complex64, Complex64) -> (Complex64, Complex64)) {
        let bit = 1usize << qubit;
        for block in self.amps.chunks_exact_mut(2 * bit) {
            let (lo, hi) = block.split_at_mut(bit);
            for (a0, a1) in lo.iter_mut().zip(hi.iter_mut()) {
                (*a0, *a1) = f(*a0, *a1);
            }
        }
    }

    pub fn apply_cnot(&mut self, control: usize, target: usize) -> Result<()> {
        self.check_qubit(control)?;
        self.check_qubit(target)?;
        if control == target {
            return Err(Error::InvalidArgument(format!("CNOT control and target are both qubit {}", control)));
        }
        self.cnot_unchecked(control, target);
        Ok(())
    }

    pub(crate) fn cnot_unchecked(&mut self, control: usize, target: usize) {
        let (cb, tb) = (1usize << control, 1usize << target);
        let mask = cb | tb;
        for i in 0..self.amps.len() {
            if i & mask == cb {
                self.amps.swap(i, i | tb);
            }
        }
    }

    /// `<Z_q>` for one qubit.
    pub fn expectation_z(&self, qubit: usize) -> f64 {
        let bit = 1usize << qubit;
        self.amps
            .iter()
            .enumerate()
            .map(|(i, a)| if i & bit == 0 { a.norm_sqr() } else { -a.norm_sqr() })
            .sum()
    }

    /// `Im <psi| P_q |phi>` with `self` as `psi`, without materializing `P phi`.
    pub(crate) fn im_inner_with_pauli(&self, qubit: usize, axis: Axis, phi: &StateVector) -> f64 {
        let bit = 1usize << qubit;
        let mut acc = 0.0;
        for (lb, pb) in self.amps.chunks_exact(2 * bit).zip(phi.amps.chunks_exact(2 * bit)) {
            let (l0, l1) = lb.split_at(bit);
            let (p0, p1) = pb.split_at(bit);
            for (((a0, a1), b0), b1) in l0.iter().zip(l1).zip(p0).zip(p1) {
                // Im(conj(a) * q) = a.re * q.im - a.im * q.re
                acc += match axis {
                    // (P phi) = (b1, b0)
                    Axis::X => a0.re * b1.im - a0.im * b1.re + a1.re * b0.im - a1.im * b0.re,
                    // (P phi) = (-i b1, i b0)
                    Axis::Y => -a0.re * b1.re - a0.im * b1.im + a1.re * b0.re + a1.im * b0.im,
                    // (P phi) = (b0, -b1)
                    Axis::Z => a0.re * b0.im - a0.im * b0.re - a1.re * b1.im + a1.im * b1.re,
                };
            }
        }
        acc
    }

    /// Multiplies every amplitude by the diagonal `sum_j w_j Z_j`.
    pub(crate) fn apply_weighted_z(&mut self, weights: &[f64]) {
        for (i, a) in self.amps.iter_mut().enumerate() {
            let d: f64 = weights.iter().enumerate().map(|(j, w)| if i >> j & 1 == 0 { *w } else { -*w }).sum();
            *a *= d;
        }
    }
}

/// `[<Z_0>, ..., <Z_{n-1}>]` over the first `n` (main) qubits.
pub fn pauli_z_expectations(state: &StateVector, n: usize) -> Vec<f64> {
    (0..n.min(state.n_qubits())).map(|q| state.expectation_z(q)).collect()
}
