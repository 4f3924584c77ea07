//! Dense statevector simulation.
//!
//! Qubit 0 is the least-significant bit of the basis index. Gates are applied in
//! place with bit-stride kernels; the full 2^n × 2^n unitary is never built.
//! Global phase is not tracked.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use thiserror::Error;

use crate::qasm::{CircuitIR, GateKind, GateOp, ParamValue};

pub const MAX_QUBITS: usize = 24;

pub type Matrix2 = [[Complex64; 2]; 2];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("qubit count {0} outside 1..={MAX_QUBITS}")]
    QubitCountOutOfRange(usize),
    #[error("trainable slot {slot} out of range for θ of length {len}")]
    SlotOutOfRange { slot: usize, len: usize },
    #[error("operation on qubit {qubit} in a {num_qubits}-qubit state")]
    QubitOutOfRange { qubit: usize, num_qubits: usize },
    #[error("θ has length {got}, circuit expects {expected}")]
    ThetaLength { expected: usize, got: usize },
    #[error("non-unitary operation {0:?} cannot be simulated")]
    NonUnitary(GateKind),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// |0…0⟩ on `n` qubits.
    pub fn zero(n: usize) -> Result<Self, SimError> {
        if n == 0 || n > MAX_QUBITS {
            return Err(SimError::QubitCountOutOfRange(n));
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(StateVector {
            num_qubits: n,
            amplitudes,
        })
    }

    /// Wraps raw amplitudes. The length must be a power of two.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self, SimError> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(SimError::QubitCountOutOfRange(0));
        }
        let n = len.trailing_zeros() as usize;
        if n > MAX_QUBITS {
            return Err(SimError::QubitCountOutOfRange(n));
        }
        Ok(StateVector {
            num_qubits: n,
            amplitudes,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// ⟨Z_k⟩ for every qubit k.
    pub fn expect_all_z(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.num_qubits];
        for (b, amp) in self.amplitudes.iter().enumerate() {
            let p = amp.norm_sqr();
            for (k, e) in out.iter_mut().enumerate() {
                if b >> k & 1 == 0 {
                    *e += p;
                } else {
                    *e -= p;
                }
            }
        }
        out
    }

    pub fn expect_z(&self, qubit: usize) -> f64 {
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(b, a)| if b >> qubit & 1 == 0 { a.norm_sqr() } else { -a.norm_sqr() })
            .sum()
    }

    fn check_qubit(&self, q: usize) -> Result<(), SimError> {
        if q < self.num_qubits {
            Ok(())
        } else {
            Err(SimError::QubitOutOfRange {
                qubit: q,
                num_qubits: self.num_qubits,
            })
        }
    }

    pub fn apply_single(&mut self, m: &Matrix2, target: usize) {
        let stride = 1usize << target;
        let len = self.amplitudes.len();
        let [[a, b], [c, d]] = *m;
        for block in (0..len).step_by(stride << 1) {
            for i in block..block + stride {
                let j = i | stride;
                let x = self.amplitudes[i];
                let y = self.amplitudes[j];
                self.amplitudes[i] = a * x + b * y;
                self.amplitudes[j] = c * x + d * y;
            }
        }
    }

    fn apply_cx(&mut self, control: usize, target: usize) {
        let (cm, tm) = (1usize << control, 1usize << target);
        for i in 0..self.amplitudes.len() {
            if i & cm != 0 && i & tm == 0 {
                self.amplitudes.swap(i, i | tm);
            }
        }
    }

    fn apply_cz(&mut self, a: usize, b: usize) {
        let mask = (1usize << a) | (1usize << b);
        for (i, amp) in self.amplitudes.iter_mut().enumerate() {
            if i & mask == mask {
                *amp = -*amp;
            }
        }
    }

    fn apply_swap(&mut self, a: usize, b: usize) {
        let (am, bm) = (1usize << a, 1usize << b);
        for i in 0..self.amplitudes.len() {
            if i & am != 0 && i & bm == 0 {
                self.amplitudes.swap(i, i ^ am ^ bm);
            }
        }
    }

    fn apply_ccx(&mut self, c1: usize, c2: usize, target: usize) {
        let cm = (1usize << c1) | (1usize << c2);
        let tm = 1usize << target;
        for i in 0..self.amplitudes.len() {
            if i & cm == cm && i & tm == 0 {
                self.amplitudes.swap(i, i | tm);
            }
        }
    }

    /// Applies one gate, resolving trainable slots from `theta`.
    pub fn apply_gate(&mut self, op: &GateOp, theta: &[f64]) -> Result<(), SimError> {
        for &q in &op.qubits {
            self.check_qubit(q)?;
        }
        let mut angles = [0.0; 3];
        for (dst, p) in angles.iter_mut().zip(&op.params) {
            *dst = match *p {
                ParamValue::Literal(a) => a,
                ParamValue::Trainable { slot, .. } => *theta.get(slot).ok_or(SimError::SlotOutOfRange {
                    slot,
                    len: theta.len(),
                })?,
            };
        }
        let q = &op.qubits;
        match op.kind {
            GateKind::Cx => self.apply_cx(q[0], q[1]),
            GateKind::Cz => self.apply_cz(q[0], q[1]),
            GateKind::Swap => self.apply_swap(q[0], q[1]),
            GateKind::Ccx => self.apply_ccx(q[0], q[1], q[2]),
            GateKind::Barrier | GateKind::Measure | GateKind::Reset => {
                return Err(SimError::NonUnitary(op.kind))
            }
            kind => {
                let m = single_qubit_matrix(kind, &angles[..kind.param_arity()])
                    .expect("single-qubit unitary kind");
                self.apply_single(&m, q[0]);
            }
        }
        Ok(())
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn phase(a: f64) -> Complex64 {
    Complex64::from_polar(1.0, a)
}

/// 2×2 unitary of a single-qubit gate. Rotations use the half-angle
/// convention R_P(a) = exp(−i a P / 2).
pub fn single_qubit_matrix(kind: GateKind, angles: &[f64]) -> Option<Matrix2> {
    let zero = c(0.0, 0.0);
    let one = c(1.0, 0.0);
    let m = match kind {
        GateKind::H => {
            let h = c(FRAC_1_SQRT_2, 0.0);
            [[h, h], [h, -h]]
        }
        GateKind::X => [[zero, one], [one, zero]],
        GateKind::Y => [[zero, c(0.0, -1.0)], [c(0.0, 1.0), zero]],
        GateKind::Z => [[one, zero], [zero, -one]],
        GateKind::S => [[one, zero], [zero, c(0.0, 1.0)]],
        GateKind::Sdg => [[one, zero], [zero, c(0.0, -1.0)]],
        GateKind::T => [[one, zero], [zero, phase(std::f64::consts::FRAC_PI_4)]],
        GateKind::Tdg => [[one, zero], [zero, phase(-std::f64::consts::FRAC_PI_4)]],
        GateKind::Rx => {
            let (s, co) = (angles[0] / 2.0).sin_cos();
            [[c(co, 0.0), c(0.0, -s)], [c(0.0, -s), c(co, 0.0)]]
        }
        GateKind::Ry => {
            let (s, co) = (angles[0] / 2.0).sin_cos();
            [[c(co, 0.0), c(-s, 0.0)], [c(s, 0.0), c(co, 0.0)]]
        }
        GateKind::Rz => [[phase(-angles[0] / 2.0), zero], [zero, phase(angles[0] / 2.0)]],
        GateKind::U1 => [[one, zero], [zero, phase(angles[0])]],
        GateKind::U2 => {
            let (phi, lam) = (angles[0], angles[1]);
            let r = FRAC_1_SQRT_2;
            [
                [c(r, 0.0), -phase(lam) * r],
                [phase(phi) * r, phase(phi + lam) * r],
            ]
        }
        GateKind::U3 => {
            let (theta, phi, lam) = (angles[0], angles[1], angles[2]);
            let (s, co) = (theta / 2.0).sin_cos();
            [
                [c(co, 0.0), -phase(lam) * s],
                [phase(phi) * s, phase(phi + lam) * co],
            ]
        }
        _ => return None,
    };
    Some(m)
}

/// Runs `circuit` from |0…0⟩. `theta` must have exactly one entry per trainable slot.
pub fn run(circuit: &CircuitIR, theta: &[f64]) -> Result<StateVector, SimError> {
    if theta.len() != circuit.trainable_param_count {
        return Err(SimError::ThetaLength {
            expected: circuit.trainable_param_count,
            got: theta.len(),
        });
    }
    let mut state = StateVector::zero(circuit.num_qubits)?;
    for op in &circuit.ops {
        state.apply_gate(op, theta)?;
    }
    Ok(state)
}
