//! Gradients of the per-qubit Z expectations of an encoded program.
//!
//! The executed program is RX(enc[j]) on qubit j for every encoding angle, then
//! the candidate circuit, then a CX chain j → j+1 across the encoded qubits.
//! Every differentiable angle enters through a Pauli rotation (U1 and the φ, λ
//! of U2/U3 are Z rotations up to global phase; U3's θ is a Y rotation), so the
//! two-term shift at ±π/2 is exact for each one.

use std::f64::consts::FRAC_PI_2;

use thiserror::Error;

use crate::qasm::{CircuitIR, GateKind, GateOp, ParamValue};
use crate::sim::{self, SimError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GradError {
    #[error("shape mismatch for {what}: expected {expected}, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Mᵀ·v.
    pub fn transpose_mul(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (r, &vr) in v.iter().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (o, &m) in out.iter_mut().zip(row) {
                *o += m * vr;
            }
        }
        out
    }
}

/// ∂⟨Z_k⟩ with respect to circuit angles (`d_theta`, n × P) and encoding
/// angles (`d_encoding`, n × q).
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumJacobian {
    pub d_theta: Matrix,
    pub d_encoding: Matrix,
    /// Circuit executions spent producing this Jacobian.
    pub executions: usize,
}

/// A candidate circuit wrapped with angle encoding on its first `q` qubits and
/// the trailing CX chain. θ occupies slots `0..P`, encoding angles `P..P+q`.
#[derive(Debug, Clone)]
pub struct EncodedProgram {
    program: CircuitIR,
    num_theta: usize,
    num_encoding: usize,
}

impl EncodedProgram {
    pub fn new(circuit: &CircuitIR, q: usize) -> Result<Self, GradError> {
        if q > circuit.num_qubits {
            return Err(GradError::ShapeMismatch {
                what: "encoding width",
                expected: circuit.num_qubits,
                got: q,
            });
        }
        if circuit.has_nonunitary() {
            let op = circuit.ops.iter().find(|op| !op.kind.is_unitary()).unwrap();
            return Err(SimError::NonUnitary(op.kind).into());
        }
        let p = circuit.trainable_param_count;
        let mut ops = Vec::with_capacity(circuit.ops.len() + 2 * q);
        for j in 0..q {
            ops.push(GateOp::new(
                GateKind::Rx,
                vec![j],
                vec![ParamValue::Trainable { slot: p + j, init: 0.0 }],
            ));
        }
        ops.extend(circuit.ops.iter().cloned());
        for j in 0..q.saturating_sub(1) {
            ops.push(GateOp::fixed(GateKind::Cx, &[j, j + 1]));
        }
        let program = CircuitIR {
            source_id: circuit.source_id.clone(),
            num_qubits: circuit.num_qubits,
            ops,
            trainable_param_count: p + q,
        };
        Ok(EncodedProgram {
            program,
            num_theta: p,
            num_encoding: q,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.program.num_qubits
    }

    pub fn num_theta(&self) -> usize {
        self.num_theta
    }

    pub fn num_encoding(&self) -> usize {
        self.num_encoding
    }

    /// The full executed program, with encoding angles as trailing slots.
    pub fn program(&self) -> &CircuitIR {
        &self.program
    }

    fn pack(&self, theta: &[f64], encoding: &[f64]) -> Result<Vec<f64>, GradError> {
        if theta.len() != self.num_theta {
            return Err(GradError::ShapeMismatch {
                what: "theta",
                expected: self.num_theta,
                got: theta.len(),
            });
        }
        if encoding.len() != self.num_encoding {
            return Err(GradError::ShapeMismatch {
                what: "encoding angles",
                expected: self.num_encoding,
                got: encoding.len(),
            });
        }
        Ok(theta.iter().chain(encoding).copied().collect())
    }

    fn eval_packed(&self, params: &[f64]) -> Result<Vec<f64>, GradError> {
        Ok(sim::run(&self.program, params)?.expect_all_z())
    }

    /// ⟨Z_k⟩ for every qubit.
    pub fn expectations(&self, theta: &[f64], encoding: &[f64]) -> Result<Vec<f64>, GradError> {
        let packed = self.pack(theta, encoding)?;
        self.eval_packed(&packed)
    }

    fn jacobian_by<F>(&self, theta: &[f64], encoding: &[f64], column: F) -> Result<QuantumJacobian, GradError>
    where
        F: Fn(&mut Vec<f64>, usize) -> Result<Vec<f64>, GradError>,
    {
        let mut packed = self.pack(theta, encoding)?;
        let n = self.num_qubits();
        let mut d_theta = Matrix::zeros(n, self.num_theta);
        let mut d_encoding = Matrix::zeros(n, self.num_encoding);
        let mut executions = 0;
        for j in 0..packed.len() {
            let col = column(&mut packed, j)?;
            executions += 2;
            let (target, c) = if j < self.num_theta {
                (&mut d_theta, j)
            } else {
                (&mut d_encoding, j - self.num_theta)
            };
            for (k, v) in col.into_iter().enumerate() {
                target.set(k, c, v);
            }
        }
        Ok(QuantumJacobian {
            d_theta,
            d_encoding,
            executions,
        })
    }

    /// Two-term parameter-shift Jacobian: (E(p + π/2) − E(p − π/2)) / 2 per angle.
    pub fn param_shift_jacobian(&self, theta: &[f64], encoding: &[f64]) -> Result<QuantumJacobian, GradError> {
        self.jacobian_by(theta, encoding, |packed, j| {
            let orig = packed[j];
            packed[j] = orig + FRAC_PI_2;
            let plus = self.eval_packed(packed)?;
            packed[j] = orig - FRAC_PI_2;
            let minus = self.eval_packed(packed)?;
            packed[j] = orig;
            Ok(plus.iter().zip(&minus).map(|(p, m)| (p - m) / 2.0).collect())
        })
    }

    /// Central differences with step `h`.
    pub fn finite_diff_jacobian(&self, theta: &[f64], encoding: &[f64], h: f64) -> Result<QuantumJacobian, GradError> {
        assert!(h > 0.0, "finite-difference step must be positive");
        self.jacobian_by(theta, encoding, |packed, j| {
            let orig = packed[j];
            packed[j] = orig + h;
            let plus = self.eval_packed(packed)?;
            packed[j] = orig - h;
            let minus = self.eval_packed(packed)?;
            packed[j] = orig;
            Ok(plus.iter().zip(&minus).map(|(p, m)| (p - m) / (2.0 * h)).collect())
        })
    }
}

pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Parameter-shift Jacobian of the program built around `circuit` with
/// `encoding.len()` encoded qubits.
pub fn param_shift_jacobian(circuit: &CircuitIR, theta: &[f64], encoding: &[f64]) -> Result<QuantumJacobian, GradError> {
    EncodedProgram::new(circuit, encoding.len())?.param_shift_jacobian(theta, encoding)
}

pub fn finite_diff_jacobian(
    circuit: &CircuitIR,
    theta: &[f64],
    encoding: &[f64],
    h: f64,
) -> Result<QuantumJacobian, GradError> {
    EncodedProgram::new(circuit, encoding.len())?.finite_diff_jacobian(theta, encoding, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qasm::default_trainable_set;

    fn ry_circuit() -> CircuitIR {
        CircuitIR::new(
            "ry",
            1,
            vec![GateOp::new(
                GateKind::Ry,
                vec![0],
                vec![ParamValue::Trainable { slot: 0, init: 0.0 }],
            )],
        )
    }

    #[test]
    fn ry_derivative_is_minus_sine() {
        for t in [-2.0, -0.3, 0.0, 0.8, 2.9] {
            let j = param_shift_jacobian(&ry_circuit(), &[t], &[]).unwrap();
            assert!((j.d_theta.get(0, 0) + f64::sin(t)).abs() < 1e-14);
        }
        let j = param_shift_jacobian(&ry_circuit(), &[0.0], &[]).unwrap();
        assert_eq!(j.d_theta.get(0, 0), 0.0);
    }

    #[test]
    fn finite_difference_at_half_pi() {
        let j = finite_diff_jacobian(&ry_circuit(), &[FRAC_PI_2], &[], 1e-5).unwrap();
        assert!((j.d_theta.get(0, 0) + 1.0).abs() < 1e-8);
    }

    #[test]
    fn empty_circuit_zero_jacobian() {
        let c = CircuitIR::new("e", 3, vec![]);
        let j = finite_diff_jacobian(&c, &[], &[], 1e-5).unwrap();
        assert_eq!((j.d_theta.rows(), j.d_theta.cols()), (3, 0));
        assert_eq!((j.d_encoding.rows(), j.d_encoding.cols()), (3, 0));
    }

    #[test]
    fn execution_count() {
        let c = crate::qasm::parse_qasm("c", "qreg q[3]; ry(0.1) q[0]; u2(0.2,0.3) q[1]; cx q[1],q[2];")
            .unwrap()
            .mark_trainable(&default_trainable_set());
        let j = param_shift_jacobian(&c, &[0.1, 0.2, 0.3], &[0.4, 0.5]).unwrap();
        assert_eq!(j.executions, 2 * (3 + 2));
        assert_eq!((j.d_encoding.rows(), j.d_encoding.cols()), (3, 2));
    }

    #[test]
    fn shape_errors() {
        assert!(matches!(
            param_shift_jacobian(&ry_circuit(), &[], &[]),
            Err(GradError::ShapeMismatch { what: "theta", .. })
        ));
        assert!(matches!(
            param_shift_jacobian(&ry_circuit(), &[0.0], &[0.1, 0.2]),
            Err(GradError::ShapeMismatch { what: "encoding width", .. })
        ));
    }

    #[test]
    fn encoded_program_layout() {
        let c = CircuitIR::new("e", 3, vec![GateOp::fixed(GateKind::H, &[1])]);
        let p = EncodedProgram::new(&c, 3).unwrap();
        let kinds: Vec<GateKind> = p.program().ops.iter().map(|o| o.kind).collect();
        assert_eq!(
            kinds,
            vec![GateKind::Rx, GateKind::Rx, GateKind::Rx, GateKind::H, GateKind::Cx, GateKind::Cx]
        );
        assert_eq!(p.program().ops[5].qubits, vec![1, 2]);
    }

    #[test]
    fn transpose_mul() {
        let mut m = Matrix::zeros(2, 3);
        m.set(0, 0, 1.0);
        m.set(0, 2, 2.0);
        m.set(1, 1, 3.0);
        assert_eq!(m.transpose_mul(&[1.0, 2.0]), vec![1.0, 6.0, 2.0]);
    }
}
