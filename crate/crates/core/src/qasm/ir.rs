use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Gate kinds understood by the frontend and the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum GateKind {
    H,
    X,
    Y,
    Z,
    S,
    Sdg,
    T,
    Tdg,
    Rx,
    Ry,
    Rz,
    U1,
    U2,
    U3,
    Cx,
    Cz,
    Swap,
    Ccx,
    Barrier,
    Measure,
    Reset,
}

impl GateKind {
    pub const ALL: [GateKind; 21] = [
        GateKind::H,
        GateKind::X,
        GateKind::Y,
        GateKind::Z,
        GateKind::S,
        GateKind::Sdg,
        GateKind::T,
        GateKind::Tdg,
        GateKind::Rx,
        GateKind::Ry,
        GateKind::Rz,
        GateKind::U1,
        GateKind::U2,
        GateKind::U3,
        GateKind::Cx,
        GateKind::Cz,
        GateKind::Swap,
        GateKind::Ccx,
        GateKind::Barrier,
        GateKind::Measure,
        GateKind::Reset,
    ];

    /// Number of qubits the gate acts on. `None` for variadic barriers.
    pub fn qubit_arity(self) -> Option<usize> {
        match self {
            GateKind::Cx | GateKind::Cz | GateKind::Swap => Some(2),
            GateKind::Ccx => Some(3),
            GateKind::Barrier => None,
            _ => Some(1),
        }
    }

    /// Number of angle parameters (δ in the parameter-count constraint).
    pub fn param_arity(self) -> usize {
        match self {
            GateKind::Rx | GateKind::Ry | GateKind::Rz | GateKind::U1 => 1,
            GateKind::U2 => 2,
            GateKind::U3 => 3,
            _ => 0,
        }
    }

    pub fn is_parametric(self) -> bool {
        self.param_arity() > 0
    }

    pub fn is_unitary(self) -> bool {
        !matches!(self, GateKind::Barrier | GateKind::Measure | GateKind::Reset)
    }

    /// Lower-case OpenQASM 2.0 spelling.
    pub fn qasm_name(self) -> &'static str {
        match self {
            GateKind::H => "h",
            GateKind::X => "x",
            GateKind::Y => "y",
            GateKind::Z => "z",
            GateKind::S => "s",
            GateKind::Sdg => "sdg",
            GateKind::T => "t",
            GateKind::Tdg => "tdg",
            GateKind::Rx => "rx",
            GateKind::Ry => "ry",
            GateKind::Rz => "rz",
            GateKind::U1 => "u1",
            GateKind::U2 => "u2",
            GateKind::U3 => "u3",
            GateKind::Cx => "cx",
            GateKind::Cz => "cz",
            GateKind::Swap => "swap",
            GateKind::Ccx => "ccx",
            GateKind::Barrier => "barrier",
            GateKind::Measure => "measure",
            GateKind::Reset => "reset",
        }
    }

    /// Resolves a gate-call identifier. `U` and `CX` are the OpenQASM 2.0 builtins.
    pub fn from_gate_name(name: &str) -> Option<GateKind> {
        let kind = match name {
            "U" => GateKind::U3,
            "CX" => GateKind::Cx,
            "barrier" | "measure" | "reset" => return None,
            other => *GateKind::ALL.iter().find(|k| k.qasm_name() == other)?,
        };
        Some(kind)
    }
}

/// The default trainable set: RY, RZ and U2.
pub fn default_trainable_set() -> BTreeSet<GateKind> {
    [GateKind::Ry, GateKind::Rz, GateKind::U2].into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamValue {
    Literal(f64),
    /// Index into θ, plus the literal angle found in the source (usable as a warm start).
    Trainable { slot: usize, init: f64 },
}

impl ParamValue {
    /// The angle written in the source text.
    pub fn literal_angle(&self) -> f64 {
        match *self {
            ParamValue::Literal(a) => a,
            ParamValue::Trainable { init, .. } => init,
        }
    }

    pub fn slot(&self) -> Option<usize> {
        match *self {
            ParamValue::Trainable { slot, .. } => Some(slot),
            ParamValue::Literal(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateOp {
    pub kind: GateKind,
    pub qubits: Vec<usize>,
    pub params: Vec<ParamValue>,
}

impl GateOp {
    pub fn new(kind: GateKind, qubits: Vec<usize>, params: Vec<ParamValue>) -> Self {
        debug_assert_eq!(params.len(), kind.param_arity());
        GateOp {
            kind,
            qubits,
            params,
        }
    }

    /// Non-parametric gate.
    pub fn fixed(kind: GateKind, qubits: &[usize]) -> Self {
        GateOp::new(kind, qubits.to_vec(), Vec::new())
    }

    pub fn with_angles(kind: GateKind, qubits: &[usize], angles: &[f64]) -> Self {
        GateOp::new(
            kind,
            qubits.to_vec(),
            angles.iter().map(|&a| ParamValue::Literal(a)).collect(),
        )
    }

    pub fn is_trainable(&self) -> bool {
        self.params.iter().any(|p| p.slot().is_some())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CircuitIR {
    pub source_id: String,
    pub num_qubits: usize,
    pub ops: Vec<GateOp>,
    pub trainable_param_count: usize,
}

impl CircuitIR {
    pub fn new(source_id: impl Into<String>, num_qubits: usize, ops: Vec<GateOp>) -> Self {
        let mut circuit = CircuitIR {
            source_id: source_id.into(),
            num_qubits,
            ops,
            trainable_param_count: 0,
        };
        circuit.trainable_param_count = circuit.count_trainable_params();
        circuit
    }

    /// Σ δ(kind) over ops carrying trainable parameters.
    pub fn count_trainable_params(&self) -> usize {
        self.ops
            .iter()
            .filter(|op| op.is_trainable())
            .map(|op| op.kind.param_arity())
            .sum()
    }

    /// Turns every parameter of every gate whose kind is in `trainable_set` into a
    /// θ slot, numbered in program order. Other parametric gates stay frozen.
    pub fn mark_trainable(&self, trainable_set: &BTreeSet<GateKind>) -> CircuitIR {
        let mut next_slot = 0;
        let ops = self
            .ops
            .iter()
            .map(|op| {
                let train = trainable_set.contains(&op.kind);
                let params = op
                    .params
                    .iter()
                    .map(|p| {
                        let init = p.literal_angle();
                        if train {
                            let slot = next_slot;
                            next_slot += 1;
                            ParamValue::Trainable { slot, init }
                        } else {
                            ParamValue::Literal(init)
                        }
                    })
                    .collect();
                GateOp {
                    kind: op.kind,
                    qubits: op.qubits.clone(),
                    params,
                }
            })
            .collect();
        CircuitIR {
            source_id: self.source_id.clone(),
            num_qubits: self.num_qubits,
            ops,
            trainable_param_count: next_slot,
        }
    }

    /// Drops barriers, measurements and resets.
    pub fn strip_nonunitary(&self) -> CircuitIR {
        let ops = self
            .ops
            .iter()
            .filter(|op| op.kind.is_unitary())
            .cloned()
            .collect();
        CircuitIR {
            source_id: self.source_id.clone(),
            num_qubits: self.num_qubits,
            ops,
            trainable_param_count: self.trainable_param_count,
        }
    }

    pub fn has_nonunitary(&self) -> bool {
        self.ops.iter().any(|op| !op.kind.is_unitary())
    }

    /// The literal angles recorded for each θ slot, in slot order.
    pub fn initial_theta(&self) -> Vec<f64> {
        let mut theta = vec![0.0; self.trainable_param_count];
        for p in self.ops.iter().flat_map(|op| op.params.iter()) {
            if let ParamValue::Trainable { slot, init } = *p {
                theta[slot] = init;
            }
        }
        theta
    }

    /// Canonical OpenQASM 2.0 text. Trainable parameters are written as their
    /// recorded literal angle.
    pub fn to_qasm(&self) -> String {
        let mut out = String::new();
        out.push_str("OPENQASM 2.0;\ninclude \"qelib1.inc\";\n");
        let _ = writeln!(out, "qreg q[{}];", self.num_qubits);
        if self.ops.iter().any(|op| op.kind == GateKind::Measure) {
            let _ = writeln!(out, "creg c[{}];", self.num_qubits);
        }
        for op in &self.ops {
            let qubits = op
                .qubits
                .iter()
                .map(|q| format!("q[{q}]"))
                .collect::<Vec<_>>()
                .join(",");
            match op.kind {
                GateKind::Measure => {
                    let _ = writeln!(out, "measure q[{0}] -> c[{0}];", op.qubits[0]);
                }
                _ if op.params.is_empty() => {
                    let _ = writeln!(out, "{} {};", op.kind.qasm_name(), qubits);
                }
                _ => {
                    let angles = op
                        .params
                        .iter()
                        .map(|p| format_angle(p.literal_angle()))
                        .collect::<Vec<_>>()
                        .join(",");
                    let _ = writeln!(out, "{}({}) {};", op.kind.qasm_name(), angles, qubits);
                }
            }
        }
        out
    }
}

fn format_angle(a: f64) -> String {
    if a.is_nan() {
        "(0/0)".to_string()
    } else if a.is_infinite() {
        if a > 0.0 { "(1/0)" } else { "(-1/0)" }.to_string()
    } else {
        // `{:?}` is the shortest representation that parses back to the same f64.
        format!("{a:?}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arities() {
        assert_eq!(GateKind::Ccx.qubit_arity(), Some(3));
        assert_eq!(GateKind::Swap.qubit_arity(), Some(2));
        assert_eq!(GateKind::U2.param_arity(), 2);
        assert_eq!(GateKind::U3.param_arity(), 3);
        assert_eq!(GateKind::H.param_arity(), 0);
        assert!(!GateKind::Measure.is_unitary());
    }

    #[test]
    fn mark_trainable_only_touches_the_set() {
        let c = CircuitIR::new(
            "t",
            1,
            vec![
                GateOp::with_angles(GateKind::Ry, &[0], &[0.5]),
                GateOp::with_angles(GateKind::Rx, &[0], &[0.3]),
            ],
        );
        let m = c.mark_trainable(&default_trainable_set());
        assert_eq!(m.trainable_param_count, 1);
        assert_eq!(m.ops[0].params[0], ParamValue::Trainable { slot: 0, init: 0.5 });
        assert_eq!(m.ops[1].params[0], ParamValue::Literal(0.3));
        assert_eq!(m.initial_theta(), vec![0.5]);
    }

    #[test]
    fn u2_takes_two_slots() {
        let c = CircuitIR::new(
            "u2",
            2,
            vec![
                GateOp::with_angles(GateKind::U2, &[1], &[0.1, 0.2]),
                GateOp::with_angles(GateKind::Rz, &[0], &[0.7]),
            ],
        );
        let m = c.mark_trainable(&default_trainable_set());
        assert_eq!(m.trainable_param_count, 3);
        assert_eq!(m.ops[0].params[1].slot(), Some(1));
        assert_eq!(m.ops[1].params[0].slot(), Some(2));
    }

    #[test]
    fn non_parametric_circuit_has_no_params() {
        let c = CircuitIR::new(
            "c",
            2,
            vec![GateOp::fixed(GateKind::H, &[0]), GateOp::fixed(GateKind::Cx, &[0, 1])],
        );
        assert_eq!(c.mark_trainable(&default_trainable_set()).trainable_param_count, 0);
    }

    #[test]
    fn strip_removes_only_nonunitary() {
        let c = CircuitIR::new(
            "s",
            2,
            vec![
                GateOp::fixed(GateKind::H, &[0]),
                GateOp::fixed(GateKind::Barrier, &[0, 1]),
                GateOp::fixed(GateKind::Measure, &[0]),
            ],
        );
        let s = c.strip_nonunitary();
        assert_eq!(s.ops, vec![GateOp::fixed(GateKind::H, &[0])]);
        assert_eq!(s.strip_nonunitary(), s);

        let only_measure = CircuitIR::new("m", 1, vec![GateOp::fixed(GateKind::Measure, &[0])]);
        assert!(only_measure.strip_nonunitary().ops.is_empty());
    }
}
