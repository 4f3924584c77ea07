//! Test-only oracles and fixtures. The dense simulator here builds every gate
//! as an explicit 2^n × 2^n matrix from Pauli algebra and Kronecker products,
//! sharing no code with the statevector kernels it checks.

#![allow(dead_code)]

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::path::{Path, PathBuf};

use num_complex::Complex64 as C;
use qscreen::config::RunConfig;
use qscreen::qasm::{CircuitIR, GateKind, GateOp, ParamValue};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub type M2 = [[C; 2]; 2];

fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

pub fn eye2() -> M2 {
    [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]]
}
pub fn pauli_x() -> M2 {
    [[c(0.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]]
}
pub fn pauli_y() -> M2 {
    [[c(0.0, 0.0), c(0.0, -1.0)], [c(0.0, 1.0), c(0.0, 0.0)]]
}
pub fn pauli_z() -> M2 {
    [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(-1.0, 0.0)]]
}
fn proj0() -> M2 {
    [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(0.0, 0.0)]]
}
fn proj1() -> M2 {
    [[c(0.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]]
}

fn lin2(a: C, x: &M2, b: C, y: &M2) -> M2 {
    let mut out = [[c(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a * x[i][j] + b * y[i][j];
        }
    }
    out
}

fn diag(a: C, b: C) -> M2 {
    [[a, c(0.0, 0.0)], [c(0.0, 0.0), b]]
}

fn mul2(a: &M2, b: &M2) -> M2 {
    let mut out = [[c(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// exp(−i a P / 2) = cos(a/2) I − i sin(a/2) P.
fn pauli_rotation(p: &M2, a: f64) -> M2 {
    lin2(c((a / 2.0).cos(), 0.0), &eye2(), c(0.0, -(a / 2.0).sin()), p)
}

/// U3(θ, φ, λ) = e^{i(φ+λ)/2} RZ(φ) RY(θ) RZ(λ).
fn u3(theta: f64, phi: f64, lam: f64) -> M2 {
    let m = mul2(
        &pauli_rotation(&pauli_z(), phi),
        &mul2(&pauli_rotation(&pauli_y(), theta), &pauli_rotation(&pauli_z(), lam)),
    );
    let g = C::from_polar(1.0, (phi + lam) / 2.0);
    lin2(g, &m, c(0.0, 0.0), &m)
}

/// The oracle's own single-qubit gate table.
pub fn oracle_matrix(kind: GateKind, a: &[f64]) -> M2 {
    let s = FRAC_1_SQRT_2;
    match kind {
        GateKind::H => lin2(c(s, 0.0), &pauli_x(), c(s, 0.0), &pauli_z()),
        GateKind::X => pauli_x(),
        GateKind::Y => pauli_y(),
        GateKind::Z => pauli_z(),
        GateKind::S => diag(c(1.0, 0.0), c(0.0, 1.0)),
        GateKind::Sdg => diag(c(1.0, 0.0), c(0.0, -1.0)),
        GateKind::T => diag(c(1.0, 0.0), C::from_polar(1.0, PI / 4.0)),
        GateKind::Tdg => diag(c(1.0, 0.0), C::from_polar(1.0, -PI / 4.0)),
        GateKind::Rx => pauli_rotation(&pauli_x(), a[0]),
        GateKind::Ry => pauli_rotation(&pauli_y(), a[0]),
        GateKind::Rz => pauli_rotation(&pauli_z(), a[0]),
        GateKind::U1 => diag(c(1.0, 0.0), C::from_polar(1.0, a[0])),
        GateKind::U2 => u3(PI / 2.0, a[0], a[1]),
        GateKind::U3 => u3(a[0], a[1], a[2]),
        other => panic!("{other:?} is not a single-qubit gate"),
    }
}

pub type Dense = Vec<Vec<C>>;

/// Kronecker embedding of single-qubit factors; qubit k is bit k of the
/// basis index, unlisted qubits carry the identity.
pub fn embed(n: usize, factors: &[(usize, M2)]) -> Dense {
    let dim = 1usize << n;
    let mut out = vec![vec![c(0.0, 0.0); dim]; dim];
    for (r, row) in out.iter_mut().enumerate() {
        for (col, cell) in row.iter_mut().enumerate() {
            let mut v = c(1.0, 0.0);
            for k in 0..n {
                let (rb, cb) = ((r >> k) & 1, (col >> k) & 1);
                let m = factors.iter().find(|(q, _)| *q == k).map(|(_, m)| m);
                v *= match m {
                    Some(m) => m[rb][cb],
                    None if rb == cb => c(1.0, 0.0),
                    None => c(0.0, 0.0),
                };
            }
            *cell = v;
        }
    }
    out
}

fn add(a: &Dense, b: &Dense, scale_b: C) -> Dense {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x + scale_b * y).collect())
        .collect()
}

/// Full-register matrix of one gate.
pub fn gate_dense(n: usize, kind: GateKind, qubits: &[usize], a: &[f64]) -> Dense {
    let one = c(1.0, 0.0);
    match kind {
        GateKind::Cx | GateKind::Cz => {
            let target = if kind == GateKind::Cx { pauli_x() } else { pauli_z() };
            let off = embed(n, &[(qubits[0], proj0())]);
            let on = embed(n, &[(qubits[0], proj1()), (qubits[1], target)]);
            add(&off, &on, one)
        }
        GateKind::Swap => {
            // (I + XX + YY + ZZ) / 2
            let (a0, b0) = (qubits[0], qubits[1]);
            let mut m = embed(n, &[]);
            for p in [pauli_x(), pauli_y(), pauli_z()] {
                m = add(&m, &embed(n, &[(a0, p), (b0, p)]), one);
            }
            m.iter()
                .map(|r| r.iter().map(|x| x * 0.5).collect())
                .collect()
        }
        GateKind::Ccx => {
            // I − P1 P1 (I − X)
            let both = embed(n, &[(qubits[0], proj1()), (qubits[1], proj1())]);
            let flip = embed(n, &[(qubits[0], proj1()), (qubits[1], proj1()), (qubits[2], pauli_x())]);
            add(&add(&embed(n, &[]), &both, c(-1.0, 0.0)), &flip, one)
        }
        _ => embed(n, &[(qubits[0], oracle_matrix(kind, a))]),
    }
}

pub fn matvec(m: &Dense, v: &[C]) -> Vec<C> {
    m.iter()
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

fn resolve(op: &GateOp, theta: &[f64]) -> Vec<f64> {
    op.params
        .iter()
        .map(|p| match p {
            ParamValue::Literal(v) => *v,
            ParamValue::Trainable { slot, .. } => theta[*slot],
        })
        .collect()
}

/// Final state of `circuit` from |0…0⟩ by a chain of dense matrix-vector products.
pub fn dense_run(circuit: &CircuitIR, theta: &[f64]) -> Vec<C> {
    let n = circuit.num_qubits;
    let mut v = vec![c(0.0, 0.0); 1 << n];
    v[0] = c(1.0, 0.0);
    for op in &circuit.ops {
        let m = gate_dense(n, op.kind, &op.qubits, &resolve(op, theta));
        v = matvec(&m, &v);
    }
    v
}

/// ⟨Z_k⟩ = Σ |a_i|² (−1)^{bit k of i}.
pub fn dense_expect_z(state: &[C], k: usize) -> f64 {
    state
        .iter()
        .enumerate()
        .map(|(i, a)| if (i >> k) & 1 == 0 { a.norm_sqr() } else { -a.norm_sqr() })
        .sum()
}

pub const UNITARY_KINDS: [GateKind; 18] = [
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
];

fn arity(kind: GateKind) -> usize {
    match kind {
        GateKind::Cx | GateKind::Cz | GateKind::Swap => 2,
        GateKind::Ccx => 3,
        _ => 1,
    }
}

fn angle_count(kind: GateKind) -> usize {
    match kind {
        GateKind::Rx | GateKind::Ry | GateKind::Rz | GateKind::U1 => 1,
        GateKind::U2 => 2,
        GateKind::U3 => 3,
        _ => 0,
    }
}

/// Random circuit over `kinds` with literal angles in (−2π, 2π).
pub fn random_circuit(rng: &mut impl Rng, n: usize, gates: usize, kinds: &[GateKind]) -> CircuitIR {
    let mut ops = Vec::with_capacity(gates);
    while ops.len() < gates {
        let kind = kinds[rng.random_range(0..kinds.len())];
        if arity(kind) > n {
            continue;
        }
        let mut qubits: Vec<usize> = (0..n).collect();
        for i in 0..arity(kind) {
            let j = rng.random_range(i..n);
            qubits.swap(i, j);
        }
        qubits.truncate(arity(kind));
        let angles: Vec<f64> = (0..angle_count(kind)).map(|_| rng.random_range(-2.0 * PI..2.0 * PI)).collect();
        ops.push(GateOp::with_angles(kind, &qubits, &angles));
    }
    CircuitIR::new("random", n, ops)
}

pub fn max_amp_err(a: &[C], b: &[C]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Fixtures

pub const NUM_FEATURES: usize = 28;

/// Two Gaussian blobs in 28 dimensions with means ±1 and unit variance,
/// written as a V1..V28 + Class CSV (with unused Time/Amount columns).
pub fn write_blobs_csv(path: &Path, class0: usize, class1: usize, seed: u64) {
    write_blobs_csv_sep(path, class0, class1, seed, 1.0)
}

/// As [`write_blobs_csv`] with class means at ±`sep`.
pub fn write_blobs_csv_sep(path: &Path, class0: usize, class1: usize, seed: u64, sep: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut text = String::from("Time");
    for i in 1..=NUM_FEATURES {
        text.push_str(&format!(",V{i}"));
    }
    text.push_str(",Amount,Class\n");
    let total = class0 + class1;
    for i in 0..total {
        let label = u8::from(i >= class0);
        let mean = if label == 1 { sep } else { -sep };
        text.push_str(&i.to_string());
        for _ in 0..NUM_FEATURES {
            let v: f64 = mean + noise.sample(&mut rng);
            text.push_str(&format!(",{v}"));
        }
        text.push_str(&format!(",{:.2},{label}\n", rng.random_range(0.0..100.0)));
    }
    std::fs::write(path, text).unwrap();
}

pub const TOY_CIRCUITS: [(&str, &str); 3] = [
    (
        "toy_a",
        "OPENQASM 2.0;\ninclude \"qelib1.inc\";\nqreg q[3];\nry(0.3) q[0];\ncx q[0],q[1];\nrz(0.2) q[2];\ncx q[1],q[2];\n",
    ),
    (
        "toy_b",
        "OPENQASM 2.0;\ninclude \"qelib1.inc\";\nqreg q[3];\nh q[0];\nry(0.1) q[1];\nu2(0,pi) q[2];\ncx q[2],q[0];\n",
    ),
    (
        "toy_c",
        "OPENQASM 2.0;\ninclude \"qelib1.inc\";\nqreg q[3];\ncreg c[3];\nrx(0.4) q[0];\nry(0.5) q[1];\nry(-0.5) q[2];\ncz q[0],q[2];\nmeasure q -> c;\n",
    ),
];

pub fn write_corpus(dir: &Path, files: &[(&str, &str)]) {
    std::fs::create_dir_all(dir).unwrap();
    for (id, text) in files {
        std::fs::write(dir.join(format!("{id}.qasm")), text).unwrap();
    }
}

/// 150 + 60 raw rows balanced to 150 per class and split 100/20/30 per class,
/// giving 200 train / 40 val / 60 test rows.
pub fn fixture_config(root: &Path, data_seed: u64) -> RunConfig {
    let data_csv = root.join("data.csv");
    if !data_csv.exists() {
        write_blobs_csv(&data_csv, 150, 60, data_seed);
    }
    let corpus = root.join("corpus");
    if !corpus.exists() {
        write_corpus(&corpus, &TOY_CIRCUITS);
    }
    let mut cfg = RunConfig::default();
    cfg.paths.data_csv = data_csv;
    cfg.paths.corpus_dir = corpus;
    cfg.paths.output_dir = root.join("out");
    cfg.data.samples_per_class = 150;
    cfg.data.split_ratios = [2.0 / 3.0, 2.0 / 15.0, 1.0 / 5.0];
    cfg.seed = 7;
    cfg
}

/// Every regular file under `dir`, relative paths sorted.
pub fn list_files(dir: &Path) -> Vec<PathBuf> {
    fn walk(base: &Path, dir: &Path, out: &mut Vec<PathBuf>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(base, &p, out);
            } else {
                out.push(p.strip_prefix(base).unwrap().to_path_buf());
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}
