//! OpenQASM 2.0 frontend.
//!
//! Parses the standard-gate subset produced by circuit generators into a flat
//! [`CircuitIR`]. Multiple quantum registers share one index space in
//! declaration order; classical registers are checked and otherwise ignored.
//! User `gate` definitions are inlined when their bodies reduce to supported
//! kinds.

mod ir;
mod lexer;
mod parser;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use ir::{default_trainable_set, CircuitIR, GateKind, GateOp, ParamValue};
pub use parser::parse_qasm;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QasmError {
    #[error("syntax error on line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unsupported gate `{0}`")]
    UnsupportedGate(String),
    #[error("line {line}: qubit {register}[{index}] out of range (register size {size})")]
    QubitOutOfRange {
        register: String,
        index: usize,
        size: usize,
        line: usize,
    },
}

impl QasmError {
    pub(crate) fn syntax(line: usize, message: impl Into<String>) -> Self {
        QasmError::Syntax {
            line,
            message: message.into(),
        }
    }
}

/// One `.qasm` file of a corpus directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusEntry {
    pub source_id: String,
    pub path: PathBuf,
}

/// Lists `*.qasm` files in `dir` in lexicographic filename order. The file stem
/// becomes the circuit's source id.
pub fn scan_corpus(dir: &Path) -> std::io::Result<Vec<CorpusEntry>> {
    let mut entries = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if !path.is_file() || path.extension().and_then(|e| e.to_str()) != Some("qasm") {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            entries.push(CorpusEntry {
                source_id: stem.to_string(),
                path,
            });
        }
    }
    entries.sort_by(|a, b| a.source_id.cmp(&b.source_id));
    Ok(entries)
}
