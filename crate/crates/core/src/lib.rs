//! Screening of OpenQASM circuit corpora as the quantum layer of a hybrid
//! classifier.
//!
//! The crate covers every stage of a run: parsing circuits ([`qasm`]),
//! statevector simulation ([`sim`]), parameter-shift gradients ([`grad`]),
//! the classical layers ([`neural`]) and the hybrid model around them
//! ([`hybrid`]), tabular preprocessing ([`data`]), metrics ([`metrics`]),
//! filtering and screening ([`screening`]) and the artifact-writing stages
//! driven by the command line ([`pipeline`]).

pub mod config;
pub mod data;
pub mod grad;
pub mod hybrid;
pub mod metrics;
pub mod neural;
pub mod pipeline;
pub mod qasm;
pub mod screening;
pub mod sim;

pub use config::{derive_seed, RunConfig};
pub use data::{Dataset, SplitSet};
pub use hybrid::{HybridConfig, HybridModel, HybridParams, ModelConfig};
pub use metrics::EvalReport;
pub use qasm::{parse_qasm, CircuitIR, GateKind, GateOp, ParamValue};
pub use screening::{FilterConfig, TrainConfig};
pub use sim::StateVector;
