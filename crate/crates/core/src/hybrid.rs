//! The hybrid classifier wrapped around each candidate circuit.
//!
//! `x → pre-NN → z_classical → RX encoding → circuit → CX chain → ⟨Z⟩ = z_quantum`,
//! then `z_res = z_quantum + α·z_classical` (or `z_res = z_quantum` with the skip
//! removed) and `post-NN(z_res)` gives one logit.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grad::{EncodedProgram, GradError};
use crate::neural::{self, Activation, DenseCache, DenseGrads, DenseLayer, NeuralError};
use crate::qasm::CircuitIR;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Quantum(#[from] GradError),
    #[error("shape mismatch for {what}: expected {expected}, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

/// Architecture settings shared by every candidate (the qubit width comes from the circuit).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden1: usize,
    pub hidden2: usize,
    pub skip_enabled: bool,
    pub alpha_init: f64,
    /// Start θ from the angles written in the QASM source instead of zeros.
    pub warm_start: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden1: 64,
            hidden2: 16,
            skip_enabled: true,
            alpha_init: 0.1,
            warm_start: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridConfig {
    pub num_features: usize,
    pub qubit_width: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    pub skip_enabled: bool,
    pub alpha_init: f64,
    pub warm_start: bool,
}

impl HybridConfig {
    pub fn new(model: &ModelConfig, num_features: usize, qubit_width: usize) -> Self {
        HybridConfig {
            num_features,
            qubit_width,
            hidden1: model.hidden1,
            hidden2: model.hidden2,
            skip_enabled: model.skip_enabled,
            alpha_init: model.alpha_init,
            warm_start: model.warm_start,
        }
    }
}

/// All trainable values.
///
/// Flat layout (used by checkpoints and the optimizer): pre-NN layer 1 weights
/// (row-major) and biases, pre-NN layer 2 weights and biases, θ, α, post-NN
/// layer 1 weights and biases, post-NN layer 2 weights and biases. The α slot is
/// always present; it is frozen when the skip connection is disabled.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridParams {
    pub pre: [DenseLayer; 2],
    pub theta: Vec<f64>,
    pub alpha: f64,
    pub post: [DenseLayer; 2],
}

impl HybridParams {
    pub fn init<R: Rng + ?Sized>(config: &HybridConfig, circuit: &CircuitIR, rng: &mut R) -> Self {
        let (f, q, h1, h2) = (
            config.num_features,
            config.qubit_width,
            config.hidden1,
            config.hidden2,
        );
        let pre = [
            DenseLayer::init(f, h1, Activation::ReLU, rng),
            DenseLayer::init(h1, q, Activation::Identity, rng),
        ];
        let post = [
            DenseLayer::init(q, h2, Activation::ReLU, rng),
            DenseLayer::init(h2, 1, Activation::Identity, rng),
        ];
        let theta = if config.warm_start {
            circuit.initial_theta()
        } else {
            vec![0.0; circuit.trainable_param_count]
        };
        HybridParams {
            pre,
            theta,
            alpha: config.alpha_init,
            post,
        }
    }

    pub fn num_flat(config: &HybridConfig, num_theta: usize) -> usize {
        let (f, q, h1, h2) = (
            config.num_features,
            config.qubit_width,
            config.hidden1,
            config.hidden2,
        );
        (f * h1 + h1) + (h1 * q + q) + num_theta + 1 + (q * h2 + h2) + (h2 + 1)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.pre {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out.extend_from_slice(&self.theta);
        out.push(self.alpha);
        for l in &self.post {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn from_flat(config: &HybridConfig, num_theta: usize, flat: &[f64]) -> Result<Self, ModelError> {
        let expected = Self::num_flat(config, num_theta);
        if flat.len() != expected {
            return Err(ModelError::ShapeMismatch {
                what: "flat parameter vector",
                expected,
                got: flat.len(),
            });
        }
        let mut rest = flat;
        let mut take = |n: usize| {
            let (head, tail) = rest.split_at(n);
            rest = tail;
            head.to_vec()
        };
        let layer = |take: &mut dyn FnMut(usize) -> Vec<f64>, i: usize, o: usize, act| -> Result<DenseLayer, ModelError> {
            let w = take(i * o);
            let b = take(o);
            Ok(DenseLayer::from_parts(i, o, act, w, b)?)
        };
        let (f, q, h1, h2) = (
            config.num_features,
            config.qubit_width,
            config.hidden1,
            config.hidden2,
        );
        let pre = [
            layer(&mut take, f, h1, Activation::ReLU)?,
            layer(&mut take, h1, q, Activation::Identity)?,
        ];
        let theta = take(num_theta);
        let alpha = take(1)[0];
        let post = [
            layer(&mut take, q, h2, Activation::ReLU)?,
            layer(&mut take, h2, 1, Activation::Identity)?,
        ];
        Ok(HybridParams {
            pre,
            theta,
            alpha,
            post,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    pub z_classical: Vec<f64>,
    pub z_quantum: Vec<f64>,
    pub z_res: Vec<f64>,
    pub logit: f64,
    pre: [DenseCache; 2],
    post: [DenseCache; 2],
}

/// Gradients of the per-sample loss. `alpha` is `None` when the skip is disabled.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridGrads {
    pub loss: f64,
    pub pre: [DenseGrads; 2],
    pub theta: Vec<f64>,
    pub alpha: Option<f64>,
    pub post: [DenseGrads; 2],
    /// ∂loss/∂z_res.
    pub d_z_res: Vec<f64>,
}

impl HybridGrads {
    /// Same layout as [`HybridParams::to_flat`]; a disabled α contributes 0.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in &self.pre {
            out.extend_from_slice(&g.d_weights);
            out.extend_from_slice(&g.d_biases);
        }
        out.extend_from_slice(&self.theta);
        out.push(self.alpha.unwrap_or(0.0));
        for g in &self.post {
            out.extend_from_slice(&g.d_weights);
            out.extend_from_slice(&g.d_biases);
        }
        out
    }
}

/// A candidate circuit bound into the hybrid architecture.
#[derive(Debug, Clone)]
pub struct HybridModel {
    config: HybridConfig,
    program: EncodedProgram,
}

impl HybridModel {
    pub fn new(config: HybridConfig, circuit: &CircuitIR) -> Result<Self, ModelError> {
        if config.qubit_width != circuit.num_qubits {
            return Err(ModelError::ShapeMismatch {
                what: "qubit width",
                expected: circuit.num_qubits,
                got: config.qubit_width,
            });
        }
        let program = EncodedProgram::new(circuit, config.qubit_width)?;
        Ok(HybridModel { config, program })
    }

    pub fn config(&self) -> &HybridConfig {
        &self.config
    }

    pub fn num_theta(&self) -> usize {
        self.program.num_theta()
    }

    pub fn num_flat_params(&self) -> usize {
        HybridParams::num_flat(&self.config, self.num_theta())
    }

    pub fn forward(&self, params: &HybridParams, x: &[f64]) -> Result<(f64, ForwardCache), ModelError> {
        if x.len() != self.config.num_features {
            return Err(ModelError::ShapeMismatch {
                what: "feature vector",
                expected: self.config.num_features,
                got: x.len(),
            });
        }
        let (h, pre0) = params.pre[0].forward(x)?;
        let (z_classical, pre1) = params.pre[1].forward(&h)?;
        let z_quantum = self.program.expectations(&params.theta, &z_classical)?;
        let z_res: Vec<f64> = if self.config.skip_enabled {
            z_quantum
                .iter()
                .zip(&z_classical)
                .map(|(zq, zc)| zq + params.alpha * zc)
                .collect()
        } else {
            z_quantum.clone()
        };
        let (h2, post0) = params.post[0].forward(&z_res)?;
        let (out, post1) = params.post[1].forward(&h2)?;
        let logit = out[0];
        Ok((
            logit,
            ForwardCache {
                z_classical,
                z_quantum,
                z_res,
                logit,
                pre: [pre0, pre1],
                post: [post0, post1],
            },
        ))
    }

    pub fn backward(&self, params: &HybridParams, cache: &ForwardCache, label: u8) -> Result<HybridGrads, ModelError> {
        let (loss, d_logit) = neural::bce_with_logits(cache.logit, label);
        let post1 = params.post[1].backward(&cache.post[1], &[d_logit])?;
        let post0 = params.post[0].backward(&cache.post[0], &post1.d_input)?;
        let d_z_res = post0.d_input.clone();

        let jac = self
            .program
            .param_shift_jacobian(&params.theta, &cache.z_classical)?;
        let theta = jac.d_theta.transpose_mul(&d_z_res);
        let mut d_z_classical = jac.d_encoding.transpose_mul(&d_z_res);
        let alpha = if self.config.skip_enabled {
            for (d, g) in d_z_classical.iter_mut().zip(&d_z_res) {
                *d += params.alpha * g;
            }
            Some(d_z_res.iter().zip(&cache.z_classical).map(|(g, z)| g * z).sum())
        } else {
            None
        };

        let pre1 = params.pre[1].backward(&cache.pre[1], &d_z_classical)?;
        let pre0 = params.pre[0].backward(&cache.pre[0], &pre1.d_input)?;
        Ok(HybridGrads {
            loss,
            pre: [pre0, pre1],
            theta,
            alpha,
            post: [post0, post1],
            d_z_res,
        })
    }

    pub fn logit(&self, params: &HybridParams, x: &[f64]) -> Result<f64, ModelError> {
        Ok(self.forward(params, x)?.0)
    }

    pub fn predict_proba(&self, params: &HybridParams, x: &[f64]) -> Result<f64, ModelError> {
        Ok(neural::sigmoid(self.logit(params, x)?))
    }
}
