//! Dense layers, logistic loss and Adam for the classical halves of the model.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NeuralError {
    #[error("shape mismatch for {what}: expected {expected}, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), NeuralError> {
    if expected == got {
        Ok(())
    } else {
        Err(NeuralError::ShapeMismatch { what, expected, got })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    ReLU,
    Identity,
}

/// Fully-connected layer, weights stored row-major as out × in.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    in_dim: usize,
    out_dim: usize,
    activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseCache {
    input: Vec<f64>,
    pre_activation: Vec<f64>,
}

impl DenseCache {
    pub fn pre_activation(&self) -> &[f64] {
        &self.pre_activation
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub d_weights: Vec<f64>,
    pub d_biases: Vec<f64>,
    pub d_input: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        DenseLayer {
            weights: vec![0.0; in_dim * out_dim],
            biases: vec![0.0; out_dim],
            in_dim,
            out_dim,
            activation,
        }
    }

    pub fn from_parts(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        weights: Vec<f64>,
        biases: Vec<f64>,
    ) -> Result<Self, NeuralError> {
        check_len("weights", in_dim * out_dim, weights.len())?;
        check_len("biases", out_dim, biases.len())?;
        Ok(DenseLayer {
            weights,
            biases,
            in_dim,
            out_dim,
            activation,
        })
    }

    /// Weights uniform in ±1/√in_dim, biases zero.
    pub fn init<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut R) -> Self {
        DenseLayer {
            weights: init_uniform(in_dim * out_dim, in_dim, rng),
            biases: vec![0.0; out_dim],
            in_dim,
            out_dim,
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, DenseCache), NeuralError> {
        check_len("layer input", self.in_dim, x.len())?;
        let pre: Vec<f64> = self
            .weights
            .chunks_exact(self.in_dim.max(1))
            .take(self.out_dim)
            .zip(&self.biases)
            .map(|(row, b)| row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b)
            .collect();
        let y = match self.activation {
            Activation::Identity => pre.clone(),
            Activation::ReLU => pre.iter().map(|&v| v.max(0.0)).collect(),
        };
        Ok((
            y,
            DenseCache {
                input: x.to_vec(),
                pre_activation: pre,
            },
        ))
    }

    pub fn backward(&self, cache: &DenseCache, upstream: &[f64]) -> Result<DenseGrads, NeuralError> {
        check_len("upstream gradient", self.out_dim, upstream.len())?;
        check_len("cached input", self.in_dim, cache.input.len())?;
        let d_pre: Vec<f64> = match self.activation {
            Activation::Identity => upstream.to_vec(),
            Activation::ReLU => upstream
                .iter()
                .zip(&cache.pre_activation)
                .map(|(&g, &z)| if z > 0.0 { g } else { 0.0 })
                .collect(),
        };
        let mut d_weights = vec![0.0; self.weights.len()];
        let mut d_input = vec![0.0; self.in_dim];
        for (o, &g) in d_pre.iter().enumerate() {
            let row = o * self.in_dim..(o + 1) * self.in_dim;
            for ((dw, &x), (dx, &w)) in d_weights[row.clone()]
                .iter_mut()
                .zip(&cache.input)
                .zip(d_input.iter_mut().zip(&self.weights[row]))
            {
                *dw = g * x;
                *dx += w * g;
            }
        }
        Ok(DenseGrads {
            d_weights,
            d_biases: d_pre,
            d_input,
        })
    }
}

/// Uniform samples in [−1/√fan_in, 1/√fan_in].
pub fn init_uniform<R: Rng + ?Sized>(len: usize, fan_in: usize, rng: &mut R) -> Vec<f64> {
    assert!(fan_in >= 1, "fan_in must be positive");
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..len).map(|_| rng.random_range(-bound..=bound)).collect()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy on a raw logit, returning (loss, ∂loss/∂logit).
pub fn bce_with_logits(logit: f64, label: u8) -> (f64, f64) {
    let y = f64::from(label);
    let loss = logit.max(0.0) - logit * y + (-logit.abs()).exp().ln_1p();
    (loss, sigmoid(logit) - y)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
}

impl AdamState {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        AdamState {
            config,
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step_count: 0,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState) -> Result<(), NeuralError> {
    check_len("gradient", params.len(), grads.len())?;
    check_len("adam moments", params.len(), state.first_moment.len())?;
    state.step_count += 1;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    let t = i32::try_from(state.step_count).unwrap_or(i32::MAX);
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.first_moment.iter_mut())
        .zip(state.second_moment.iter_mut())
    {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_layer_passes_through() {
        let mut layer = DenseLayer::zeros(3, 3, Activation::Identity);
        for i in 0..3 {
            layer.weights[i * 3 + i] = 1.0;
        }
        let (y, _) = layer.forward(&[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(y, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn relu_clamps() {
        let layer = DenseLayer::from_parts(1, 2, Activation::ReLU, vec![1.0, 1.0], vec![-2.0, 1.0]).unwrap();
        let (y, cache) = layer.forward(&[1.0]).unwrap();
        assert_eq!(cache.pre_activation(), &[-1.0, 2.0]);
        assert_eq!(y, vec![0.0, 2.0]);
        let g = layer.backward(&cache, &[5.0, 3.0]).unwrap();
        assert_eq!(g.d_biases, vec![0.0, 3.0]);
        assert_eq!(g.d_weights, vec![0.0, 3.0]);
        assert_eq!(g.d_input, vec![3.0]);
    }

    #[test]
    fn identity_backward_is_affine_derivative() {
        let layer =
            DenseLayer::from_parts(2, 2, Activation::Identity, vec![1.0, 2.0, 3.0, 4.0], vec![0.0, 0.0]).unwrap();
        let (_, cache) = layer.forward(&[0.5, -1.0]).unwrap();
        let g = layer.backward(&cache, &[1.0, 2.0]).unwrap();
        // g·xᵀ and Wᵀ·g
        assert_eq!(g.d_weights, vec![0.5, -1.0, 1.0, -2.0]);
        assert_eq!(g.d_input, vec![7.0, 10.0]);
    }

    #[test]
    fn shape_mismatch() {
        let layer = DenseLayer::zeros(3, 2, Activation::ReLU);
        assert!(layer.forward(&[1.0]).is_err());
        let (_, cache) = layer.forward(&[1.0, 2.0, 3.0]).unwrap();
        assert!(layer.backward(&cache, &[1.0]).is_err());
    }

    #[test]
    fn bce_values() {
        let (l, d) = bce_with_logits(0.0, 1);
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(d, -0.5);
        let (l, d) = bce_with_logits(50.0, 1);
        assert!((0.0..1e-20).contains(&l));
        assert!(d.abs() < 1e-20);
        let (l, _) = bce_with_logits(-3.0, 0);
        assert!((l - (1.0 + (-3.0f64).exp()).ln()).abs() < 1e-15);
        assert!((l - 0.048587).abs() < 1e-6);
        for z in [-1e4, -700.0, 700.0, 1e4] {
            for y in [0, 1] {
                let (l, d) = bce_with_logits(z, y);
                assert!(l.is_finite() && d.is_finite());
            }
        }
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(10.0) - 0.999_954_602_131_297_6).abs() < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn adam_first_step_magnitude_is_lr() {
        for g in [1e-3, -0.5, 3.0, -1e4] {
            let mut p = [1.0];
            let mut s = AdamState::new(1, AdamConfig::default());
            adam_step(&mut p, &[g], &mut s).unwrap();
            let delta = p[0] - 1.0;
            assert!((delta.abs() - 0.01).abs() < 1e-4 * 0.01, "g={g}");
            assert_eq!(delta.signum(), -g.signum());
            assert_eq!(s.step_count, 1);
        }
    }

    #[test]
    fn adam_zero_grad_is_noop() {
        let mut p = [0.3, -2.0];
        let mut s = AdamState::new(2, AdamConfig::default());
        for _ in 0..5 {
            adam_step(&mut p, &[0.0, 0.0], &mut s).unwrap();
        }
        assert_eq!(p, [0.3, -2.0]);
        assert_eq!(s.step_count, 5);
        assert!(adam_step(&mut p, &[0.0], &mut s).is_err());
    }

    #[test]
    fn init_bounds_and_determinism() {
        let a = init_uniform(1000, 4, &mut ChaCha8Rng::seed_from_u64(3));
        let b = init_uniform(1000, 4, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
        assert!(a.iter().all(|v| v.abs() <= 0.5));
        let layer = DenseLayer::init(4, 3, Activation::ReLU, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(layer.biases.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn init_mean_near_zero() {
        let v = init_uniform(10_000, 1, &mut ChaCha8Rng::seed_from_u64(11));
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
    }
}
