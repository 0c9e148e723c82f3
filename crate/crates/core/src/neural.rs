//! Dense feed-forward Q-networks with hand-written backpropagation.
//!
//! Hidden layers apply `Tanh` or `ReLU`; the output layer is linear with one
//! unit per action. Training minimises the squared error of a single output
//! per sample, `(target - q[action])^2`, with plain SGD.

use std::fmt;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{rng_from_seed, uniform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::Tanh => write!(f, "Tanh"),
            Activation::Relu => write!(f, "ReLU"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HiddenLayer {
    pub width: usize,
    pub activation: Activation,
}

/// Architecture of one private Q-network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden: Vec<HiddenLayer>,
    pub output_dim: usize,
    pub init_seed: u64,
}

impl NetworkSpec {
    /// Parses the `64x64` style width notation used in agent tables.
    pub fn from_widths(
        input_dim: usize,
        widths: &[usize],
        activation: Activation,
        output_dim: usize,
        init_seed: u64,
    ) -> Self {
        Self {
            input_dim,
            hidden: widths
                .iter()
                .map(|&width| HiddenLayer { width, activation })
                .collect(),
            output_dim,
            init_seed,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.input_dim == 0 {
            out.push("network input_dim must be >= 1".into());
        }
        if self.output_dim == 0 {
            out.push("network output_dim must be >= 1".into());
        }
        if self.hidden.is_empty() {
            out.push("network needs at least one hidden layer".into());
        }
        if self.hidden.iter().any(|h| h.width == 0) {
            out.push("hidden layer widths must be >= 1".into());
        }
        out
    }

    /// Layer sizes including input and output, e.g. `[4, 64, 64, 2]`.
    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim)
            .chain(self.hidden.iter().map(|h| h.width))
            .chain(std::iter::once(self.output_dim))
            .collect()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NeuralError {
    #[error("input has dimension {got}, network expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("action {action} out of range for {outputs} outputs")]
    ActionOutOfRange { action: usize, outputs: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out x in`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    /// `None` for the linear output layer.
    pub activation: Option<Activation>,
}

/// Parameters of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub layers: Vec<Layer>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Gradient of the loss with respect to every parameter of a [`Weights`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub layers: Vec<LayerGradient>,
}

impl Gradient {
    pub fn zeros_like(w: &Weights) -> Self {
        Self {
            layers: w
                .layers
                .iter()
                .map(|l| LayerGradient {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| {
                l.weights.iter().map(|v| v * v).sum::<f64>()
                    + l.bias.iter().map(|v| v * v).sum::<f64>()
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights *= factor;
            l.bias *= factor;
        }
    }

    /// Rescales so the global L2 norm does not exceed `max_norm`.
    pub fn clip_norm(&mut self, max_norm: f64) {
        let n = self.norm();
        if n > max_norm {
            self.scale(max_norm / n);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|&v| v == 0.0))
    }
}

impl Weights {
    /// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` weights drawn layer by
    /// layer in row-major order; zero biases.
    pub fn init(spec: &NetworkSpec) -> Self {
        let mut rng = rng_from_seed(spec.init_seed);
        let sizes = spec.sizes();
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, pair)| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let weights =
                    Array2::from_shape_simple_fn((fan_out, fan_in), || uniform(&mut rng, -bound, bound));
                Layer {
                    weights,
                    bias: Array1::zeros(fan_out),
                    activation: spec.hidden.get(i).map(|h| h.activation),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.weights.nrows()).unwrap_or(0)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    fn check_input(&self, dim: usize) -> Result<(), NeuralError> {
        if dim != self.input_dim() {
            return Err(NeuralError::DimensionMismatch {
                expected: self.input_dim(),
                got: dim,
            });
        }
        Ok(())
    }

    /// Q-values for a single state. Shares the batched code path so a query
    /// and a training pass agree bit for bit.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NeuralError> {
        let row = ArrayView2::from_shape((1, input.len()), input).expect("row view");
        Ok(self.forward_batch(row)?.into_raw_vec())
    }

    /// Q-values for a batch of states stored row-wise.
    pub fn forward_batch(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>, NeuralError> {
        self.check_input(inputs.ncols())?;
        let mut x = inputs.to_owned();
        for layer in &self.layers {
            let mut z = x.dot(&layer.weights.t());
            z += &layer.bias;
            if let Some(act) = layer.activation {
                z.mapv_inplace(|v| act.apply(v));
            }
            x = z;
        }
        Ok(x)
    }

    /// Squared error of one output for one state and its exact gradient.
    pub fn backward(
        &self,
        input: &[f64],
        action: usize,
        target: f64,
    ) -> Result<(f64, Gradient), NeuralError> {
        let inputs = ArrayView2::from_shape((1, input.len()), input).expect("row view");
        self.backward_batch(inputs, &[action], &[target])
    }

    /// Mean over the batch of `(target_i - q(s_i)[a_i])^2` and its gradient.
    pub fn backward_batch(
        &self,
        inputs: ArrayView2<f64>,
        actions: &[usize],
        targets: &[f64],
    ) -> Result<(f64, Gradient), NeuralError> {
        self.check_input(inputs.ncols())?;
        let outputs = self.output_dim();
        if let Some(&action) = actions.iter().find(|&&a| a >= outputs) {
            return Err(NeuralError::ActionOutOfRange { action, outputs });
        }
        let batch = inputs.nrows();
        debug_assert_eq!(actions.len(), batch);
        debug_assert_eq!(targets.len(), batch);

        // Forward pass keeping pre-activations and activations per layer.
        let mut activations: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len() + 1);
        let mut pre: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len());
        activations.push(inputs.to_owned());
        for layer in &self.layers {
            let mut z = activations.last().expect("input").dot(&layer.weights.t());
            z += &layer.bias;
            let a = match layer.activation {
                Some(act) => z.mapv(|v| act.apply(v)),
                None => z.clone(),
            };
            pre.push(z);
            activations.push(a);
        }

        let out = activations.last().expect("output");
        let mut delta = Array2::<f64>::zeros((batch, outputs));
        let mut loss = 0.0;
        let inv = 1.0 / batch as f64;
        for (i, (&a, &y)) in actions.iter().zip(targets).enumerate() {
            let err = out[[i, a]] - y;
            loss += err * err;
            delta[[i, a]] = 2.0 * err * inv;
        }
        loss *= inv;

        let mut grads = Vec::with_capacity(self.layers.len());
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            if let Some(act) = layer.activation {
                Zip::from(&mut delta)
                    .and(&pre[idx])
                    .and(&activations[idx + 1])
                    .for_each(|d, &z, &a| *d *= act.derivative(z, a));
            }
            let weights = delta.t().dot(&activations[idx]);
            let bias = delta.sum_axis(Axis(0));
            let next_delta = if idx > 0 {
                Some(delta.dot(&layer.weights))
            } else {
                None
            };
            grads.push(LayerGradient { weights, bias });
            if let Some(d) = next_delta {
                delta = d;
            }
        }
        grads.reverse();
        Ok((loss, Gradient { layers: grads }))
    }

    /// In-place `w <- w - lr * g`.
    pub fn apply_gradient(&mut self, grad: &Gradient, lr: f64) {
        for (layer, g) in self.layers.iter_mut().zip(&grad.layers) {
            layer.weights.scaled_add(-lr, &g.weights);
            layer.bias.scaled_add(-lr, &g.bias);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// Flattened parameter view, layer by layer (weights row-major, then bias).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            out.extend(l.weights.iter().copied());
            out.extend(l.bias.iter().copied());
        }
        out
    }

    /// Mutable access to the `k`-th flattened parameter.
    pub fn parameter_mut(&mut self, mut k: usize) -> &mut f64 {
        for l in &mut self.layers {
            if k < l.weights.len() {
                let cols = l.weights.ncols();
                return &mut l.weights[[k / cols, k % cols]];
            }
            k -= l.weights.len();
            if k < l.bias.len() {
                return &mut l.bias[k];
            }
            k -= l.bias.len();
        }
        panic!("parameter index out of range");
    }
}

impl Gradient {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.weights.iter().copied());
            out.extend(l.bias.iter().copied());
        }
        out
    }
}

/// Returns `w - lr * g`.
pub fn sgd_step(w: &Weights, g: &Gradient, lr: f64) -> Weights {
    let mut next = w.clone();
    next.apply_gradient(g, lr);
    next
}

/// Zeroes every parameter of a network; used to build degenerate fixtures.
pub fn zeroed(spec: &NetworkSpec) -> Weights {
    let mut w = Weights::init(spec);
    for l in &mut w.layers {
        l.weights.fill(0.0);
        l.bias.fill(0.0);
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn spec_4_8_2(seed: u64) -> NetworkSpec {
        NetworkSpec::from_widths(4, &[8], Activation::Tanh, 2, seed)
    }

    #[test]
    fn init_is_deterministic() {
        assert_eq!(Weights::init(&spec_4_8_2(5)), Weights::init(&spec_4_8_2(5)));
        assert_ne!(Weights::init(&spec_4_8_2(5)), Weights::init(&spec_4_8_2(6)));
    }

    #[test]
    fn init_shapes() {
        let w = Weights::init(&spec_4_8_2(0));
        assert_eq!(w.layers[0].weights.dim(), (8, 4));
        assert_eq!(w.layers[1].weights.dim(), (2, 8));
        assert_eq!(w.layers[0].bias.len(), 8);
        assert_eq!(w.layers[1].bias.len(), 2);
        assert!(w.layers.iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn init_range_for_fan_in_four() {
        for seed in 0..1000 {
            let w = Weights::init(&spec_4_8_2(seed));
            assert!(w.layers[0].weights.iter().all(|v| v.abs() <= 0.5));
        }
    }

    #[test]
    fn zero_network_outputs_zero() {
        let w = zeroed(&spec_4_8_2(0));
        assert_eq!(w.forward(&[0.3, -1.0, 2.0, 0.1]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn zero_hidden_gives_output_bias() {
        for act in [Activation::Tanh, Activation::Relu] {
            let mut w = zeroed(&NetworkSpec::from_widths(3, &[5, 5], act, 2, 0));
            w.layers[2].bias = array![0.25, -1.5];
            assert_eq!(w.forward(&[1.0, 2.0, 3.0]).unwrap(), vec![0.25, -1.5]);
        }
    }

    #[test]
    fn single_hidden_unit_hand_value() {
        let mut w = zeroed(&NetworkSpec::from_widths(1, &[1], Activation::Tanh, 1, 0));
        w.layers[0].weights[[0, 0]] = 0.5;
        w.layers[1].weights[[0, 0]] = 2.0;
        let q = w.forward(&[1.0]).unwrap();
        // 2 * tanh(0.5)
        assert!((q[0] - 0.924_234_314_5).abs() < 1e-9, "{}", q[0]);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let w = Weights::init(&spec_4_8_2(0));
        assert_eq!(
            w.forward(&[1.0, 2.0]),
            Err(NeuralError::DimensionMismatch { expected: 4, got: 2 })
        );
        assert!(w.backward(&[1.0], 0, 0.0).is_err());
        assert_eq!(
            w.backward(&[0.0; 4], 2, 0.0).unwrap_err(),
            NeuralError::ActionOutOfRange { action: 2, outputs: 2 }
        );
    }

    #[test]
    fn loss_zero_at_prediction() {
        let w = Weights::init(&spec_4_8_2(3));
        let s = [0.1, 0.2, -0.3, 0.4];
        let q = w.forward(&s).unwrap();
        let (loss, g) = w.backward(&s, 1, q[1]).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.is_zero());
    }

    #[test]
    fn doubling_error_quadruples_loss() {
        let w = Weights::init(&spec_4_8_2(3));
        let s = [0.1, 0.2, -0.3, 0.4];
        let q = w.forward(&s).unwrap()[0];
        let (l1, _) = w.backward(&s, 0, q + 0.7).unwrap();
        let (l2, _) = w.backward(&s, 0, q + 1.4).unwrap();
        assert!((l2 - 4.0 * l1).abs() < 1e-12);
    }

    #[test]
    fn only_target_row_gets_output_gradient() {
        let w = Weights::init(&spec_4_8_2(3));
        let (_, g) = w.backward(&[0.1, 0.2, -0.3, 0.4], 1, 5.0).unwrap();
        let out = &g.layers[1];
        assert!(out.weights.row(0).iter().all(|&v| v == 0.0));
        assert_eq!(out.bias[0], 0.0);
        assert!(out.bias[1] != 0.0);
    }

    #[test]
    fn batch_forward_matches_single() {
        let w = Weights::init(&NetworkSpec::from_widths(4, &[6, 3], Activation::Relu, 2, 9));
        let rows = array![[0.1, 0.2, 0.3, 0.4], [-1.0, 0.5, 0.0, 2.0]];
        let batch = w.forward_batch(rows.view()).unwrap();
        for (i, row) in rows.outer_iter().enumerate() {
            let single = w.forward(row.as_slice().unwrap()).unwrap();
            for a in 0..2 {
                assert!((batch[[i, a]] - single[a]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sgd_zero_gradient_is_identity() {
        let w = Weights::init(&spec_4_8_2(1));
        let g = Gradient::zeros_like(&w);
        assert_eq!(sgd_step(&w, &g, 0.1), w);
    }

    #[test]
    fn sgd_unit_rate_with_self_gradient_zeroes() {
        let w = Weights::init(&spec_4_8_2(1));
        let g = Gradient {
            layers: w
                .layers
                .iter()
                .map(|l| LayerGradient {
                    weights: l.weights.clone(),
                    bias: l.bias.clone(),
                })
                .collect(),
        };
        let z = sgd_step(&w, &g, 1.0);
        assert!(z.flatten().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sgd_scalar_quadratic_converges() {
        // Minimise (x - 3)^2 through the output bias of a zero network.
        let mut w = zeroed(&NetworkSpec::from_widths(1, &[1], Activation::Relu, 1, 0));
        for _ in 0..100 {
            let (_, g) = w.backward(&[0.0], 0, 3.0).unwrap();
            w.apply_gradient(&g, 0.1);
        }
        // Error contracts by 0.8 per step: 3 * 0.8^100 ~ 6e-10.
        assert!((w.layers[1].bias[0] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn clip_norm_caps_length() {
        let w = Weights::init(&spec_4_8_2(1));
        let (_, mut g) = w.backward(&[1.0, 1.0, 1.0, 1.0], 0, 100.0).unwrap();
        g.clip_norm(1.0);
        assert!((g.norm() - 1.0).abs() < 1e-12);
    }
}
