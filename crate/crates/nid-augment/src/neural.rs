//! Minimal dense neural-network engine.
//!
//! Sequential fully connected layers with relu/sigmoid/linear/softmax
//! activations, exact reverse-mode gradients, inverted dropout on hidden
//! layers, and a bias-corrected Adam optimizer. The generator, the
//! discriminator, and the DNN classifier all run on this engine; none of
//! them needs anything beyond a sequential stack.
//!
//! Sigmoid outputs are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` so that
//! downstream log-likelihood terms stay finite even when a unit saturates.
//!
//! The checkpoint format is JSON: `{"version": 1, "layers": [{"input",
//! "output", "activation", "weights", "bias"}]}` with weights flattened
//! row-major as `input x output`.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::RandomSource;

/// Clamp applied to sigmoid outputs to keep `log` and `log1p` finite.
pub const PROB_CLAMP: f64 = 1e-7;

/// Adam epsilon.
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("batch has {found} columns, network expects {expected}")]
    InputDim { expected: usize, found: usize },
    #[error("batch contains a non-finite value")]
    NonFiniteInput,
    #[error("output gradient shape {found:?} does not match cached output shape {expected:?}")]
    GradientShape {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("cache does not belong to this network (layer {layer} shape mismatch)")]
    CacheMismatch { layer: usize },
    #[error("gradient for layer {layer} is non-finite")]
    NonFiniteGradient { layer: usize },
    #[error("dropout plan covers {found} hidden layers, network has {expected}")]
    DropoutArity { expected: usize, found: usize },
    #[error("an active dropout plan needs a mask source")]
    MissingMaskSource,
    #[error("layer dimensions do not chain: layer {layer} outputs {out}, next expects {next_in}")]
    ChainMismatch {
        layer: usize,
        out: usize,
        next_in: usize,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("optimizer state shapes do not match the network")]
    AdamShape,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Linear,
    Softmax,
}

/// One dense layer: `output = activation(input . weights + bias)` with
/// `weights` of shape `input_dim x output_dim`.
#[derive(Debug, Clone)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn input_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.ncols()
    }
}

/// Sequential dense network.
#[derive(Debug, Clone)]
pub struct DenseNet {
    pub layers: Vec<Layer>,
}

impl DenseNet {
    /// Build a network with the given layer widths and per-layer activations
    /// (`activations.len() == dims.len() - 1`). Weights start uniform in
    /// `+-sqrt(6 / (fan_in + fan_out))`, biases at zero.
    pub fn new(dims: &[usize], activations: &[Activation], rng: &mut RandomSource) -> Self {
        assert!(dims.len() >= 2, "need at least input and output dims");
        assert_eq!(activations.len(), dims.len() - 1);
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(pair, &activation)| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let mut weights = Array2::zeros((fan_in, fan_out));
                for w in weights.iter_mut() {
                    *w = (rng.uniform() * 2.0 - 1.0) * limit;
                }
                Layer {
                    weights,
                    bias: Array1::zeros(fan_out),
                    activation,
                }
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, Layer::input_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Layer::output_dim)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Layer widths including the input dimension.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(Layer::output_dim));
        dims
    }

    fn check_chain(&self) -> Result<(), NeuralError> {
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(NeuralError::ChainMismatch {
                    layer: i,
                    out: pair[0].output_dim(),
                    next_in: pair[1].input_dim(),
                });
            }
        }
        Ok(())
    }

    /// Forward pass over a rows-are-samples batch. Returns the output and a
    /// cache sufficient for [`DenseNet::backward`]. With an active dropout
    /// plan, hidden-layer outputs are masked and rescaled (inverted dropout)
    /// using masks drawn from `rng`; at inference the plan is an identity.
    pub fn forward(
        &self,
        batch: &Array2<f64>,
        dropout: &DropoutPlan,
        mut rng: Option<&mut RandomSource>,
    ) -> Result<(Array2<f64>, ForwardCache), NeuralError> {
        self.check_chain()?;
        if batch.ncols() != self.input_dim() {
            return Err(NeuralError::InputDim {
                expected: self.input_dim(),
                found: batch.ncols(),
            });
        }
        if batch.iter().any(|v| !v.is_finite()) {
            return Err(NeuralError::NonFiniteInput);
        }
        let hidden = self.layers.len().saturating_sub(1);
        if dropout.active {
            if dropout.rates.len() != hidden {
                return Err(NeuralError::DropoutArity {
                    expected: hidden,
                    found: dropout.rates.len(),
                });
            }
            if rng.is_none() {
                return Err(NeuralError::MissingMaskSource);
            }
        }

        let mut current = batch.clone();
        let mut steps = Vec::with_capacity(self.layers.len());
        for (idx, layer) in self.layers.iter().enumerate() {
            let input = current;
            let mut pre = input.dot(&layer.weights);
            for mut row in pre.rows_mut() {
                row += &layer.bias;
            }
            let mut post = activate(&pre, layer.activation);
            let mask = if dropout.active && idx < hidden && dropout.rates[idx] > 0.0 {
                let rate = dropout.rates[idx];
                let keep = 1.0 - rate;
                let rng = rng.as_mut().expect("checked above");
                let mut mask = Array2::zeros(post.raw_dim());
                for m in mask.iter_mut() {
                    *m = if rng.uniform() < keep { 1.0 / keep } else { 0.0 };
                }
                post *= &mask;
                Some(mask)
            } else {
                None
            };
            steps.push(LayerStep { input, post: post.clone(), mask });
            current = post;
        }
        Ok((
            current,
            ForwardCache {
                dims: self.dims(),
                steps,
            },
        ))
    }

    /// Reverse-mode gradients. `out_grad` is the gradient of a scalar loss
    /// with respect to the forward output; the returned gradients are exact
    /// for that loss (any batch averaging lives in `out_grad`). Also returns
    /// the loss gradient with respect to the input batch, which lets one
    /// network backpropagate into another.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        out_grad: &Array2<f64>,
    ) -> Result<(NetGradients, Array2<f64>), NeuralError> {
        if cache.dims != self.dims() || cache.steps.len() != self.layers.len() {
            return Err(NeuralError::CacheMismatch { layer: 0 });
        }
        let last = cache.steps.last().ok_or(NeuralError::CacheMismatch { layer: 0 })?;
        if out_grad.dim() != last.post.dim() {
            return Err(NeuralError::GradientShape {
                expected: last.post.dim(),
                found: out_grad.dim(),
            });
        }

        let mut grads = vec![LayerGrad::default(); self.layers.len()];
        let mut upstream = out_grad.clone();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let step = &cache.steps[idx];
            if step.input.ncols() != layer.input_dim() || step.post.ncols() != layer.output_dim() {
                return Err(NeuralError::CacheMismatch { layer: idx });
            }
            // Undo dropout scaling: the mask is its own derivative.
            let post_grad = match &step.mask {
                Some(mask) => &upstream * mask,
                None => upstream.clone(),
            };
            // step.post holds the masked output; recover the activation
            // value where a mask was applied (mask entries are 0 or 1/keep).
            let pre_grad = match layer.activation {
                Activation::Linear => post_grad,
                Activation::Relu => {
                    let mut g = post_grad;
                    for (gv, &pv) in g.iter_mut().zip(step.post.iter()) {
                        if pv <= 0.0 {
                            *gv = 0.0;
                        }
                    }
                    g
                }
                Activation::Sigmoid => {
                    let mut g = post_grad;
                    let unmasked = step.unmasked_post();
                    for (gv, &pv) in g.iter_mut().zip(unmasked.iter()) {
                        *gv *= pv * (1.0 - pv);
                    }
                    g
                }
                Activation::Softmax => {
                    let p = step.unmasked_post();
                    let mut g = Array2::zeros(post_grad.raw_dim());
                    for ((mut g_row, p_row), up_row) in g
                        .rows_mut()
                        .into_iter()
                        .zip(p.rows())
                        .zip(post_grad.rows())
                    {
                        let dot: f64 = p_row.iter().zip(up_row.iter()).map(|(a, b)| a * b).sum();
                        for ((gv, &pv), &uv) in
                            g_row.iter_mut().zip(p_row.iter()).zip(up_row.iter())
                        {
                            *gv = pv * (uv - dot);
                        }
                    }
                    g
                }
            };
            grads[idx] = LayerGrad {
                weights: step.input.t().dot(&pre_grad),
                bias: pre_grad.sum_axis(Axis(0)),
            };
            upstream = pre_grad.dot(&layer.weights.t());
        }
        Ok((NetGradients { layers: grads }, upstream))
    }
}

fn activate(pre: &Array2<f64>, activation: Activation) -> Array2<f64> {
    match activation {
        Activation::Linear => pre.clone(),
        Activation::Relu => pre.mapv(|v| v.max(0.0)),
        Activation::Sigmoid => pre.mapv(|v| {
            let s = 1.0 / (1.0 + (-v).exp());
            s.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
        }),
        Activation::Softmax => {
            let mut out = Array2::zeros(pre.raw_dim());
            for (mut out_row, in_row) in out.rows_mut().into_iter().zip(pre.rows()) {
                let max = in_row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for (o, &v) in out_row.iter_mut().zip(in_row.iter()) {
                    *o = (v - max).exp();
                    sum += *o;
                }
                out_row.mapv_inplace(|v| v / sum);
            }
            out
        }
    }
}

/// Per-layer record of a forward pass.
#[derive(Debug, Clone)]
struct LayerStep {
    input: Array2<f64>,
    /// Output after activation and (if any) dropout masking.
    post: Array2<f64>,
    mask: Option<Array2<f64>>,
}

impl LayerStep {
    /// Activation output with dropout scaling removed.
    fn unmasked_post(&self) -> Array2<f64> {
        match &self.mask {
            None => self.post.clone(),
            Some(mask) => {
                let mut out = self.post.clone();
                for (o, &m) in out.iter_mut().zip(mask.iter()) {
                    if m > 0.0 {
                        *o /= m;
                    }
                }
                out
            }
        }
    }
}

/// Opaque cache produced by [`DenseNet::forward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    dims: Vec<usize>,
    steps: Vec<LayerStep>,
}

impl ForwardCache {
    pub fn batch_len(&self) -> usize {
        self.steps.first().map_or(0, |s| s.input.nrows())
    }
}

/// Inverted-dropout configuration: one keep-rate per hidden layer, applied
/// only while `active` (training). At inference the plan is an identity.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutPlan {
    pub rates: Vec<f64>,
    pub active: bool,
}

impl DropoutPlan {
    /// No dropout (inference or plain training).
    pub fn inference() -> Self {
        Self {
            rates: Vec::new(),
            active: false,
        }
    }

    /// The same rate on every hidden layer.
    pub fn uniform(rate: f64, hidden_layers: usize) -> Self {
        Self {
            rates: vec![rate; hidden_layers],
            active: rate > 0.0,
        }
    }
}

/// Parameter-shaped gradients.
#[derive(Debug, Clone, Default)]
pub struct NetGradients {
    pub layers: Vec<LayerGrad>,
}

#[derive(Debug, Clone, Default)]
pub struct LayerGrad {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl NetGradients {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn add(&mut self, other: &NetGradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights += &b.weights;
            a.bias += &b.bias;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for layer in &mut self.layers {
            layer.weights *= factor;
            layer.bias *= factor;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
            .fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }
}

/// Bias-corrected Adam state for one network.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step_count: u64,
    first: Vec<LayerGrad>,
    second: Vec<LayerGrad>,
}

impl AdamState {
    /// Fresh state with the momentum defaults (0.9, 0.99).
    pub fn new(net: &DenseNet, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.99,
            epsilon: ADAM_EPS,
            step_count: 0,
            first: NetGradients::zeros_like(net).layers,
            second: NetGradients::zeros_like(net).layers,
        }
    }

    /// One Adam step in the descent direction of `grads`.
    pub fn step(&mut self, net: &mut DenseNet, grads: &NetGradients) -> Result<(), NeuralError> {
        if grads.layers.len() != net.layers.len() || self.first.len() != net.layers.len() {
            return Err(NeuralError::AdamShape);
        }
        for (layer, grad) in grads.layers.iter().enumerate() {
            if grad.weights.iter().chain(grad.bias.iter()).any(|v| !v.is_finite()) {
                return Err(NeuralError::NonFiniteGradient { layer });
            }
            if grad.weights.raw_dim() != net.layers[layer].weights.raw_dim()
                || grad.bias.raw_dim() != net.layers[layer].bias.raw_dim()
            {
                return Err(NeuralError::AdamShape);
            }
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((layer, grad), (m, v)) in net
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            update_param(
                &mut layer.weights,
                &grad.weights,
                &mut m.weights,
                &mut v.weights,
                self.learning_rate,
                self.beta1,
                self.beta2,
                self.epsilon,
                bc1,
                bc2,
            );
            update_vec(
                &mut layer.bias,
                &grad.bias,
                &mut m.bias,
                &mut v.bias,
                self.learning_rate,
                self.beta1,
                self.beta2,
                self.epsilon,
                bc1,
                bc2,
            );
        }
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn update_param(
    param: &mut Array2<f64>,
    grad: &Array2<f64>,
    m: &mut Array2<f64>,
    v: &mut Array2<f64>,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    bc1: f64,
    bc2: f64,
) {
    for (((p, &g), m), v) in param
        .iter_mut()
        .zip(grad.iter())
        .zip(m.iter_mut())
        .zip(v.iter_mut())
    {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
    }
}

#[allow(clippy::too_many_arguments)]
fn update_vec(
    param: &mut Array1<f64>,
    grad: &Array1<f64>,
    m: &mut Array1<f64>,
    v: &mut Array1<f64>,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    bc1: f64,
    bc2: f64,
) {
    for (((p, &g), m), v) in param
        .iter_mut()
        .zip(grad.iter())
        .zip(m.iter_mut())
        .zip(v.iter_mut())
    {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointLayer {
    input: usize,
    output: usize,
    activation: Activation,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    layers: Vec<CheckpointLayer>,
}

impl DenseNet {
    /// Serialize to the versioned JSON checkpoint format.
    pub fn to_checkpoint_json(&self) -> String {
        let checkpoint = Checkpoint {
            version: 1,
            layers: self
                .layers
                .iter()
                .map(|l| CheckpointLayer {
                    input: l.input_dim(),
                    output: l.output_dim(),
                    activation: l.activation,
                    weights: l.weights.iter().cloned().collect(),
                    bias: l.bias.to_vec(),
                })
                .collect(),
        };
        serde_json::to_string(&checkpoint).expect("checkpoint serialization cannot fail")
    }

    /// Load from the JSON checkpoint format.
    pub fn from_checkpoint_json(json: &str) -> Result<Self, NeuralError> {
        let checkpoint: Checkpoint =
            serde_json::from_str(json).map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
        if checkpoint.version != 1 {
            return Err(NeuralError::Checkpoint(format!(
                "unsupported version {}",
                checkpoint.version
            )));
        }
        let mut layers = Vec::with_capacity(checkpoint.layers.len());
        for (i, l) in checkpoint.layers.into_iter().enumerate() {
            if l.weights.len() != l.input * l.output || l.bias.len() != l.output {
                return Err(NeuralError::Checkpoint(format!(
                    "layer {i}: parameter count does not match declared dims"
                )));
            }
            layers.push(Layer {
                weights: Array2::from_shape_vec((l.input, l.output), l.weights)
                    .map_err(|e| NeuralError::Checkpoint(e.to_string()))?,
                bias: Array1::from_vec(l.bias),
                activation: l.activation,
            });
        }
        let net = Self { layers };
        net.check_chain()?;
        Ok(net)
    }
}

/// Finite-difference gradient checking. Independent of [`DenseNet::backward`]:
/// it only re-evaluates a caller-supplied loss under parameter perturbations.
pub mod gradcheck {
    use super::*;

    /// Central-difference gradients of `loss` with respect to every
    /// parameter of `net`.
    pub fn numeric_gradients<F>(net: &DenseNet, h: f64, mut loss: F) -> NetGradients
    where
        F: FnMut(&DenseNet) -> f64,
    {
        let mut work = net.clone();
        let mut grads = NetGradients::zeros_like(net);
        for layer in 0..net.layers.len() {
            for idx in 0..net.layers[layer].weights.len() {
                let original = net.layers[layer].weights.as_slice().unwrap()[idx];
                work.layers[layer].weights.as_slice_mut().unwrap()[idx] = original + h;
                let up = loss(&work);
                work.layers[layer].weights.as_slice_mut().unwrap()[idx] = original - h;
                let down = loss(&work);
                work.layers[layer].weights.as_slice_mut().unwrap()[idx] = original;
                grads.layers[layer].weights.as_slice_mut().unwrap()[idx] =
                    (up - down) / (2.0 * h);
            }
            for idx in 0..net.layers[layer].bias.len() {
                let original = net.layers[layer].bias[idx];
                work.layers[layer].bias[idx] = original + h;
                let up = loss(&work);
                work.layers[layer].bias[idx] = original - h;
                let down = loss(&work);
                work.layers[layer].bias[idx] = original;
                grads.layers[layer].bias[idx] = (up - down) / (2.0 * h);
            }
        }
        grads
    }

    /// Largest relative disagreement between two gradient sets. The
    /// denominator is floored so that near-zero entries compare absolutely.
    pub fn max_relative_error(a: &NetGradients, b: &NetGradients, floor: f64) -> f64 {
        let mut worst = 0.0f64;
        for (la, lb) in a.layers.iter().zip(&b.layers) {
            for (x, y) in la
                .weights
                .iter()
                .chain(la.bias.iter())
                .zip(lb.weights.iter().chain(lb.bias.iter()))
            {
                let denom = x.abs().max(y.abs()).max(floor);
                worst = worst.max((x - y).abs() / denom);
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn identity_net() -> DenseNet {
        DenseNet {
            layers: vec![Layer {
                weights: Array2::eye(3),
                bias: Array1::zeros(3),
                activation: Activation::Linear,
            }],
        }
    }

    #[test]
    fn identity_network_reproduces_input() {
        let net = identity_net();
        let batch = array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
        let (out, _) = net
            .forward(&batch, &DropoutPlan::inference(), None)
            .unwrap();
        assert_eq!(out, batch);
    }

    #[test]
    fn zero_sigmoid_unit_outputs_half() {
        let net = DenseNet {
            layers: vec![Layer {
                weights: Array2::zeros((4, 1)),
                bias: Array1::zeros(1),
                activation: Activation::Sigmoid,
            }],
        };
        let batch = array![[1.0, -2.0, 3.0, 0.5], [0.0, 0.0, 0.0, 0.0]];
        let (out, _) = net
            .forward(&batch, &DropoutPlan::inference(), None)
            .unwrap();
        assert!(out.iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn two_layer_forward_matches_hand_computation() {
        // x -> relu(x.W1 + b1) -> (h.W2 + b2)
        let net = DenseNet {
            layers: vec![
                Layer {
                    weights: array![[1.0, -1.0], [2.0, 0.5]],
                    bias: array![0.1, -0.2],
                    activation: Activation::Relu,
                },
                Layer {
                    weights: array![[0.3], [-0.7]],
                    bias: array![0.05],
                    activation: Activation::Linear,
                },
            ],
        };
        let batch = array![[1.0, 2.0]];
        let (out, _) = net
            .forward(&batch, &DropoutPlan::inference(), None)
            .unwrap();
        // pre1 = [1*1+2*2+0.1, 1*(-1)+2*0.5-0.2] = [5.1, -0.2]; relu -> [5.1, 0]
        // out = 5.1*0.3 + 0*(-0.7) + 0.05 = 1.58
        assert!((out[(0, 0)] - 1.58).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let net = identity_net();
        let batch = array![[1.0, 2.0]];
        assert!(matches!(
            net.forward(&batch, &DropoutPlan::inference(), None),
            Err(NeuralError::InputDim { expected: 3, found: 2 })
        ));
    }

    #[test]
    fn non_finite_input_is_an_error() {
        let net = identity_net();
        let batch = array![[1.0, f64::NAN, 3.0]];
        assert!(matches!(
            net.forward(&batch, &DropoutPlan::inference(), None),
            Err(NeuralError::NonFiniteInput)
        ));
    }

    #[test]
    fn zero_output_gradient_gives_zero_parameter_gradients() {
        let mut rng = RandomSource::new(1);
        let net = DenseNet::new(
            &[3, 5, 2],
            &[Activation::Relu, Activation::Sigmoid],
            &mut rng,
        );
        let batch = array![[0.4, -1.0, 2.0], [0.0, 0.3, -0.4]];
        let (out, cache) = net
            .forward(&batch, &DropoutPlan::inference(), None)
            .unwrap();
        let (grads, input_grad) = net
            .backward(&cache, &Array2::zeros(out.raw_dim()))
            .unwrap();
        assert_eq!(grads.max_abs(), 0.0);
        assert_eq!(input_grad.iter().map(|v| v.abs()).sum::<f64>(), 0.0);
    }

    #[test]
    fn sigmoid_unit_gradient_matches_closed_form() {
        // L = -y ln p - (1-y) ln(1-p) with upstream dL/dp; dL/dw must come
        // out as (dL/dp) * p(1-p) * x.
        let w = 0.6;
        let b = -0.3;
        let x = 1.7;
        let y = 1.0;
        let net = DenseNet {
            layers: vec![Layer {
                weights: array![[w]],
                bias: array![b],
                activation: Activation::Sigmoid,
            }],
        };
        let batch = array![[x]];
        let (out, cache) = net
            .forward(&batch, &DropoutPlan::inference(), None)
            .unwrap();
        let p = out[(0, 0)];
        let upstream = array![[-y / p + (1.0 - y) / (1.0 - p)]];
        let (grads, _) = net.backward(&cache, &upstream).unwrap();
        let expected = (-y / p) * p * (1.0 - p) * x; // = -(y)(1-p) x
        assert!((grads.layers[0].weights[(0, 0)] - expected).abs() < 1e-12);
        let expected_b = (-y / p) * p * (1.0 - p);
        assert!((grads.layers[0].bias[0] - expected_b).abs() < 1e-12);
    }

    fn quadratic_loss(net: &DenseNet, batch: &Array2<f64>, target: &Array2<f64>) -> f64 {
        let (out, _) = net
            .forward(batch, &DropoutPlan::inference(), None)
            .unwrap();
        (&out - target).mapv(|v| v * v).sum()
    }

    #[test]
    fn random_net_gradients_match_finite_differences() {
        let mut rng = RandomSource::new(7);
        let net = DenseNet::new(
            &[4, 8, 6, 3],
            &[Activation::Relu, Activation::Sigmoid, Activation::Linear],
            &mut rng,
        );
        let mut batch = Array2::zeros((5, 4));
        for v in batch.iter_mut() {
            *v = rng.sample_gaussian(0.0, 1.0).unwrap();
        }
        let mut target = Array2::zeros((5, 3));
        for v in target.iter_mut() {
            *v = rng.sample_gaussian(0.0, 1.0).unwrap();
        }
        let (out, cache) = net
            .forward(&batch, &DropoutPlan::inference(), None)
            .unwrap();
        let upstream = (&out - &target) * 2.0;
        let (analytic, _) = net.backward(&cache, &upstream).unwrap();
        let numeric =
            gradcheck::numeric_gradients(&net, 1e-5, |n| quadratic_loss(n, &batch, &target));
        let err = gradcheck::max_relative_error(&analytic, &numeric, 1e-5);
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn softmax_gradients_match_finite_differences() {
        let mut rng = RandomSource::new(8);
        let net = DenseNet::new(
            &[3, 6, 4],
            &[Activation::Relu, Activation::Softmax],
            &mut rng,
        );
        let mut batch = Array2::zeros((4, 3));
        for v in batch.iter_mut() {
            *v = rng.sample_gaussian(0.0, 1.0).unwrap();
        }
        // cross-entropy against class 1
        let loss = |n: &DenseNet| {
            let (out, _) = n.forward(&batch, &DropoutPlan::inference(), None).unwrap();
            -out.column(1).mapv(f64::ln).sum()
        };
        let (out, cache) = net
            .forward(&batch, &DropoutPlan::inference(), None)
            .unwrap();
        let mut upstream = Array2::zeros(out.raw_dim());
        for (mut row, o) in upstream.rows_mut().into_iter().zip(out.rows()) {
            row[1] = -1.0 / o[1];
        }
        let (analytic, _) = net.backward(&cache, &upstream).unwrap();
        let numeric = gradcheck::numeric_gradients(&net, 1e-5, loss);
        let err = gradcheck::max_relative_error(&analytic, &numeric, 1e-5);
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = RandomSource::new(9);
        let net = DenseNet::new(&[5, 7], &[Activation::Softmax], &mut rng);
        let mut batch = Array2::zeros((20, 5));
        for v in batch.iter_mut() {
            *v = rng.sample_gaussian(0.0, 3.0).unwrap();
        }
        let (out, _) = net
            .forward(&batch, &DropoutPlan::inference(), None)
            .unwrap();
        for row in out.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sigmoid_outputs_strictly_inside_unit_interval() {
        let net = DenseNet {
            layers: vec![Layer {
                weights: array![[100.0]],
                bias: array![0.0],
                activation: Activation::Sigmoid,
            }],
        };
        let (out, _) = net
            .forward(&array![[5.0], [-5.0]], &DropoutPlan::inference(), None)
            .unwrap();
        assert!(out[(0, 0)] < 1.0 && out[(0, 0)] >= 1.0 - PROB_CLAMP - 1e-18);
        assert!(out[(1, 0)] > 0.0 && out[(1, 0)] <= PROB_CLAMP + 1e-18);
    }

    #[test]
    fn dropout_is_identity_at_inference() {
        let mut rng = RandomSource::new(10);
        let net = DenseNet::new(
            &[4, 9, 2],
            &[Activation::Relu, Activation::Linear],
            &mut rng,
        );
        let batch = array![[1.0, 2.0, 3.0, 4.0]];
        let plan = DropoutPlan {
            rates: vec![0.5],
            active: false,
        };
        let (a, _) = net.forward(&batch, &plan, None).unwrap();
        let (b, _) = net
            .forward(&batch, &DropoutPlan::inference(), None)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dropout_expectation_preserves_activation() {
        // inverted dropout: the masked output is an unbiased estimate of the
        // unmasked one.
        let mut rng = RandomSource::new(11);
        let net = DenseNet::new(
            &[3, 16, 1],
            &[Activation::Relu, Activation::Linear],
            &mut rng,
        );
        let batch = array![[0.7, -0.2, 1.4]];
        let (reference, _) = net
            .forward(&batch, &DropoutPlan::inference(), None)
            .unwrap();
        let plan = DropoutPlan::uniform(0.3, 1);
        let trials = 20_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..trials {
            let (out, _) = net.forward(&batch, &plan, Some(&mut rng)).unwrap();
            sum += out[(0, 0)];
            sum_sq += out[(0, 0)] * out[(0, 0)];
        }
        let mean = sum / trials as f64;
        let var = sum_sq / trials as f64 - mean * mean;
        let se = (var / trials as f64).sqrt();
        assert!(
            (mean - reference[(0, 0)]).abs() < 3.0 * se.max(1e-9),
            "mean {mean} vs reference {} (se {se})",
            reference[(0, 0)]
        );
    }

    #[test]
    fn dropout_gradients_match_finite_differences_with_replayed_masks() {
        let mut rng = RandomSource::new(12);
        let net = DenseNet::new(
            &[3, 8, 2],
            &[Activation::Relu, Activation::Linear],
            &mut rng,
        );
        let batch = array![[0.5, -1.0, 0.8], [1.2, 0.1, -0.3]];
        let target = array![[0.2, -0.4], [0.9, 0.0]];
        let plan = DropoutPlan::uniform(0.4, 1);
        let mask_rng = RandomSource::new(777);
        let loss = |n: &DenseNet| {
            let mut r = mask_rng.clone();
            let (out, _) = n.forward(&batch, &plan, Some(&mut r)).unwrap();
            (&out - &target).mapv(|v| v * v).sum()
        };
        let mut r = mask_rng.clone();
        let (out, cache) = net.forward(&batch, &plan, Some(&mut r)).unwrap();
        let upstream = (&out - &target) * 2.0;
        let (analytic, _) = net.backward(&cache, &upstream).unwrap();
        let numeric = gradcheck::numeric_gradients(&net, 1e-5, loss);
        let err = gradcheck::max_relative_error(&analytic, &numeric, 1e-5);
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn active_dropout_requires_mask_source() {
        let mut rng = RandomSource::new(13);
        let net = DenseNet::new(
            &[2, 4, 1],
            &[Activation::Relu, Activation::Linear],
            &mut rng,
        );
        let err = net
            .forward(&array![[1.0, 2.0]], &DropoutPlan::uniform(0.2, 1), None)
            .unwrap_err();
        assert!(matches!(err, NeuralError::MissingMaskSource));
    }

    #[test]
    fn mismatched_cache_is_rejected() {
        let mut rng = RandomSource::new(14);
        let net_a = DenseNet::new(&[2, 3, 1], &[Activation::Relu, Activation::Linear], &mut rng);
        let net_b = DenseNet::new(&[2, 5, 1], &[Activation::Relu, Activation::Linear], &mut rng);
        let batch = array![[1.0, 2.0]];
        let (out, cache) = net_a
            .forward(&batch, &DropoutPlan::inference(), None)
            .unwrap();
        assert!(net_b.backward(&cache, &Array2::zeros(out.raw_dim())).is_err());
    }

    #[test]
    fn adam_zero_gradient_leaves_parameters_unchanged() {
        let mut rng = RandomSource::new(15);
        let mut net = DenseNet::new(&[2, 2], &[Activation::Linear], &mut rng);
        let before = net.layers[0].weights.clone();
        let mut adam = AdamState::new(&net, 2e-4);
        let zeros = NetGradients::zeros_like(&net);
        adam.step(&mut net, &zeros).unwrap();
        assert_eq!(net.layers[0].weights, before);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        // scalar parameter 0, gradient 1: bias correction makes the first
        // step approximately -lr
        let mut net = DenseNet {
            layers: vec![Layer {
                weights: array![[0.0]],
                bias: array![0.0],
                activation: Activation::Linear,
            }],
        };
        let mut adam = AdamState::new(&net, 2e-4);
        let mut grads = NetGradients::zeros_like(&net);
        grads.layers[0].weights[(0, 0)] = 1.0;
        adam.step(&mut net, &grads).unwrap();
        let moved = net.layers[0].weights[(0, 0)];
        assert!((moved + 2e-4).abs() < 1e-8, "moved {moved}");
    }

    #[test]
    fn adam_constant_gradient_drifts_monotonically() {
        let mut net = DenseNet {
            layers: vec![Layer {
                weights: array![[0.0]],
                bias: array![0.0],
                activation: Activation::Linear,
            }],
        };
        let mut adam = AdamState::new(&net, 1e-2);
        let mut grads = NetGradients::zeros_like(&net);
        grads.layers[0].weights[(0, 0)] = 0.5;
        let mut last = 0.0;
        for _ in 0..100 {
            adam.step(&mut net, &grads).unwrap();
            let now = net.layers[0].weights[(0, 0)];
            assert!(now < last, "drift reversed: {now} after {last}");
            last = now;
        }
    }

    #[test]
    fn adam_rejects_non_finite_gradients() {
        let mut rng = RandomSource::new(16);
        let mut net = DenseNet::new(&[2, 2], &[Activation::Linear], &mut rng);
        let mut adam = AdamState::new(&net, 1e-3);
        let mut grads = NetGradients::zeros_like(&net);
        grads.layers[0].weights[(0, 0)] = f64::NAN;
        assert!(matches!(
            adam.step(&mut net, &grads),
            Err(NeuralError::NonFiniteGradient { layer: 0 })
        ));
    }

    #[test]
    fn checkpoint_roundtrip_is_exact() {
        let mut rng = RandomSource::new(17);
        let net = DenseNet::new(
            &[4, 6, 3],
            &[Activation::Relu, Activation::Softmax],
            &mut rng,
        );
        let json = net.to_checkpoint_json();
        let restored = DenseNet::from_checkpoint_json(&json).unwrap();
        for (a, b) in net.layers.iter().zip(&restored.layers) {
            assert_eq!(a.weights, b.weights);
            assert_eq!(a.bias, b.bias);
            assert_eq!(a.activation, b.activation);
        }
    }

    #[test]
    fn checkpoint_rejects_corrupt_dims() {
        let json = r#"{"version":1,"layers":[{"input":2,"output":2,"activation":"relu","weights":[1.0],"bias":[0.0,0.0]}]}"#;
        assert!(DenseNet::from_checkpoint_json(json).is_err());
    }
}
