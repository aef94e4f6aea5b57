//! Dense feed-forward network engine.
//!
//! Supports exactly what the channel models need: fully-connected layers
//! with relu/sigmoid/tanh/linear/softmax activations, a batched forward
//! pass with cached activations, reverse-mode gradients (including the
//! gradient with respect to the input, which adversarial training needs),
//! Adam, and an exact flatten/unflatten round trip used by aggregation and
//! the weight-file format.

mod adam;
mod io;
mod loss;
mod mat;

pub use adam::{adam_step, sgd_step, AdamState};
pub use io::{decode_weights, encode_weights, read_weights, write_weights, WeightFile, WEIGHT_MAGIC};
pub use loss::{cross_entropy, gaussian_kl, PROB_FLOOR};
pub use mat::Mat;

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("layer {layer}: expected input of length {expected}, got {got}")]
    DimensionMismatch {
        layer: usize,
        expected: usize,
        got: usize,
    },
    #[error("invalid layer specs: {0}")]
    InvalidSpec(String),
    #[error("layer {layer}: non-finite gradient entry")]
    NonFiniteGradient { layer: usize },
    #[error("flattened length {got} does not match spec parameter count {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite input value")]
    NonFiniteInput,
    #[error("class label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("probability vector sums to {sum}, not 1")]
    NotASimplex { sum: f64 },
    #[error("weight file {path}: {msg}")]
    BadWeightFile { path: String, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;

/// Element-wise layer activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    Linear,
    /// Row-wise softmax; only valid on the final layer of a classifier.
    Softmax,
}

impl Activation {
    pub fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Sigmoid => 1,
            Activation::Tanh => 2,
            Activation::Linear => 3,
            Activation::Softmax => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => Activation::Relu,
            1 => Activation::Sigmoid,
            2 => Activation::Tanh,
            3 => Activation::Linear,
            4 => Activation::Softmax,
            _ => return None,
        })
    }
}

/// Shape and activation of one dense layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(input_dim: usize, output_dim: usize, activation: Activation) -> LayerSpec {
        LayerSpec {
            input_dim,
            output_dim,
            activation,
        }
    }

    /// Weights plus biases of this layer.
    pub fn param_count(&self) -> usize {
        self.output_dim * (self.input_dim + 1)
    }
}

/// Build the spec list for `input -> hidden... -> output` with relu hidden
/// layers and the given output activation.
pub fn dense_specs(input: usize, hidden: &[usize], output: usize, out_act: Activation) -> Vec<LayerSpec> {
    let mut specs = Vec::with_capacity(hidden.len() + 1);
    let mut prev = input;
    for &h in hidden {
        specs.push(LayerSpec::new(prev, h, Activation::Relu));
        prev = h;
    }
    specs.push(LayerSpec::new(prev, output, out_act));
    specs
}

/// Validate a spec chain: positive dims, consecutive shapes agree, softmax
/// only on the final layer.
pub fn validate_specs(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(NnError::InvalidSpec("empty spec list".into()));
    }
    for (i, s) in specs.iter().enumerate() {
        if s.input_dim == 0 || s.output_dim == 0 {
            return Err(NnError::InvalidSpec(format!("layer {i} has a zero dimension")));
        }
        if s.activation == Activation::Softmax && i + 1 != specs.len() {
            return Err(NnError::InvalidSpec(format!(
                "layer {i}: softmax is only permitted on the final layer"
            )));
        }
        if i > 0 && specs[i - 1].output_dim != s.input_dim {
            return Err(NnError::InvalidSpec(format!(
                "layer {i} input {} does not match layer {} output {}",
                s.input_dim,
                i - 1,
                specs[i - 1].output_dim
            )));
        }
    }
    Ok(())
}

/// Total trainable parameters of a spec chain.
pub fn param_count(specs: &[LayerSpec]) -> usize {
    specs.iter().map(LayerSpec::param_count).sum()
}

/// Parameters of one dense layer: weight matrix stored row-major as
/// `output_dim x input_dim`, then a bias vector of length `output_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerParams {
    fn zeros(spec: &LayerSpec) -> LayerParams {
        LayerParams {
            in_dim: spec.input_dim,
            out_dim: spec.output_dim,
            weights: vec![0.0; spec.input_dim * spec.output_dim],
            bias: vec![0.0; spec.output_dim],
        }
    }
}

/// All parameters of a dense network, ordered layer by layer.
///
/// `flatten` emits, per layer, the weight matrix row-major followed by the
/// bias vector; `unflatten` reverses it exactly, bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub layers: Vec<LayerParams>,
}

impl ModelWeights {
    pub fn zeros(specs: &[LayerSpec]) -> ModelWeights {
        ModelWeights {
            layers: specs.iter().map(LayerParams::zeros).collect(),
        }
    }

    /// He-style uniform init scaled by fan-in, zero biases.
    pub fn he_uniform<R: Rng>(specs: &[LayerSpec], rng: &mut R) -> ModelWeights {
        let mut w = ModelWeights::zeros(specs);
        for layer in &mut w.layers {
            let limit = (6.0 / layer.in_dim as f64).sqrt();
            for v in &mut layer.weights {
                *v = rng.random_range(-limit..limit);
            }
        }
        w
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.bias);
        }
        out
    }

    pub fn unflatten(flat: &[f64], specs: &[LayerSpec]) -> Result<ModelWeights> {
        let expected = param_count(specs);
        if flat.len() != expected {
            return Err(NnError::LengthMismatch {
                expected,
                got: flat.len(),
            });
        }
        let mut w = ModelWeights::zeros(specs);
        let mut at = 0;
        for layer in &mut w.layers {
            let nw = layer.weights.len();
            layer.weights.copy_from_slice(&flat[at..at + nw]);
            at += nw;
            let nb = layer.bias.len();
            layer.bias.copy_from_slice(&flat[at..at + nb]);
            at += nb;
        }
        Ok(w)
    }

    fn check_shapes(&self, specs: &[LayerSpec]) -> Result<()> {
        if self.layers.len() != specs.len() {
            return Err(NnError::InvalidSpec(format!(
                "weights have {} layers, specs have {}",
                self.layers.len(),
                specs.len()
            )));
        }
        for (i, (l, s)) in self.layers.iter().zip(specs).enumerate() {
            if l.in_dim != s.input_dim || l.out_dim != s.output_dim {
                return Err(NnError::DimensionMismatch {
                    layer: i,
                    expected: s.input_dim,
                    got: l.in_dim,
                });
            }
        }
        Ok(())
    }
}

/// Cached post-activation values from a batched forward pass;
/// `activations[0]` is the input batch.
pub struct BatchTrace {
    activations: Vec<Mat>,
}

impl BatchTrace {
    pub fn output(&self) -> &Mat {
        self.activations.last().expect("trace is never empty")
    }
}

fn apply_activation(z: &mut Mat, act: Activation) {
    match act {
        Activation::Linear => {}
        Activation::Relu => {
            for v in z.as_mut_slice() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        Activation::Sigmoid => {
            for v in z.as_mut_slice() {
                *v = 1.0 / (1.0 + (-*v).exp());
            }
        }
        Activation::Tanh => {
            for v in z.as_mut_slice() {
                *v = v.tanh();
            }
        }
        Activation::Softmax => {
            for i in 0..z.rows() {
                let row = z.row_mut(i);
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for v in row.iter_mut() {
                    *v = (*v - max).exp();
                    sum += *v;
                }
                for v in row.iter_mut() {
                    *v /= sum;
                }
            }
        }
    }
}

/// Batched forward pass; rows of `input` are samples.
pub fn forward_batch(
    weights: &ModelWeights,
    specs: &[LayerSpec],
    input: &Mat,
) -> Result<(Mat, BatchTrace)> {
    validate_specs(specs)?;
    weights.check_shapes(specs)?;
    if input.cols() != specs[0].input_dim {
        return Err(NnError::DimensionMismatch {
            layer: 0,
            expected: specs[0].input_dim,
            got: input.cols(),
        });
    }
    let mut activations = Vec::with_capacity(specs.len() + 1);
    activations.push(input.clone());
    for (layer, spec) in weights.layers.iter().zip(specs) {
        let prev = activations.last().unwrap();
        let mut z = prev.matmul_bt_slice(&layer.weights, layer.out_dim);
        for i in 0..z.rows() {
            let row = z.row_mut(i);
            for (v, b) in row.iter_mut().zip(&layer.bias) {
                *v += *b;
            }
        }
        apply_activation(&mut z, spec.activation);
        activations.push(z);
    }
    let out = activations.last().unwrap().clone();
    Ok((out, BatchTrace { activations }))
}

/// Single-sample forward pass.
pub fn forward(weights: &ModelWeights, specs: &[LayerSpec], input: &[f64]) -> Result<Vec<f64>> {
    let (out, _) = forward_batch(weights, specs, &Mat::from_row(input))?;
    Ok(out.row(0).to_vec())
}

/// Backpropagate `d loss / d post-activation` into `d loss / d pre-activation`.
fn activation_backward(delta: &mut Mat, post: &Mat, act: Activation) {
    match act {
        Activation::Linear => {}
        Activation::Relu => {
            for (d, a) in delta.as_mut_slice().iter_mut().zip(post.as_slice()) {
                if *a <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        Activation::Sigmoid => {
            for (d, a) in delta.as_mut_slice().iter_mut().zip(post.as_slice()) {
                *d *= a * (1.0 - a);
            }
        }
        Activation::Tanh => {
            for (d, a) in delta.as_mut_slice().iter_mut().zip(post.as_slice()) {
                *d *= 1.0 - a * a;
            }
        }
        Activation::Softmax => {
            for i in 0..delta.rows() {
                let a = post.row(i);
                let d = delta.row_mut(i);
                let dot: f64 = d.iter().zip(a).map(|(x, y)| x * y).sum();
                for (dv, av) in d.iter_mut().zip(a) {
                    *dv = av * (*dv - dot);
                }
            }
        }
    }
}

/// Gradients from a batched backward pass.
pub struct BatchGradients {
    /// Same shape as the network's `ModelWeights`.
    pub weights: ModelWeights,
    /// `d loss / d input`, row per sample.
    pub input: Mat,
}

fn backward_impl(
    weights: &ModelWeights,
    specs: &[LayerSpec],
    trace: &BatchTrace,
    output_grad: &Mat,
    want_weight_grads: bool,
) -> Result<BatchGradients> {
    let last = specs.len() - 1;
    if output_grad.cols() != specs[last].output_dim {
        return Err(NnError::DimensionMismatch {
            layer: last,
            expected: specs[last].output_dim,
            got: output_grad.cols(),
        });
    }
    let mut grads = ModelWeights::zeros(specs);
    let mut delta = output_grad.clone();
    for l in (0..specs.len()).rev() {
        activation_backward(&mut delta, &trace.activations[l + 1], specs[l].activation);
        let prev = &trace.activations[l];
        if want_weight_grads {
            let gw = delta.matmul_at(prev); // (out x in)
            grads.layers[l].weights.copy_from_slice(gw.as_slice());
            let gb = &mut grads.layers[l].bias;
            for i in 0..delta.rows() {
                for (g, d) in gb.iter_mut().zip(delta.row(i)) {
                    *g += *d;
                }
            }
        }
        let wl = &weights.layers[l];
        delta = delta.matmul_slice(&wl.weights, wl.in_dim); // (m x in)
    }
    Ok(BatchGradients {
        weights: grads,
        input: delta,
    })
}

/// Batched reverse pass. `output_grad` holds `d loss / d output` per row of
/// the forward batch; returns weight gradients summed over the batch plus
/// per-sample input gradients.
pub fn backward_batch(
    weights: &ModelWeights,
    specs: &[LayerSpec],
    trace: &BatchTrace,
    output_grad: &Mat,
) -> Result<BatchGradients> {
    backward_impl(weights, specs, trace, output_grad, true)
}

/// Like [`backward_batch`] but skips weight gradients; used where only the
/// gradient with respect to the input is consumed.
pub fn backward_batch_input_only(
    weights: &ModelWeights,
    specs: &[LayerSpec],
    trace: &BatchTrace,
    output_grad: &Mat,
) -> Result<Mat> {
    Ok(backward_impl(weights, specs, trace, output_grad, false)?.input)
}

/// Single-sample backward pass: run [`forward`] first; this recomputes the
/// trace for the given input and propagates `loss_grad_at_output`.
pub fn backward(
    weights: &ModelWeights,
    specs: &[LayerSpec],
    input: &[f64],
    loss_grad_at_output: &[f64],
) -> Result<(ModelWeights, Vec<f64>)> {
    let (_, trace) = forward_batch(weights, specs, &Mat::from_row(input))?;
    let grads = backward_batch(weights, specs, &trace, &Mat::from_row(loss_grad_at_output))?;
    Ok((grads.weights, grads.input.row(0).to_vec()))
}

/// Hyperparameters of one local training run.
#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(learning_rate: f64, epochs: usize, batch_size: usize, seed: u64) -> TrainConfig {
        assert!(batch_size >= 1, "batch_size must be at least 1");
        assert!(learning_rate > 0.0, "learning rate must be positive");
        TrainConfig {
            learning_rate,
            epochs,
            batch_size,
            seed,
        }
    }
}
