use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::NnError;

pub const DEFAULT_BN_EPSILON: f64 = 1e-5;

/// Affine batch-norm parameters and running statistics for one hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub epsilon: f64,
}

impl BatchNorm {
    pub fn identity(width: usize) -> Self {
        Self {
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
            epsilon: DEFAULT_BN_EPSILON,
        }
    }

    pub fn width(&self) -> usize {
        self.gamma.len()
    }

    /// Per-unit `(scale, shift)` such that inference-mode normalization is
    /// `scale * a + shift`.
    pub fn inference_affine(&self) -> (Array1<f64>, Array1<f64>) {
        let scale = &self.gamma / &self.running_var.mapv(|v| (v + self.epsilon).sqrt());
        let shift = &self.beta - &(&scale * &self.running_mean);
        (scale, shift)
    }
}

/// Dense feed-forward ReLU network. Layer `k` maps `layer_dims[k]` inputs to
/// `layer_dims[k + 1]` outputs; every layer but the last is followed by an
/// (optional) batch norm and a ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layer_dims: Vec<usize>,
    pub(crate) weights: Vec<Array2<f64>>,
    pub(crate) biases: Vec<Array1<f64>>,
    pub(crate) bn: Option<Vec<BatchNorm>>,
}

/// Preactivations of every hidden unit plus the output distribution for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// One vector per hidden layer; post batch norm when batch norm is enabled.
    pub preactivations: Vec<Array1<f64>>,
    pub logits: Array1<f64>,
    pub probs: Array1<f64>,
}

/// Batched counterpart of [`ForwardTrace`]: row `i` of every matrix belongs to input `i`.
#[derive(Debug, Clone)]
pub struct BatchTrace {
    pub preactivations: Vec<Array2<f64>>,
    pub logits: Array2<f64>,
}

fn validate_dims(layer_dims: &[usize]) -> Result<(), NnError> {
    if layer_dims.len() < 2 {
        return Err(NnError::Dimension(format!(
            "need at least an input and an output layer, got {layer_dims:?}"
        )));
    }
    if layer_dims.contains(&0) {
        return Err(NnError::Dimension(format!(
            "layer sizes must be positive, got {layer_dims:?}"
        )));
    }
    Ok(())
}

impl MlpModel {
    /// Fan-in scaled uniform initialization, `U(-sqrt(6/fan_in), sqrt(6/fan_in))`,
    /// with zero biases.
    pub fn init(layer_dims: &[usize], seed: u64) -> Result<Self, NnError> {
        validate_dims(layer_dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(layer_dims.len() - 1);
        let mut biases = Vec::with_capacity(layer_dims.len() - 1);
        for pair in layer_dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / fan_in as f64).sqrt();
            weights.push(Array2::from_shape_fn((fan_out, fan_in), |_| {
                rng.random_range(-limit..limit)
            }));
            biases.push(Array1::zeros(fan_out));
        }
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
            bn: None,
        })
    }

    /// Builds a model from explicit parameters, checking that every shape chains.
    pub fn from_parts(
        weights: Vec<Array2<f64>>,
        biases: Vec<Array1<f64>>,
        bn: Option<Vec<BatchNorm>>,
    ) -> Result<Self, NnError> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(NnError::Dimension(format!(
                "{} weight matrices but {} bias vectors",
                weights.len(),
                biases.len()
            )));
        }
        let mut layer_dims = vec![weights[0].ncols()];
        for (k, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.ncols() != *layer_dims.last().unwrap() {
                return Err(NnError::Dimension(format!(
                    "layer {k} expects {} inputs but previous layer has {}",
                    w.ncols(),
                    layer_dims.last().unwrap()
                )));
            }
            if b.len() != w.nrows() {
                return Err(NnError::Dimension(format!(
                    "layer {k} bias has length {} but weight has {} rows",
                    b.len(),
                    w.nrows()
                )));
            }
            layer_dims.push(w.nrows());
        }
        validate_dims(&layer_dims)?;
        let model = Self {
            layer_dims,
            weights,
            biases,
            bn: None,
        };
        match bn {
            Some(bn) => model.with_batch_norm_layers(bn),
            None => Ok(model),
        }
    }

    /// Attaches identity batch norm (gamma 1, beta 0, running stats (0, 1)) to every hidden layer.
    pub fn with_batch_norm(self) -> Self {
        let bn = self.hidden_widths().iter().map(|&w| BatchNorm::identity(w)).collect();
        Self { bn: Some(bn), ..self }
    }

    pub fn with_batch_norm_layers(self, bn: Vec<BatchNorm>) -> Result<Self, NnError> {
        let widths = self.hidden_widths();
        if bn.len() != widths.len() {
            return Err(NnError::Dimension(format!(
                "{} batch-norm layers for {} hidden layers",
                bn.len(),
                widths.len()
            )));
        }
        for (k, (layer, &w)) in bn.iter().zip(widths).enumerate() {
            let lens = [
                layer.gamma.len(),
                layer.beta.len(),
                layer.running_mean.len(),
                layer.running_var.len(),
            ];
            if lens.iter().any(|&l| l != w) {
                return Err(NnError::Dimension(format!(
                    "batch norm {k} vectors have lengths {lens:?}, hidden width is {w}"
                )));
            }
            if layer.running_var.iter().any(|&v| !(v >= 0.0)) || !(layer.epsilon > 0.0) {
                return Err(NnError::Dimension(format!(
                    "batch norm {k} needs non-negative running variance and positive epsilon"
                )));
            }
        }
        Ok(Self { bn: Some(bn), ..self })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn hidden_widths(&self) -> &[usize] {
        &self.layer_dims[1..self.layer_dims.len() - 1]
    }

    pub fn num_hidden_layers(&self) -> usize {
        self.layer_dims.len() - 2
    }

    /// Total number of hidden units, which is also the neural code length.
    pub fn code_len(&self) -> usize {
        self.hidden_widths().iter().sum()
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Array1<f64>] {
        &mut self.biases
    }

    pub fn batch_norm(&self) -> Option<&[BatchNorm]> {
        self.bn.as_deref()
    }

    pub fn batch_norm_mut(&mut self) -> Option<&mut [BatchNorm]> {
        self.bn.as_deref_mut()
    }

    pub fn num_parameters(&self) -> usize {
        let dense: usize = self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>();
        let bn: usize = self
            .bn
            .as_ref()
            .map_or(0, |layers| layers.iter().map(|l| 2 * l.width()).sum());
        dense + bn
    }

    /// Inference-mode forward pass for a single input.
    pub fn forward(&self, x: ArrayView1<f64>) -> Result<ForwardTrace, NnError> {
        if x.len() != self.input_dim() {
            return Err(NnError::Dimension(format!(
                "input has length {}, model expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        let batch = x.insert_axis(Axis(0));
        let trace = self.forward_batch_unchecked(batch);
        let logits = trace.logits.row(0).to_owned();
        let probs = softmax(logits.view());
        Ok(ForwardTrace {
            preactivations: trace
                .preactivations
                .into_iter()
                .map(|z| z.row(0).to_owned())
                .collect(),
            logits,
            probs,
        })
    }

    /// Inference-mode forward pass over the rows of `x`.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<BatchTrace, NnError> {
        if x.ncols() != self.input_dim() {
            return Err(NnError::Dimension(format!(
                "inputs have {} columns, model expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(self.forward_batch_unchecked(x))
    }

    fn forward_batch_unchecked(&self, x: ArrayView2<f64>) -> BatchTrace {
        let hidden = self.num_hidden_layers();
        let mut preactivations = Vec::with_capacity(hidden);
        let mut h = x.to_owned();
        for k in 0..hidden {
            let mut z = h.dot(&self.weights[k].t()) + &self.biases[k];
            if let Some(bn) = &self.bn {
                let (scale, shift) = bn[k].inference_affine();
                z = z * &scale + &shift;
            }
            h = z.mapv(relu);
            preactivations.push(z);
        }
        let logits = h.dot(&self.weights[hidden].t()) + &self.biases[hidden];
        BatchTrace {
            preactivations,
            logits,
        }
    }

    /// Arg-max class predictions for every row of `x`.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<usize>, NnError> {
        let trace = self.forward_batch(x)?;
        Ok(trace.logits.rows().into_iter().map(|r| argmax(r)).collect())
    }

    pub fn accuracy(&self, x: ArrayView2<f64>, labels: &[usize]) -> Result<f64, NnError> {
        if x.nrows() != labels.len() {
            return Err(NnError::Dimension(format!(
                "{} inputs but {} labels",
                x.nrows(),
                labels.len()
            )));
        }
        if labels.is_empty() {
            return Ok(0.0);
        }
        let correct = self
            .predict(x)?
            .iter()
            .zip(labels)
            .filter(|(p, y)| p == y)
            .count();
        Ok(correct as f64 / labels.len() as f64)
    }
}

#[inline]
pub(crate) fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

pub(crate) fn argmax(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax.
pub fn softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let exp = logits.mapv(|v| (v - max).exp());
    let sum = exp.sum();
    exp / sum
}
