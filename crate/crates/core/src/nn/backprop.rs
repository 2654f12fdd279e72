use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};

use super::model::{relu, softmax, MlpModel};

/// How batch-norm layers normalize during a loss evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    /// Minibatch statistics; the mode used while training.
    Batch,
    /// Stored running statistics; the mode used for codes and geometry.
    Running,
}

/// Gradients laid out like the model parameters. `gamma`/`beta` are empty
/// when the model has no batch norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub gamma: Vec<Array1<f64>>,
    pub beta: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w.as_slice().expect("standard layout"));
            out.push(b.as_slice().expect("standard layout"));
        }
        for (g, b) in self.gamma.iter().zip(&self.beta) {
            out.push(g.as_slice().expect("standard layout"));
            out.push(b.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            out.push(w.as_slice_mut().expect("standard layout"));
            out.push(b.as_slice_mut().expect("standard layout"));
        }
        for (g, b) in self.gamma.iter_mut().zip(self.beta.iter_mut()) {
            out.push(g.as_slice_mut().expect("standard layout"));
            out.push(b.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn global_norm(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|g| *g *= factor);
        }
    }
}

impl MlpModel {
    /// Parameter slices in a fixed order shared with [`Gradients::slices`]:
    /// `W0, b0, W1, b1, ..., gamma0, beta0, ...`.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            out.push(w.as_slice_mut().expect("standard layout"));
            out.push(b.as_slice_mut().expect("standard layout"));
        }
        if let Some(bn) = self.bn.as_mut() {
            for layer in bn.iter_mut() {
                out.push(layer.gamma.as_slice_mut().expect("standard layout"));
                out.push(layer.beta.as_slice_mut().expect("standard layout"));
            }
        }
        out
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w.as_slice().expect("standard layout"));
            out.push(b.as_slice().expect("standard layout"));
        }
        if let Some(bn) = self.bn.as_ref() {
            for layer in bn {
                out.push(layer.gamma.as_slice().expect("standard layout"));
                out.push(layer.beta.as_slice().expect("standard layout"));
            }
        }
        out
    }
}

/// Result of one loss evaluation with gradients.
#[derive(Debug, Clone)]
pub struct LossEval {
    /// Mean softmax cross-entropy plus the L2 penalty.
    pub loss: f64,
    pub correct: usize,
    pub grads: Gradients,
    /// Per-hidden-layer minibatch `(mean, biased variance)`; only in [`BnMode::Batch`].
    pub batch_stats: Vec<(Array1<f64>, Array1<f64>)>,
    /// Activation signs (z > 0) of every hidden unit for every row, row-major by layer.
    pub signs: Vec<bool>,
}

struct HiddenCache {
    input: Array2<f64>,
    z: Array2<f64>,
    /// Normalized preactivation and `1/sqrt(var + eps)` for batch norm.
    bn: Option<(Array2<f64>, Array1<f64>)>,
}

/// Softmax cross-entropy loss plus `weight_decay * sum(W^2)` and its exact gradient.
pub fn loss_and_gradients(
    model: &MlpModel,
    x: ArrayView2<f64>,
    labels: &[usize],
    weight_decay: f64,
    mode: BnMode,
) -> LossEval {
    let n = x.nrows();
    assert_eq!(n, labels.len(), "row/label count mismatch");
    assert!(n > 0, "empty batch");
    let nf = n as f64;
    let hidden = model.num_hidden_layers();

    let mut caches: Vec<HiddenCache> = Vec::with_capacity(hidden);
    let mut batch_stats = Vec::new();
    let mut h = x.to_owned();
    for k in 0..hidden {
        let a = h.dot(&model.weights[k].t()) + &model.biases[k];
        let (z, bn_cache) = match (&model.bn, mode) {
            (None, _) => (a, None),
            (Some(bn), BnMode::Batch) => {
                let layer = &bn[k];
                let mean = a.mean_axis(Axis(0)).expect("non-empty batch");
                let centered = &a - &mean;
                let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).expect("non-empty batch");
                let inv_std = var.mapv(|v| 1.0 / (v + layer.epsilon).sqrt());
                let xhat = centered * &inv_std;
                let z = &xhat * &layer.gamma + &layer.beta;
                batch_stats.push((mean, var));
                (z, Some((xhat, inv_std)))
            }
            (Some(bn), BnMode::Running) => {
                let layer = &bn[k];
                let inv_std = layer.running_var.mapv(|v| 1.0 / (v + layer.epsilon).sqrt());
                let xhat = (&a - &layer.running_mean) * &inv_std;
                let z = &xhat * &layer.gamma + &layer.beta;
                (z, Some((xhat, inv_std)))
            }
        };
        let next = z.mapv(relu);
        caches.push(HiddenCache {
            input: std::mem::replace(&mut h, next),
            z,
            bn: bn_cache,
        });
    }
    let logits = h.dot(&model.weights[hidden].t()) + &model.biases[hidden];

    let mut loss = 0.0;
    let mut correct = 0;
    let mut dlogits = Array2::zeros(logits.raw_dim());
    for (i, (row, &y)) in logits.rows().into_iter().zip(labels).enumerate() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.mapv(|v| (v - max).exp()).sum().ln();
        loss += lse - row[y];
        if super::model::argmax(row) == y {
            correct += 1;
        }
        let p = softmax(row);
        let mut d = dlogits.row_mut(i);
        d.assign(&p);
        d[y] -= 1.0;
    }
    loss /= nf;
    dlogits /= nf;
    if weight_decay != 0.0 {
        loss += weight_decay
            * model
                .weights
                .iter()
                .map(|w| w.iter().map(|v| v * v).sum::<f64>())
                .sum::<f64>();
    }

    let layers = hidden + 1;
    let mut g_weights = vec![Array2::zeros((0, 0)); layers];
    let mut g_biases = vec![Array1::zeros(0); layers];
    let mut g_gamma = Vec::new();
    let mut g_beta = Vec::new();
    if model.bn.is_some() {
        g_gamma = vec![Array1::zeros(0); hidden];
        g_beta = vec![Array1::zeros(0); hidden];
    }

    g_weights[hidden] = dlogits.t().dot(&h);
    g_biases[hidden] = dlogits.sum_axis(Axis(0));
    let mut dh = dlogits.dot(&model.weights[hidden]);

    for k in (0..hidden).rev() {
        let cache = &caches[k];
        let mut dz = dh;
        Zip::from(&mut dz).and(&cache.z).for_each(|d, &z| {
            if z <= 0.0 {
                *d = 0.0;
            }
        });
        let da = match (&model.bn, &cache.bn) {
            (Some(bn), Some((xhat, inv_std))) => {
                let layer = &bn[k];
                g_gamma[k] = (&dz * xhat).sum_axis(Axis(0));
                g_beta[k] = dz.sum_axis(Axis(0));
                let dxhat = dz * &layer.gamma;
                match mode {
                    BnMode::Batch => {
                        let sum_dxhat = dxhat.sum_axis(Axis(0));
                        let sum_dxhat_xhat = (&dxhat * xhat).sum_axis(Axis(0));
                        let inner = dxhat * nf - &sum_dxhat - &(xhat * &sum_dxhat_xhat);
                        inner * &(inv_std / nf)
                    }
                    BnMode::Running => dxhat * inv_std,
                }
            }
            _ => dz,
        };
        g_weights[k] = da.t().dot(&cache.input);
        g_biases[k] = da.sum_axis(Axis(0));
        dh = da.dot(&model.weights[k]);
    }

    if weight_decay != 0.0 {
        for (g, w) in g_weights.iter_mut().zip(&model.weights) {
            g.scaled_add(2.0 * weight_decay, w);
        }
    }

    let signs = caches
        .iter()
        .flat_map(|c| c.z.iter().map(|&v| v > 0.0).collect::<Vec<_>>())
        .collect();

    LossEval {
        loss,
        correct,
        grads: Gradients {
            weights: g_weights,
            biases: g_biases,
            gamma: g_gamma,
            beta: g_beta,
        },
        batch_stats,
        signs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn zero_model_output_bias_gradient_is_probs_minus_onehot() {
        let mut m = MlpModel::init(&[3, 4, 3], 0).unwrap();
        for w in m.weights_mut() {
            w.fill(0.0);
        }
        let x = Array2::zeros((2, 3));
        let labels = [0usize, 2];
        let eval = loss_and_gradients(&m, x.view(), &labels, 0.0, BnMode::Running);
        // Uniform probabilities 1/3 everywhere.
        let expected = [
            (1.0 / 3.0 - 1.0 + 1.0 / 3.0) / 2.0,
            (2.0 / 3.0) / 2.0,
            (1.0 / 3.0 + 1.0 / 3.0 - 1.0) / 2.0,
        ];
        for (g, e) in eval.grads.biases[1].iter().zip(expected) {
            assert!((g - e).abs() < 1e-15, "{g} vs {e}");
        }
        assert!((eval.loss - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn slices_align_with_params() {
        let m = MlpModel::init(&[3, 4, 5, 2], 1).unwrap().with_batch_norm();
        let x = Array2::from_shape_fn((6, 3), |(i, j)| (i as f64 - j as f64) * 0.3);
        let eval = loss_and_gradients(&m, x.view(), &[0, 1, 0, 1, 1, 0], 0.0, BnMode::Batch);
        let g: Vec<usize> = eval.grads.slices().iter().map(|s| s.len()).collect();
        let p: Vec<usize> = m.param_slices().iter().map(|s| s.len()).collect();
        assert_eq!(g, p);
        assert_eq!(eval.batch_stats.len(), 2);
    }
}
