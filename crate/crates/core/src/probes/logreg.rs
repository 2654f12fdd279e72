use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{accuracy, check_inputs, same_layout, ProbeError, ProbeMethod, ProbeParams, ProbeResult};
use crate::codes::NeuralCode;
use crate::nn::softmax;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRegConfig {
    pub l2: f64,
    pub epochs: usize,
    pub lr: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            epochs: 100,
            lr: 0.1,
            decay_factor: 0.5,
            decay_every: 25,
            batch_size: 128,
            seed: 0,
        }
    }
}

fn features(codes: &[NeuralCode]) -> Array2<f64> {
    let dim = codes.first().map_or(0, NeuralCode::len);
    let mut x = Array2::zeros((codes.len(), dim));
    for (mut row, c) in x.rows_mut().into_iter().zip(codes) {
        for (dst, b) in row.iter_mut().zip(c.bits()) {
            *dst = if b { 1.0 } else { 0.0 };
        }
    }
    x
}

struct Fitted {
    weights: Array2<f64>, // dim x classes
    bias: Array1<f64>,
}

impl Fitted {
    fn predict(&self, x: &Array2<f64>) -> Vec<usize> {
        let logits = x.dot(&self.weights) + &self.bias;
        logits
            .rows()
            .into_iter()
            .map(|r| {
                let mut best = 0;
                for (i, &v) in r.iter().enumerate() {
                    if v > r[best] {
                        best = i;
                    }
                }
                best
            })
            .collect()
    }
}

fn fit(
    x: &Array2<f64>,
    labels: &[usize],
    classes: usize,
    cfg: &LogRegConfig,
) -> Result<Fitted, ProbeError> {
    let (n, dim) = x.dim();
    let mut weights = Array2::<f64>::zeros((dim, classes));
    let mut bias = Array1::<f64>::zeros(classes);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr * cfg.decay_factor.powi((epoch / cfg.decay_every.max(1)) as i32);
        order.shuffle(&mut rng);
        let mut loss = 0.0;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let xb = x.select(Axis(0), chunk);
            let logits = xb.dot(&weights) + &bias;
            let mut grad = Array2::<f64>::zeros(logits.raw_dim());
            for (r, (row, &i)) in logits.rows().into_iter().zip(chunk).enumerate() {
                let p = softmax(row);
                let y = labels[i];
                loss -= p[y].max(f64::MIN_POSITIVE).ln();
                let mut g = grad.row_mut(r);
                g.assign(&p);
                g[y] -= 1.0;
            }
            grad /= chunk.len() as f64;
            let mut gw = xb.t().dot(&grad);
            gw.scaled_add(cfg.l2, &weights);
            let gb = grad.sum_axis(Axis(0));
            weights.scaled_add(-lr, &gw);
            bias.scaled_add(-lr, &gb);
        }
        if !loss.is_finite() || weights.iter().any(|w| !w.is_finite()) {
            return Err(ProbeError::Failed(format!(
                "logistic regression diverged at epoch {}",
                epoch + 1
            )));
        }
    }
    Ok(Fitted { weights, bias })
}

/// Multinomial logistic regression on raw 0/1 code bits, trained by
/// minibatch gradient descent with an L2 penalty and step-decayed rate.
pub fn logreg_accuracy(
    train_codes: &[NeuralCode],
    train_labels: &[usize],
    test_codes: &[NeuralCode],
    test_labels: &[usize],
    config: &LogRegConfig,
) -> Result<ProbeResult, ProbeError> {
    check_inputs(train_codes, train_labels, "logistic regression needs training codes")?;
    check_inputs(test_codes, test_labels, "logistic regression needs test codes")?;
    same_layout(train_codes, test_codes)?;
    if !(config.lr > 0.0) || config.epochs == 0 {
        return Err(ProbeError::Param("lr and epochs must be positive".into()));
    }
    let classes = train_labels
        .iter()
        .chain(test_labels)
        .max()
        .copied()
        .unwrap_or(0)
        + 1;
    let x_train = features(train_codes);
    let model = fit(&x_train, train_labels, classes, config)?;
    let x_test = features(test_codes);
    Ok(ProbeResult {
        method: ProbeMethod::LogReg,
        train_accuracy: accuracy(&model.predict(&x_train), train_labels),
        test_accuracy: accuracy(&model.predict(&x_test), test_labels),
        hyperparams: ProbeParams::LogReg(*config),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_codes(n: usize, len: usize, seed: u64) -> Vec<NeuralCode> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let bits: Vec<bool> = (0..len).map(|_| rng.random()).collect();
                NeuralCode::from_bits(&bits, &[len]).unwrap()
            })
            .collect()
    }

    #[test]
    fn one_coordinate_separates() {
        let codes = random_codes(200, 16, 1);
        let labels: Vec<usize> = codes.iter().map(|c| usize::from(c.bit(3))).collect();
        let r = logreg_accuracy(&codes, &labels, &codes, &labels, &LogRegConfig::default()).unwrap();
        assert_eq!(r.train_accuracy, 1.0);
    }

    #[test]
    fn unrelated_labels_sit_at_chance() {
        let train = random_codes(5000, 40, 2);
        let test = random_codes(5000, 40, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ytr: Vec<usize> = (0..5000).map(|_| rng.random_range(0..10)).collect();
        let yte: Vec<usize> = (0..5000).map(|_| rng.random_range(0..10)).collect();
        let r = logreg_accuracy(&train, &ytr, &test, &yte, &LogRegConfig::default()).unwrap();
        assert!((r.test_accuracy - 0.1).abs() < 0.05, "{}", r.test_accuracy);
    }

    #[test]
    fn divergence_is_reported() {
        let codes = random_codes(50, 8, 5);
        let labels: Vec<usize> = (0..50).map(|i| i % 3).collect();
        let cfg = LogRegConfig {
            lr: 1e308,
            l2: 1e10,
            ..Default::default()
        };
        assert!(matches!(
            logreg_accuracy(&codes, &labels, &codes, &labels, &cfg),
            Err(ProbeError::Failed(_))
        ));
    }
}
