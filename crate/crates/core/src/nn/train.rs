use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::backprop::{loss_and_gradients, BnMode, Gradients};
use super::model::MlpModel;
use super::NnError;
use crate::data::Dataset;

const ADAM_EPSILON: f64 = 1e-8;
/// Weight of the current minibatch in the batch-norm running averages.
const BN_MOMENTUM: f64 = 0.1;
/// Keeps the shuffle streams apart from the initialization stream of the same seed.
const SHUFFLE_SALT: u64 = 0x5348_5546_464c_4531;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Adam { beta1: f64, beta2: f64, lr: f64 },
    Sgd { lr: f64, momentum: f64 },
}

impl Optimizer {
    pub fn adam(lr: f64) -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            lr,
        }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            Optimizer::Adam { lr, .. } | Optimizer::Sgd { lr, .. } => lr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// Multiply the rate by `decay_factor` every `period_epochs` epochs.
    Step { decay_factor: f64, period_epochs: usize },
}

impl LrSchedule {
    /// Learning rate for the zero-based `epoch`.
    pub fn rate(&self, base: f64, epoch: usize) -> f64 {
        match *self {
            LrSchedule::Constant => base,
            LrSchedule::Step {
                decay_factor,
                period_epochs,
            } => base * decay_factor.powi((epoch / period_epochs.max(1)) as i32),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_schedule: LrSchedule,
    pub weight_decay: f64,
    pub grad_clip_norm: Option<f64>,
    pub use_batch_norm: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: Optimizer::adam(1e-3),
            epochs: 200,
            batch_size: 128,
            lr_schedule: LrSchedule::Constant,
            weight_decay: 0.0,
            grad_clip_norm: None,
            use_batch_norm: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |msg: String| Err(NnError::Config(msg));
        match self.optimizer {
            Optimizer::Adam { beta1, beta2, lr } => {
                if !(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0) {
                    return bad(format!("adam betas must lie in (0, 1), got {beta1}, {beta2}"));
                }
                if !(lr >= 0.0) {
                    return bad(format!("learning rate must be non-negative, got {lr}"));
                }
            }
            Optimizer::Sgd { lr, momentum } => {
                if !(lr >= 0.0) {
                    return bad(format!("learning rate must be non-negative, got {lr}"));
                }
                if !(0.0..1.0).contains(&momentum) {
                    return bad(format!("momentum must lie in [0, 1), got {momentum}"));
                }
            }
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if !(self.weight_decay >= 0.0) {
            return bad(format!("weight decay must be >= 0, got {}", self.weight_decay));
        }
        if let Some(c) = self.grad_clip_norm {
            if !(c > 0.0) {
                return bad(format!("clip norm must be > 0, got {c}"));
            }
        }
        if let LrSchedule::Step { period_epochs: 0, .. } = self.lr_schedule {
            return bad("step schedule period must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// One-based epoch number.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MlpModel,
    pub history: Vec<EpochStats>,
    /// Snapshots taken after the requested epochs (epoch 0 is the initial model).
    pub checkpoints: Vec<(usize, MlpModel)>,
}

/// First and second moment buffers, one per parameter slice.
enum OptimizerState {
    Adam { m: Vec<Vec<f64>>, v: Vec<Vec<f64>>, t: i32 },
    Sgd { velocity: Vec<Vec<f64>> },
}

impl OptimizerState {
    fn new(optimizer: &Optimizer, model: &MlpModel) -> Self {
        let zeros = || -> Vec<Vec<f64>> {
            model.param_slices().iter().map(|s| vec![0.0; s.len()]).collect()
        };
        match optimizer {
            Optimizer::Adam { .. } => OptimizerState::Adam {
                m: zeros(),
                v: zeros(),
                t: 0,
            },
            Optimizer::Sgd { .. } => OptimizerState::Sgd { velocity: zeros() },
        }
    }

    fn step(&mut self, optimizer: &Optimizer, lr: f64, model: &mut MlpModel, grads: &Gradients) {
        let params = model.param_slices_mut();
        let grads = grads.slices();
        match (self, *optimizer) {
            (OptimizerState::Adam { m, v, t }, Optimizer::Adam { beta1, beta2, .. }) => {
                *t += 1;
                let c1 = 1.0 - beta1.powi(*t);
                let c2 = 1.0 - beta2.powi(*t);
                for (((p, g), m), v) in params.into_iter().zip(grads).zip(m).zip(v) {
                    for i in 0..p.len() {
                        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                        let m_hat = m[i] / c1;
                        let v_hat = v[i] / c2;
                        p[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
                    }
                }
            }
            (OptimizerState::Sgd { velocity }, Optimizer::Sgd { momentum, .. }) => {
                for ((p, g), vel) in params.into_iter().zip(grads).zip(velocity) {
                    for i in 0..p.len() {
                        vel[i] = momentum * vel[i] - lr * g[i];
                        p[i] += vel[i];
                    }
                }
            }
            _ => unreachable!("optimizer state built from a different optimizer"),
        }
    }
}

fn check_labels(x: ArrayView2<f64>, labels: &[usize], model: &MlpModel) -> Result<(), NnError> {
    if x.nrows() == 0 {
        return Err(NnError::EmptyDataset);
    }
    if x.nrows() != labels.len() {
        return Err(NnError::Dimension(format!(
            "{} inputs but {} labels",
            x.nrows(),
            labels.len()
        )));
    }
    if x.ncols() != model.input_dim() {
        return Err(NnError::Dimension(format!(
            "inputs have {} columns, model expects {}",
            x.ncols(),
            model.input_dim()
        )));
    }
    let classes = model.num_classes();
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(NnError::Label { label: bad, classes });
    }
    Ok(())
}

/// Trains `model` on a dataset and snapshots it after each epoch listed in
/// `checkpoint_epochs`.
pub fn train(
    model: MlpModel,
    dataset: &Dataset,
    config: &TrainConfig,
    checkpoint_epochs: &[usize],
) -> Result<TrainOutcome, NnError> {
    let mut checkpoints = Vec::new();
    let (model, history) = train_with(
        model,
        dataset.x.view(),
        &dataset.y,
        config,
        checkpoint_epochs,
        |epoch, m| {
            checkpoints.push((epoch, m.clone()));
            Ok(())
        },
    )?;
    Ok(TrainOutcome {
        model,
        history,
        checkpoints,
    })
}

/// Training loop over raw arrays. `on_checkpoint` runs after every epoch in
/// `checkpoint_epochs` (epoch 0 means before the first update) and may abort
/// training by returning an error.
pub fn train_with<F>(
    mut model: MlpModel,
    x: ArrayView2<f64>,
    labels: &[usize],
    config: &TrainConfig,
    checkpoint_epochs: &[usize],
    mut on_checkpoint: F,
) -> Result<(MlpModel, Vec<EpochStats>), NnError>
where
    F: FnMut(usize, &MlpModel) -> Result<(), NnError>,
{
    config.validate()?;
    check_labels(x, labels, &model)?;
    if config.use_batch_norm && model.batch_norm().is_none() {
        model = model.with_batch_norm();
    }
    let is_checkpoint = |e: usize| checkpoint_epochs.contains(&e);
    if is_checkpoint(0) {
        on_checkpoint(0, &model)?;
    }

    let n = x.nrows();
    let mode = if model.batch_norm().is_some() {
        BnMode::Batch
    } else {
        BnMode::Running
    };
    let mut state = OptimizerState::new(&config.optimizer, &model);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ SHUFFLE_SALT);
        rng.set_stream(epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut rng);
        let lr = config.lr_schedule.rate(config.optimizer.lr(), epoch);

        let mut loss_sum = 0.0;
        let mut correct = 0;
        for chunk in order.chunks(config.batch_size) {
            let xb = x.select(Axis(0), chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let mut eval = loss_and_gradients(&model, xb.view(), &yb, config.weight_decay, mode);
            if !eval.loss.is_finite() {
                return Err(NnError::Diverged { epoch: epoch + 1 });
            }
            loss_sum += eval.loss * chunk.len() as f64;
            correct += eval.correct;
            if let Some(clip) = config.grad_clip_norm {
                let norm = eval.grads.global_norm();
                if norm > clip {
                    eval.grads.scale(clip / norm);
                }
            }
            state.step(&config.optimizer, lr, &mut model, &eval.grads);
            if model.param_slices().iter().any(|s| s.iter().any(|v| !v.is_finite())) {
                return Err(NnError::Diverged { epoch: epoch + 1 });
            }
            if let Some(bn) = model.batch_norm_mut() {
                let m = chunk.len() as f64;
                let unbias = if m > 1.0 { m / (m - 1.0) } else { 1.0 };
                for (layer, (mean, var)) in bn.iter_mut().zip(&eval.batch_stats) {
                    layer.running_mean *= 1.0 - BN_MOMENTUM;
                    layer.running_mean.scaled_add(BN_MOMENTUM, mean);
                    layer.running_var *= 1.0 - BN_MOMENTUM;
                    layer.running_var.scaled_add(BN_MOMENTUM * unbias, var);
                }
            }
        }
        let stats = EpochStats {
            epoch: epoch + 1,
            train_loss: loss_sum / n as f64,
            train_acc: correct as f64 / n as f64,
        };
        log::debug!(
            "epoch {} loss {:.5} acc {:.4}",
            stats.epoch,
            stats.train_loss,
            stats.train_acc
        );
        history.push(stats);
        if is_checkpoint(epoch + 1) {
            on_checkpoint(epoch + 1, &model)?;
        }
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::Rng;

    fn toy(n: usize, d: usize, classes: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, d), |_| rng.random::<f64>());
        let y = (0..n).map(|_| rng.random_range(0..classes)).collect();
        (x, y)
    }

    fn bits(m: &MlpModel) -> Vec<u64> {
        m.param_slices()
            .iter()
            .flat_map(|s| s.iter().map(|v| v.to_bits()))
            .collect()
    }

    #[test]
    fn interpolates_tiny_set() {
        let (x, y) = toy(10, 20, 3, 1);
        let model = MlpModel::init(&[20, 100, 3], 0).unwrap();
        let cfg = TrainConfig {
            epochs: 200,
            ..Default::default()
        };
        let (_, hist) = train_with(model, x.view(), &y, &cfg, &[], |_, _| Ok(())).unwrap();
        assert_eq!(hist.last().unwrap().train_acc, 1.0);
    }

    #[test]
    fn zero_learning_rate_leaves_weights_unchanged() {
        let (x, y) = toy(30, 5, 3, 2);
        let model = MlpModel::init(&[5, 8, 3], 4).unwrap();
        let before = bits(&model);
        for optimizer in [Optimizer::adam(0.0), Optimizer::Sgd { lr: 0.0, momentum: 0.9 }] {
            let cfg = TrainConfig {
                optimizer,
                epochs: 5,
                batch_size: 7,
                ..Default::default()
            };
            let (m, _) =
                train_with(model.clone(), x.view(), &y, &cfg, &[], |_, _| Ok(())).unwrap();
            assert_eq!(bits(&m), before);
        }
    }

    #[test]
    fn infinite_clip_equals_no_clip_and_zero_decay_is_inert() {
        let (x, y) = toy(40, 6, 4, 3);
        let model = MlpModel::init(&[6, 10, 10, 4], 5).unwrap();
        let base = TrainConfig {
            epochs: 4,
            batch_size: 16,
            ..Default::default()
        };
        let (plain, _) = train_with(model.clone(), x.view(), &y, &base, &[], |_, _| Ok(())).unwrap();
        let clip = TrainConfig {
            grad_clip_norm: Some(f64::INFINITY),
            ..base.clone()
        };
        let (clipped, _) = train_with(model.clone(), x.view(), &y, &clip, &[], |_, _| Ok(())).unwrap();
        assert_eq!(bits(&plain), bits(&clipped));
        let decay = TrainConfig {
            weight_decay: 0.0,
            ..base
        };
        let (decayed, _) = train_with(model, x.view(), &y, &decay, &[], |_, _| Ok(())).unwrap();
        assert_eq!(bits(&plain), bits(&decayed));
    }

    #[test]
    fn training_is_replayable() {
        let (x, y) = toy(50, 4, 2, 6);
        let model = MlpModel::init(&[4, 12, 2], 7).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 8,
            use_batch_norm: true,
            ..Default::default()
        };
        let (a, ha) = train_with(model.clone(), x.view(), &y, &cfg, &[], |_, _| Ok(())).unwrap();
        let (b, hb) = train_with(model, x.view(), &y, &cfg, &[], |_, _| Ok(())).unwrap();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(ha, hb);
        assert_ne!(a.batch_norm().unwrap()[0].running_var, ndarray::Array1::ones(12));
    }

    #[test]
    fn checkpoints_fire_at_requested_epochs() {
        let (x, y) = toy(20, 3, 2, 8);
        let model = MlpModel::init(&[3, 5, 2], 0).unwrap();
        let cfg = TrainConfig {
            epochs: 6,
            ..Default::default()
        };
        let mut seen = Vec::new();
        train_with(model.clone(), x.view(), &y, &cfg, &[0, 1, 3, 6, 9], |e, _| {
            seen.push(e);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, vec![0, 1, 3, 6]);
    }

    #[test]
    fn divergence_reports_epoch() {
        let (x, y) = toy(20, 3, 2, 9);
        let model = MlpModel::init(&[3, 5, 2], 0).unwrap();
        let cfg = TrainConfig {
            optimizer: Optimizer::Sgd {
                lr: 1e308,
                momentum: 0.0,
            },
            epochs: 10,
            batch_size: 4,
            ..Default::default()
        };
        let err = train_with(model, x.view(), &y, &cfg, &[], |_, _| Ok(())).unwrap_err();
        assert!(matches!(err, NnError::Diverged { epoch } if (1..=10).contains(&epoch)));
    }

    #[test]
    fn rejects_bad_labels_and_config() {
        let (x, _) = toy(4, 3, 2, 1);
        let model = MlpModel::init(&[3, 5, 2], 0).unwrap();
        let cfg = TrainConfig::default();
        let err = train_with(model.clone(), x.view(), &[0, 1, 2, 0], &cfg, &[], |_, _| Ok(()));
        assert!(matches!(err, Err(NnError::Label { label: 2, .. })));
        let bad = TrainConfig {
            optimizer: Optimizer::Adam {
                beta1: 1.0,
                beta2: 0.999,
                lr: 1e-3,
            },
            ..Default::default()
        };
        assert!(matches!(
            train_with(model, x.view(), &[0, 1, 1, 0], &bad, &[], |_, _| Ok(())),
            Err(NnError::Config(_))
        ));
    }

    #[test]
    fn step_schedule_decays() {
        let s = LrSchedule::Step {
            decay_factor: 0.1,
            period_epochs: 100,
        };
        assert_eq!(s.rate(0.01, 0), 0.01);
        assert_eq!(s.rate(0.01, 99), 0.01);
        assert!((s.rate(0.01, 100) - 0.001).abs() < 1e-18);
    }
}
