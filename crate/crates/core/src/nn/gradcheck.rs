use ndarray::ArrayView2;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::backprop::{loss_and_gradients, BnMode};
use super::model::MlpModel;

/// Smallest number of parameters a check compares (all of them when the model is smaller).
pub const MIN_CHECKED_PARAMS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub epsilon: f64,
    pub weight_decay: f64,
    pub num_params: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            weight_decay: 0.0,
            num_params: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Parameters whose ±epsilon probe flipped some activation, so the
    /// central difference straddles a kink and is not comparable.
    pub skipped_kinks: usize,
}

/// `|a - b| / max(|a| + |b|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares backprop gradients with five-point central differences on a seeded
/// random subset of parameters. Models with batch norm are checked in
/// training mode (minibatch statistics); the hidden biases feeding a batch
/// norm are left out there, since mean subtraction cancels them and their
/// true gradient is exactly zero.
pub fn grad_check(
    model: &MlpModel,
    x: ArrayView2<f64>,
    labels: &[usize],
    config: &GradCheckConfig,
) -> GradCheckReport {
    assert!(config.epsilon > 0.0, "epsilon must be positive");
    let mode = if model.batch_norm().is_some() {
        BnMode::Batch
    } else {
        BnMode::Running
    };
    let base = loss_and_gradients(model, x, labels, config.weight_decay, mode);
    let analytic: Vec<f64> = base
        .grads
        .slices()
        .iter()
        .flat_map(|s| s.iter().copied())
        .collect();
    let eligible = eligible_params(model);
    let total = eligible.len();
    let want = config.num_params.max(MIN_CHECKED_PARAMS).min(total);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    // Draw extra candidates so that kink skips can be replaced.
    let candidates: Vec<usize> = sample(&mut rng, total, total.min(want * 2))
        .into_iter()
        .map(|i| eligible[i])
        .collect();

    let mut probe = model.clone();
    let mut max_rel = 0.0f64;
    let mut checked = 0;
    let mut skipped = 0;
    for flat in candidates {
        if checked == want {
            break;
        }
        let original = get_param(&probe, flat);
        let mut at = |step: f64| {
            set_param(&mut probe, flat, original + step * config.epsilon);
            let out = loss_and_gradients(&probe, x, labels, config.weight_decay, mode);
            (out.loss, out.signs == base.signs)
        };
        let (p2, p1, m1, m2) = (at(2.0), at(1.0), at(-1.0), at(-2.0));
        set_param(&mut probe, flat, original);
        if !(p2.1 && p1.1 && m1.1 && m2.1) {
            skipped += 1;
            continue;
        }
        let numeric = (8.0 * (p1.0 - m1.0) - (p2.0 - m2.0)) / (12.0 * config.epsilon);
        max_rel = max_rel.max(relative_error(analytic[flat], numeric));
        checked += 1;
    }
    GradCheckReport {
        max_rel_error: max_rel,
        checked,
        skipped_kinks: skipped,
    }
}

/// Flat indices of every parameter that can move the training-mode loss.
fn eligible_params(model: &MlpModel) -> Vec<usize> {
    let hidden = model.num_hidden_layers();
    let bn = model.batch_norm().is_some();
    let mut out = Vec::new();
    let mut offset = 0;
    for (slot, s) in model.param_slices().iter().enumerate() {
        let inert_bias = bn && slot % 2 == 1 && slot / 2 < hidden;
        if !inert_bias {
            out.extend(offset..offset + s.len());
        }
        offset += s.len();
    }
    out
}

fn locate(model: &MlpModel, mut flat: usize) -> (usize, usize) {
    for (slot, s) in model.param_slices().iter().enumerate() {
        if flat < s.len() {
            return (slot, flat);
        }
        flat -= s.len();
    }
    panic!("parameter index out of range");
}

fn get_param(model: &MlpModel, flat: usize) -> f64 {
    let (slot, i) = locate(model, flat);
    model.param_slices()[slot][i]
}

fn set_param(model: &mut MlpModel, flat: usize, value: f64) {
    let (slot, i) = locate(model, flat);
    model.param_slices_mut()[slot][i] = value;
}
