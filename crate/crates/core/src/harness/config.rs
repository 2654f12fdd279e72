use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::codes::LayerMask;
use crate::nn::{LrSchedule, Optimizer, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    Width,
    TrainingTime,
    SampleSize,
    Regularizer,
    LabelNoise,
    LayerAblation,
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Factor::Width => "width",
            Factor::TrainingTime => "training_time",
            Factor::SampleSize => "sample_size",
            Factor::Regularizer => "regularizer",
            Factor::LabelNoise => "label_noise",
            Factor::LayerAblation => "layer_ablation",
        })
    }
}

impl std::str::FromStr for Factor {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "width" => Factor::Width,
            "training_time" => Factor::TrainingTime,
            "sample_size" => Factor::SampleSize,
            "regularizer" => Factor::Regularizer,
            "label_noise" => Factor::LabelNoise,
            "layer_ablation" => Factor::LayerAblation,
            other => return Err(HarnessError::Config(format!("unknown factor {other:?}"))),
        })
    }
}

/// One point on the swept axis, as written in the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SweepValue {
    Int(i64),
    Float(f64),
    Text(String),
}

impl fmt::Display for SweepValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepValue::Int(v) => write!(f, "{v}"),
            SweepValue::Float(v) => write!(f, "{v}"),
            SweepValue::Text(s) => f.write_str(s),
        }
    }
}

impl SweepValue {
    /// Parses a command-line token: integer, then float, else text.
    pub fn parse(s: &str) -> Self {
        if let Ok(v) = s.parse::<i64>() {
            SweepValue::Int(v)
        } else if let Ok(v) = s.parse::<f64>() {
            SweepValue::Float(v)
        } else {
            SweepValue::Text(s.to_string())
        }
    }

    pub fn as_usize(&self) -> Result<usize, HarnessError> {
        match self {
            SweepValue::Int(v) if *v > 0 => Ok(*v as usize),
            other => Err(HarnessError::Config(format!("expected a positive integer, got {other}"))),
        }
    }

    pub fn as_f64(&self) -> Result<f64, HarnessError> {
        match self {
            SweepValue::Int(v) => Ok(*v as f64),
            SweepValue::Float(v) => Ok(*v),
            SweepValue::Text(s) => Err(HarnessError::Config(format!("expected a number, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Probe {
    Redundancy,
    Kmeans,
    Knn,
    Logreg,
    Diameter,
}

impl std::str::FromStr for Probe {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "redundancy" => Probe::Redundancy,
            "kmeans" => Probe::Kmeans,
            "knn" => Probe::Knn,
            "logreg" => Probe::Logreg,
            "diameter" => Probe::Diameter,
            other => return Err(HarnessError::Config(format!("unknown probe {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Mnist,
    Cifar10,
    RandomPixels,
    RandomBall,
}

impl std::str::FromStr for DatasetKind {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "mnist" => DatasetKind::Mnist,
            "cifar10" => DatasetKind::Cifar10,
            "random_pixels" | "random-pixels" => DatasetKind::RandomPixels,
            "random_ball" | "random-ball" => DatasetKind::RandomBall,
            other => return Err(HarnessError::Config(format!("unknown dataset {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularizer {
    None,
    BatchNorm,
    WeightDecay,
    GradClip,
}

impl std::str::FromStr for Regularizer {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "none" => Regularizer::None,
            "batch_norm" | "bn" => Regularizer::BatchNorm,
            "weight_decay" | "wd" => Regularizer::WeightDecay,
            "grad_clip" | "clip" => Regularizer::GradClip,
            other => return Err(HarnessError::Config(format!("unknown regularizer {other:?}"))),
        })
    }
}

/// Thresholds separating the under-, critically- and sufficiently-expressive regimes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeThresholds {
    pub ratio_hi: f64,
    pub ratio_lo: f64,
    pub acc_lo: f64,
    pub acc_hi: f64,
}

impl Default for RegimeThresholds {
    fn default() -> Self {
        Self {
            ratio_hi: 0.2,
            ratio_lo: 0.02,
            acc_lo: 0.5,
            acc_hi: 0.9,
        }
    }
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_probes() -> Vec<Probe> {
    vec![Probe::Redundancy, Probe::Kmeans, Probe::Knn, Probe::Logreg]
}
fn default_width() -> usize {
    50
}
fn default_layers() -> usize {
    1
}
fn default_lr() -> f64 {
    1e-3
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_batch() -> usize {
    128
}
fn default_weight_decay_strength() -> f64 {
    0.01
}
fn default_clip() -> f64 {
    1.0
}
fn default_k() -> usize {
    crate::probes::DEFAULT_K
}
fn default_anchors() -> usize {
    600
}
fn default_cap() -> f64 {
    crate::geometry::DEFAULT_CAP
}
fn default_workers() -> usize {
    1
}
fn default_optimizer() -> String {
    "adam".into()
}
fn default_dataset() -> DatasetKind {
    DatasetKind::Mnist
}
fn default_ratio_hi() -> f64 {
    RegimeThresholds::default().ratio_hi
}
fn default_ratio_lo() -> f64 {
    RegimeThresholds::default().ratio_lo
}
fn default_acc_lo() -> f64 {
    RegimeThresholds::default().acc_lo
}
fn default_acc_hi() -> f64 {
    RegimeThresholds::default().acc_hi
}

/// Flat sweep description; every key is top-level in the TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub factor: Factor,
    pub values: Vec<SweepValue>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Epochs at which probes run. Ignored for `training_time`, whose values are the epochs.
    #[serde(default)]
    pub checkpoint_epochs: Vec<usize>,
    #[serde(default = "default_probes")]
    pub probes: Vec<Probe>,

    #[serde(default = "default_dataset")]
    pub dataset: DatasetKind,
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
    #[serde(default)]
    pub train_size: Option<usize>,
    #[serde(default)]
    pub test_size: Option<usize>,
    #[serde(default)]
    pub data_seed: u64,

    #[serde(default = "default_width")]
    pub width: usize,
    #[serde(default = "default_layers")]
    pub hidden_layers: usize,

    #[serde(default = "default_optimizer")]
    pub optimizer: String,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default)]
    pub momentum: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub lr_decay_factor: Option<f64>,
    #[serde(default)]
    pub lr_decay_period: Option<usize>,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default)]
    pub grad_clip_norm: Option<f64>,
    #[serde(default)]
    pub batch_norm: bool,
    #[serde(default)]
    pub noise_rate: f64,
    /// Strengths used when the regularizer factor switches one on.
    #[serde(default = "default_weight_decay_strength")]
    pub regularizer_weight_decay: f64,
    #[serde(default = "default_clip")]
    pub regularizer_clip_norm: f64,

    #[serde(default = "default_k")]
    pub knn_k: usize,
    #[serde(default = "default_anchors")]
    pub diameter_anchors: usize,
    #[serde(default = "default_cap")]
    pub diameter_cap: f64,
    #[serde(default)]
    pub shared_direction: bool,

    #[serde(default = "default_workers")]
    pub workers: usize,

    #[serde(default = "default_ratio_hi")]
    pub ratio_hi: f64,
    #[serde(default = "default_ratio_lo")]
    pub ratio_lo: f64,
    #[serde(default = "default_acc_lo")]
    pub acc_lo: f64,
    #[serde(default = "default_acc_hi")]
    pub acc_hi: f64,
}

impl SweepConfig {
    /// A config with every optional key at its default.
    pub fn new(factor: Factor, values: Vec<SweepValue>) -> Self {
        let mut text = format!("factor = \"{factor}\"\nvalues = []\n");
        text.push_str("checkpoint_epochs = []\n");
        let mut cfg: SweepConfig = toml::from_str(&text).expect("defaults parse");
        cfg.values = values;
        cfg
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: SweepConfig =
            toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn thresholds(&self) -> RegimeThresholds {
        RegimeThresholds {
            ratio_hi: self.ratio_hi,
            ratio_lo: self.ratio_lo,
            acc_lo: self.acc_lo,
            acc_hi: self.acc_hi,
        }
    }

    /// Epochs at which each training run is probed.
    pub fn probe_epochs(&self) -> Result<Vec<usize>, HarnessError> {
        let mut epochs = match self.factor {
            Factor::TrainingTime => self
                .values
                .iter()
                .map(|v| match v {
                    SweepValue::Int(e) if *e >= 0 => Ok(*e as usize),
                    other => Err(HarnessError::Config(format!("epoch {other} is not a non-negative integer"))),
                })
                .collect::<Result<Vec<_>, _>>()?,
            _ => self.checkpoint_epochs.clone(),
        };
        epochs.sort_unstable();
        epochs.dedup();
        Ok(epochs)
    }

    pub fn base_train_config(&self, seed: u64) -> Result<TrainConfig, HarnessError> {
        let optimizer = match self.optimizer.as_str() {
            "adam" => Optimizer::Adam {
                beta1: self.beta1,
                beta2: self.beta2,
                lr: self.lr,
            },
            "sgd" => Optimizer::Sgd {
                lr: self.lr,
                momentum: self.momentum,
            },
            other => return Err(HarnessError::Config(format!("unknown optimizer {other:?}"))),
        };
        let lr_schedule = match (self.lr_decay_factor, self.lr_decay_period) {
            (Some(decay_factor), Some(period_epochs)) => LrSchedule::Step {
                decay_factor,
                period_epochs,
            },
            (None, None) => LrSchedule::Constant,
            _ => {
                return Err(HarnessError::Config(
                    "lr_decay_factor and lr_decay_period must be set together".into(),
                ))
            }
        };
        let epochs = *self.probe_epochs()?.last().unwrap_or(&0);
        let cfg = TrainConfig {
            optimizer,
            epochs,
            batch_size: self.batch_size,
            lr_schedule,
            weight_decay: self.weight_decay,
            grad_clip_norm: self.grad_clip_norm,
            use_batch_norm: self.batch_norm,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.values.is_empty() {
            return bad("values must be nonempty");
        }
        if self.seeds.is_empty() {
            return bad("seeds must be nonempty");
        }
        if self.factor != Factor::TrainingTime && self.checkpoint_epochs.is_empty() {
            return bad("checkpoint_epochs must be nonempty");
        }
        if self.width == 0 || self.hidden_layers == 0 {
            return bad("width and hidden_layers must be positive");
        }
        if self.workers == 0 {
            return bad("workers must be positive");
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return bad("noise_rate must lie in [0, 1]");
        }
        let mut seen = std::collections::HashSet::new();
        for v in &self.values {
            if !seen.insert(v.to_string()) {
                return Err(HarnessError::Config(format!("duplicate sweep value {v}")));
            }
            match self.factor {
                Factor::Width | Factor::SampleSize => {
                    v.as_usize()?;
                }
                Factor::LabelNoise => {
                    let r = v.as_f64()?;
                    if !(0.0..=1.0).contains(&r) {
                        return Err(HarnessError::Config(format!("noise rate {r} outside [0, 1]")));
                    }
                }
                Factor::Regularizer => {
                    v.to_string().parse::<Regularizer>()?;
                }
                Factor::LayerAblation => {
                    let mask = LayerMask::parse(&v.to_string())?;
                    if mask.layers().any(|l| l > self.hidden_layers) {
                        return Err(HarnessError::Config(format!(
                            "mask {v} exceeds {} hidden layers",
                            self.hidden_layers
                        )));
                    }
                }
                Factor::TrainingTime => {}
            }
        }
        self.probe_epochs()?;
        self.thresholds().validate()?;
        self.base_train_config(0)?;
        Ok(())
    }
}
