use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use super::config::{DatasetKind, Factor, Probe, Regularizer, SweepConfig, SweepValue};
use super::records::{
    load_records, save_records, Appender, ExperimentRecord, TimingRecord, RECORD_HEADER,
};
use super::HarnessError;
use crate::codes::{encode_batch, LayerMask, NeuralCode};
use crate::data::{self, Dataset, DATA_DIR_ENV};
use crate::geometry::{avg_stochastic_diameter, DiameterConfig};
use crate::nn::{train_with, MlpModel, NnError, TrainConfig};
use crate::probes::{
    kmeans_accuracy, knn_accuracy, logreg_accuracy, redundancy, KMeansConfig, LogRegConfig,
    ProbeError,
};

pub const RECORDS_FILE: &str = "records.csv";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const CONFIG_FILE: &str = "config.toml";

// Synthetic data matches MNIST's shape.
const SYNTHETIC_DIM: usize = 784;
const SYNTHETIC_CLASSES: usize = 10;
const DEFAULT_SYNTHETIC_TRAIN: usize = 10_000;
const DEFAULT_SYNTHETIC_TEST: usize = 2_000;
// Keeps the synthetic test split independent of the training split.
const TEST_SEED_SALT: u64 = 0x7465_7374;

#[derive(Debug, Clone)]
pub struct SweepData {
    pub train: Dataset,
    pub test: Dataset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    /// All records in canonical order, including those kept from earlier runs.
    pub records: Vec<ExperimentRecord>,
    pub cells_run: usize,
    pub cells_skipped: usize,
    pub cells_failed: usize,
}

/// Data directory from the config, else `NHASH_DATA_DIR`, else `./data/<dataset>`.
pub fn resolve_data_dir(config: &SweepConfig) -> PathBuf {
    if let Some(dir) = &config.data_dir {
        return dir.clone();
    }
    let base = std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"));
    match config.dataset {
        DatasetKind::Mnist => base.join("mnist"),
        DatasetKind::Cifar10 => base.join("cifar10"),
        DatasetKind::RandomPixels | DatasetKind::RandomBall => base,
    }
}

/// Loads (or generates) the train and test splits named by the config,
/// subsampled to `train_size` / `test_size` with `data_seed`.
pub fn load_sweep_data(config: &SweepConfig) -> Result<SweepData, HarnessError> {
    let (train, test) = match config.dataset {
        DatasetKind::RandomPixels | DatasetKind::RandomBall => {
            let generate = match config.dataset {
                DatasetKind::RandomPixels => data::random_pixels,
                _ => data::random_ball,
            };
            let n = config.train_size.unwrap_or(DEFAULT_SYNTHETIC_TRAIN);
            let m = config.test_size.unwrap_or(DEFAULT_SYNTHETIC_TEST);
            let train = generate(n, SYNTHETIC_DIM, SYNTHETIC_CLASSES, config.data_seed);
            let test = generate(m, SYNTHETIC_DIM, SYNTHETIC_CLASSES, config.data_seed ^ TEST_SEED_SALT);
            return Ok(SweepData { train, test });
        }
        DatasetKind::Mnist => {
            let dir = resolve_data_dir(config);
            (data::load_mnist_split(&dir, true)?, data::load_mnist_split(&dir, false)?)
        }
        DatasetKind::Cifar10 => {
            let dir = resolve_data_dir(config);
            (data::load_cifar10_split(&dir, true)?, data::load_cifar10_split(&dir, false)?)
        }
    };
    let shrink = |ds: Dataset, size: Option<usize>, seed: u64| -> Result<Dataset, HarnessError> {
        match size {
            Some(s) if s < ds.len() => Ok(data::subsample(&ds, s, seed)?),
            _ => Ok(ds),
        }
    };
    Ok(SweepData {
        train: shrink(train, config.train_size, config.data_seed)?,
        test: shrink(test, config.test_size, config.data_seed ^ TEST_SEED_SALT)?,
    })
}

/// One training run.
#[derive(Debug, Clone)]
struct Cell {
    /// The swept value, for factors that need a run per value.
    value: Option<SweepValue>,
    seed: u64,
}

/// Resolved settings of one training run.
struct RunPlan {
    train: Dataset,
    width: usize,
    train_config: TrainConfig,
    noise_rate: f64,
    regularizers: String,
}

type RecordKey = (String, u64, usize);

fn key(r: &ExperimentRecord) -> RecordKey {
    (r.value.clone(), r.seed, r.epoch)
}

fn regularizer_names(tc: &TrainConfig) -> String {
    let mut names = Vec::new();
    if tc.use_batch_norm {
        names.push("batch_norm");
    }
    if tc.weight_decay > 0.0 {
        names.push("weight_decay");
    }
    if tc.grad_clip_norm.is_some() {
        names.push("grad_clip");
    }
    if names.is_empty() {
        "none".into()
    } else {
        names.join("+")
    }
}

enum Msg {
    Record(ExperimentRecord, f64),
    CellDone { failed: bool },
}

struct Sweep<'a> {
    config: &'a SweepConfig,
    data: &'a SweepData,
    epochs: Vec<usize>,
    masks: Vec<(String, Option<LayerMask>)>,
}

impl<'a> Sweep<'a> {
    fn new(config: &'a SweepConfig, data: &'a SweepData) -> Result<Self, HarnessError> {
        config.validate()?;
        if data.train.is_empty() || data.test.is_empty() {
            return Err(HarnessError::Config("empty train or test split".into()));
        }
        let masks = if config.factor == Factor::LayerAblation {
            config
                .values
                .iter()
                .map(|v| Ok((v.to_string(), Some(LayerMask::parse(&v.to_string())?))))
                .collect::<Result<_, HarnessError>>()?
        } else {
            vec![(String::new(), None)]
        };
        Ok(Self {
            config,
            data,
            epochs: config.probe_epochs()?,
            masks,
        })
    }

    fn cells(&self) -> Vec<Cell> {
        let per_value = !matches!(self.config.factor, Factor::TrainingTime | Factor::LayerAblation);
        let mut cells = Vec::new();
        if per_value {
            for v in &self.config.values {
                for &seed in &self.config.seeds {
                    cells.push(Cell {
                        value: Some(v.clone()),
                        seed,
                    });
                }
            }
        } else {
            for &seed in &self.config.seeds {
                cells.push(Cell { value: None, seed });
            }
        }
        cells
    }

    /// `(value, seed, epoch)` of every record a cell produces.
    fn expected_keys(&self, cell: &Cell) -> Vec<RecordKey> {
        match (&cell.value, self.config.factor) {
            (Some(v), _) => self
                .epochs
                .iter()
                .map(|&e| (v.to_string(), cell.seed, e))
                .collect(),
            (None, Factor::TrainingTime) => self
                .epochs
                .iter()
                .map(|&e| (e.to_string(), cell.seed, e))
                .collect(),
            (None, _) => self
                .masks
                .iter()
                .flat_map(|(name, _)| self.epochs.iter().map(move |&e| (name.clone(), cell.seed, e)))
                .collect(),
        }
    }

    fn plan(&self, cell: &Cell) -> Result<RunPlan, HarnessError> {
        let cfg = self.config;
        let mut tc = cfg.base_train_config(cell.seed)?;
        let mut width = cfg.width;
        let mut noise_rate = cfg.noise_rate;
        let mut train = self.data.train.clone();
        if let Some(v) = &cell.value {
            match cfg.factor {
                Factor::Width => width = v.as_usize()?,
                Factor::SampleSize => {
                    let size = v.as_usize()?;
                    if size > train.len() {
                        return Err(HarnessError::Config(format!(
                            "sample size {size} exceeds the {} available training examples",
                            train.len()
                        )));
                    }
                    train = data::subsample(&train, size, cell.seed)?;
                }
                Factor::LabelNoise => noise_rate = v.as_f64()?,
                Factor::Regularizer => {
                    tc.use_batch_norm = false;
                    tc.weight_decay = 0.0;
                    tc.grad_clip_norm = None;
                    match v.to_string().parse::<Regularizer>()? {
                        Regularizer::None => {}
                        Regularizer::BatchNorm => tc.use_batch_norm = true,
                        Regularizer::WeightDecay => tc.weight_decay = cfg.regularizer_weight_decay,
                        Regularizer::GradClip => tc.grad_clip_norm = Some(cfg.regularizer_clip_norm),
                    }
                    tc.validate()?;
                }
                Factor::TrainingTime | Factor::LayerAblation => {}
            }
        }
        if noise_rate > 0.0 {
            train = data::inject_label_noise(&train, noise_rate, cell.seed)?;
        }
        Ok(RunPlan {
            regularizers: regularizer_names(&tc),
            train,
            width,
            train_config: tc,
            noise_rate,
        })
    }

    fn run_cell(&self, cell: &Cell, tx: &mpsc::Sender<Msg>) -> bool {
        let keys = self.expected_keys(cell);
        let mut emitted: HashSet<RecordKey> = HashSet::new();
        let factor = self.config.factor.to_string();
        let fail_rest = |emitted: &HashSet<RecordKey>, status: String, plan: Option<&RunPlan>| {
            for k in keys.iter().filter(|k| !emitted.contains(*k)) {
                let mut r = ExperimentRecord::blank(&factor, &k.0, k.1, k.2);
                if let Some(p) = plan {
                    r.sample_size = p.train.len();
                    r.noise_rate = p.noise_rate;
                    r.regularizers = p.regularizers.clone();
                }
                r.status = status.clone();
                let _ = tx.send(Msg::Record(r, 0.0));
            }
        };
        let plan = match self.plan(cell) {
            Ok(p) => p,
            Err(e) => {
                log::error!("cell {:?} seed {}: {e}", cell.value, cell.seed);
                fail_rest(&emitted, "failed".into(), None);
                return false;
            }
        };
        let mut dims = vec![plan.train.input_dim()];
        dims.extend(std::iter::repeat_n(plan.width, self.config.hidden_layers));
        dims.push(plan.train.num_classes.max(self.data.test.num_classes));
        let model = match MlpModel::init(&dims, cell.seed) {
            Ok(m) => m,
            Err(e) => {
                log::error!("cell {:?} seed {}: {e}", cell.value, cell.seed);
                fail_rest(&emitted, "failed".into(), Some(&plan));
                return false;
            }
        };
        log::info!(
            "{} {} seed {}: training {:?} for {} epochs on {} examples",
            factor,
            cell.value.as_ref().map(|v| v.to_string()).unwrap_or_default(),
            cell.seed,
            dims,
            plan.train_config.epochs,
            plan.train.len()
        );
        let mut clock = Instant::now();
        let result = train_with(
            model,
            plan.train.x.view(),
            &plan.train.y,
            &plan.train_config,
            &self.epochs,
            |epoch, model| {
                let records = self
                    .evaluate(cell, &plan, epoch, model)
                    .map_err(|e| NnError::Aborted(e.to_string()))?;
                let seconds = clock.elapsed().as_secs_f64();
                for r in records {
                    emitted.insert(key(&r));
                    let _ = tx.send(Msg::Record(r, seconds));
                }
                clock = Instant::now();
                Ok(())
            },
        );
        match result {
            Ok(_) => true,
            Err(NnError::Diverged { epoch }) => {
                log::warn!("{factor} seed {}: diverged at epoch {epoch}", cell.seed);
                fail_rest(&emitted, format!("diverged@{epoch}"), Some(&plan));
                false
            }
            Err(e) => {
                log::error!("{factor} seed {}: {e}", cell.seed);
                fail_rest(&emitted, "failed".into(), Some(&plan));
                false
            }
        }
    }

    fn evaluate(
        &self,
        cell: &Cell,
        plan: &RunPlan,
        epoch: usize,
        model: &MlpModel,
    ) -> Result<Vec<ExperimentRecord>, HarnessError> {
        let cfg = self.config;
        let test = &self.data.test;
        let want = |p: Probe| cfg.probes.contains(&p);
        let codes_train = encode_batch(model, plan.train.x.view())?;
        let codes_test = encode_batch(model, test.x.view())?;
        let raw_test_acc = model.accuracy(test.x.view(), &test.y)?;
        let diameter = if want(Probe::Diameter) {
            let anchors = test.head(cfg.diameter_anchors);
            let dcfg = DiameterConfig {
                cap: cfg.diameter_cap,
                shared_direction: cfg.shared_direction,
                seed: cell.seed,
            };
            Some(avg_stochastic_diameter(model, anchors.x.view(), &dcfg)?)
        } else {
            None
        };

        let mut out = Vec::with_capacity(self.masks.len());
        for (mask_name, mask) in &self.masks {
            let (tr, te): (Vec<NeuralCode>, Vec<NeuralCode>) = match mask {
                Some(m) => (
                    codes_train.iter().map(|c| c.restrict(m)).collect::<Result<_, _>>()?,
                    codes_test.iter().map(|c| c.restrict(m)).collect::<Result<_, _>>()?,
                ),
                None => (codes_train.clone(), codes_test.clone()),
            };
            let value = match (&cell.value, cfg.factor) {
                (Some(v), _) => v.to_string(),
                (None, Factor::TrainingTime) => epoch.to_string(),
                (None, _) => mask_name.clone(),
            };
            let mut r = ExperimentRecord::blank(&cfg.factor.to_string(), &value, cell.seed, epoch);
            r.sample_size = plan.train.len();
            r.noise_rate = plan.noise_rate;
            r.regularizers = plan.regularizers.clone();
            r.raw_test_acc = Some(raw_test_acc);
            if want(Probe::Redundancy) {
                r.redundancy_train = Some(redundancy(&tr)?.ratio);
                r.redundancy_test = Some(redundancy(&te)?.ratio);
            }
            if want(Probe::Kmeans) {
                let kc = KMeansConfig::new(plan.train.num_classes, cell.seed);
                match kmeans_accuracy(&tr, &plan.train.y, &te, &test.y, &kc) {
                    Ok(p) => {
                        r.kmeans_train = Some(p.train_accuracy);
                        r.kmeans_test = Some(p.test_accuracy);
                    }
                    Err(e @ ProbeError::DegenerateClustering { .. }) => {
                        log::warn!("{value} seed {} epoch {epoch}: {e}", cell.seed)
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            if want(Probe::Knn) {
                let k = cfg.knn_k.min(tr.len());
                let p = knn_accuracy(&tr, &plan.train.y, &te, &test.y, k)?;
                r.knn_train = Some(p.train_accuracy);
                r.knn_test = Some(p.test_accuracy);
            }
            if want(Probe::Logreg) {
                let lc = LogRegConfig {
                    seed: cell.seed,
                    ..LogRegConfig::default()
                };
                match logreg_accuracy(&tr, &plan.train.y, &te, &test.y, &lc) {
                    Ok(p) => {
                        r.logreg_train = Some(p.train_accuracy);
                        r.logreg_test = Some(p.test_accuracy);
                    }
                    Err(e @ ProbeError::Failed(_)) => {
                        log::warn!("{value} seed {} epoch {epoch}: {e}", cell.seed)
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            if let Some(d) = &diameter {
                r.mean_diameter = d.mean;
                r.bounded_count = Some(d.bounded_count);
            }
            out.push(r);
        }
        Ok(out)
    }

    /// Records sorted by sweep value position, seed position, then epoch.
    fn canonical_order(&self, records: &mut [ExperimentRecord]) {
        let value_pos: HashMap<String, usize> = self
            .config
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| (v.to_string(), i))
            .collect();
        let seed_pos: HashMap<u64, usize> = self
            .config
            .seeds
            .iter()
            .enumerate()
            .map(|(i, &s)| (s, i))
            .collect();
        records.sort_by_key(|r| {
            (
                value_pos.get(&r.value).copied().unwrap_or(usize::MAX),
                seed_pos.get(&r.seed).copied().unwrap_or(usize::MAX),
                r.epoch,
            )
        });
    }
}

/// Runs a sweep, loading its data first.
pub fn run_sweep(config: &SweepConfig, out_dir: impl AsRef<Path>) -> Result<SweepSummary, HarnessError> {
    config.validate()?;
    let data = load_sweep_data(config)?;
    run_sweep_with_data(config, &data, out_dir)
}

/// Runs every (value, seed) training run of the sweep and writes
/// `records.csv`, `timings.csv` and `config.toml` under `out_dir`.
///
/// Runs whose records are all present in an existing `records.csv` are
/// skipped, so an interrupted sweep resumes where it stopped. Results do not
/// depend on `workers`.
pub fn run_sweep_with_data(
    config: &SweepConfig,
    data: &SweepData,
    out_dir: impl AsRef<Path>,
) -> Result<SweepSummary, HarnessError> {
    let out_dir = out_dir.as_ref();
    let sweep = Sweep::new(config, data)?;
    std::fs::create_dir_all(out_dir)?;

    let mut stored = config.clone();
    stored.workers = 1;
    let config_path = out_dir.join(CONFIG_FILE);
    if config_path.exists() {
        let previous = SweepConfig::load(&config_path)?;
        let mut previous_cmp = previous.clone();
        previous_cmp.workers = 1;
        if previous_cmp != stored {
            return Err(HarnessError::Config(format!(
                "{} holds results of a different sweep config",
                out_dir.display()
            )));
        }
    }
    std::fs::write(&config_path, stored.to_toml())?;

    let records_path = out_dir.join(RECORDS_FILE);
    let existing = if records_path.exists() {
        load_records(&records_path)?
    } else {
        Vec::new()
    };
    let have: HashSet<RecordKey> = existing.iter().map(key).collect();

    let all_cells = sweep.cells();
    let (todo, done): (Vec<Cell>, Vec<Cell>) = all_cells
        .into_iter()
        .partition(|c| !sweep.expected_keys(c).iter().all(|k| have.contains(k)));
    log::info!("{} runs to do, {} already complete", todo.len(), done.len());

    let mut records: BTreeMap<RecordKey, ExperimentRecord> =
        existing.into_iter().map(|r| (key(&r), r)).collect();
    let mut appender = Appender::open(&records_path, &RECORD_HEADER)?;
    let mut timings = Appender::open(
        &out_dir.join(TIMINGS_FILE),
        &["factor", "value", "seed", "epoch", "seconds"],
    )?;
    let mut cells_failed = 0;

    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<Msg>();
    let workers = config.workers.min(todo.len()).max(1);
    std::thread::scope(|scope| -> Result<(), HarnessError> {
        for _ in 0..workers {
            let tx = tx.clone();
            let (sweep, todo, next) = (&sweep, &todo, &next);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(cell) = todo.get(i) else { break };
                let ok = sweep.run_cell(cell, &tx);
                let _ = tx.send(Msg::CellDone { failed: !ok });
            });
        }
        drop(tx);
        for msg in rx {
            match msg {
                Msg::Record(r, seconds) => {
                    appender.append(&r)?;
                    timings.append(&TimingRecord {
                        factor: r.factor.clone(),
                        value: r.value.clone(),
                        seed: r.seed,
                        epoch: r.epoch,
                        seconds,
                    })?;
                    records.insert(key(&r), r);
                }
                Msg::CellDone { failed } => cells_failed += usize::from(failed),
            }
        }
        Ok(())
    })?;

    let mut records: Vec<ExperimentRecord> = records.into_values().collect();
    sweep.canonical_order(&mut records);
    let tmp = out_dir.join(format!("{RECORDS_FILE}.tmp"));
    save_records(&records, &tmp)?;
    std::fs::rename(&tmp, &records_path)?;
    Ok(SweepSummary {
        records,
        cells_run: todo.len(),
        cells_skipped: done.len(),
        cells_failed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_data() -> SweepData {
        SweepData {
            train: data::random_pixels(120, 6, 3, 1),
            test: data::random_pixels(40, 6, 3, 2),
        }
    }

    fn tiny_config(factor: Factor, values: Vec<SweepValue>) -> SweepConfig {
        let mut cfg = SweepConfig::new(factor, values);
        cfg.seeds = vec![0, 1];
        cfg.checkpoint_epochs = vec![0, 2];
        cfg.width = 8;
        cfg.batch_size = 32;
        cfg.probes = vec![Probe::Redundancy, Probe::Knn, Probe::Kmeans, Probe::Logreg, Probe::Diameter];
        cfg.diameter_anchors = 10;
        cfg
    }

    #[test]
    fn width_sweep_writes_all_records() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(Factor::Width, vec![SweepValue::Int(3), SweepValue::Int(6)]);
        let s = run_sweep_with_data(&cfg, &tiny_data(), dir.path()).unwrap();
        assert_eq!(s.records.len(), 2 * 2 * 2);
        assert_eq!(s.cells_run, 4);
        assert!(s.records.iter().all(|r| r.is_ok() && r.knn_test.is_some()));
        assert_eq!(s.records[0].value, "3");
        assert_eq!(s.records[0].epoch, 0);
        assert_eq!(load_records(dir.path().join(RECORDS_FILE)).unwrap(), s.records);
    }

    #[test]
    fn resume_skips_finished_runs_and_keeps_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(Factor::LabelNoise, vec![SweepValue::Float(0.0), SweepValue::Float(0.5)]);
        run_sweep_with_data(&cfg, &tiny_data(), dir.path()).unwrap();
        let first = std::fs::read(dir.path().join(RECORDS_FILE)).unwrap();
        let again = run_sweep_with_data(&cfg, &tiny_data(), dir.path()).unwrap();
        assert_eq!(again.cells_run, 0);
        assert_eq!(again.cells_skipped, 4);
        assert_eq!(std::fs::read(dir.path().join(RECORDS_FILE)).unwrap(), first);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let cfg = tiny_config(Factor::Regularizer, ["none", "batch_norm", "weight_decay", "grad_clip"]
            .iter()
            .map(|s| SweepValue::Text(s.to_string()))
            .collect());
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let one = run_sweep_with_data(&cfg, &tiny_data(), a.path()).unwrap();
        let mut cfg3 = cfg.clone();
        cfg3.workers = 3;
        let three = run_sweep_with_data(&cfg3, &tiny_data(), b.path()).unwrap();
        assert_eq!(one.records, three.records);
        let regs: Vec<_> = one.records.iter().map(|r| r.regularizers.as_str()).collect();
        assert!(regs.contains(&"batch_norm") && regs.contains(&"grad_clip") && regs.contains(&"weight_decay"));
    }

    #[test]
    fn training_time_and_layer_ablation_share_runs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(Factor::TrainingTime, vec![SweepValue::Int(0), SweepValue::Int(1), SweepValue::Int(3)]);
        let s = run_sweep_with_data(&cfg, &tiny_data(), dir.path()).unwrap();
        assert_eq!(s.cells_run, 2);
        assert_eq!(s.records.len(), 6);
        assert!(s.records.iter().all(|r| r.value == r.epoch.to_string()));

        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(
            Factor::LayerAblation,
            vec![SweepValue::Text("1".into()), SweepValue::Text("1+2".into())],
        );
        cfg.hidden_layers = 2;
        let s = run_sweep_with_data(&cfg, &tiny_data(), dir.path()).unwrap();
        assert_eq!(s.cells_run, 2);
        assert_eq!(s.records.len(), 2 * 2 * 2);
    }

    #[test]
    fn divergence_marks_cell_and_sweep_continues() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(Factor::Width, vec![SweepValue::Int(4)]);
        cfg.lr = 1e308;
        cfg.optimizer = "sgd".into();
        let s = run_sweep_with_data(&cfg, &tiny_data(), dir.path()).unwrap();
        assert_eq!(s.cells_failed, 2);
        let after: Vec<_> = s.records.iter().filter(|r| r.epoch == 2).collect();
        assert!(after.iter().all(|r| r.status.starts_with("diverged@")));
        assert!(s.records.iter().filter(|r| r.epoch == 0).all(|r| r.is_ok()));
    }

    #[test]
    fn changed_config_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(Factor::Width, vec![SweepValue::Int(3)]);
        run_sweep_with_data(&cfg, &tiny_data(), dir.path()).unwrap();
        let mut other = cfg.clone();
        other.width = 9;
        other.factor = Factor::SampleSize;
        other.values = vec![SweepValue::Int(50)];
        assert!(run_sweep_with_data(&other, &tiny_data(), dir.path()).is_err());
    }
}
