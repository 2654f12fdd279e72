use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use nhash::codes::{encode_batch, export_codes, LayerMask};
use nhash::data::DATA_DIR_ENV;
use nhash::geometry::{avg_stochastic_diameter, write_histogram, DiameterConfig};
use nhash::harness::{
    load_records, load_sweep_data, report, run_sweep, Factor, SweepConfig, SweepData, SweepValue,
    RECORDS_FILE,
};
use nhash::nn::{checkpoint, train_with, MlpModel};
use nhash::probes::{
    kmeans_accuracy, knn_accuracy, logreg_accuracy, redundancy, KMeansConfig, LogRegConfig,
};

#[derive(Parser)]
#[command(name = "nhash", version, about = "Neural codes of ReLU networks as hash codes")]
#[command(after_help = "Datasets are read from --data-dir, else $NHASH_DATA_DIR/<dataset>, else ./data/<dataset>.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an MLP and write NHL1 checkpoints.
    Train(TrainArgs),
    /// Write the neural codes of a dataset split as index,label,bitstring lines.
    Encode(EncodeArgs),
    /// Redundancy and categorization probes for one model.
    Metrics(MetricsArgs),
    /// Average stochastic activation diameter around test anchors.
    Diameter(DiameterArgs),
    /// Run a factor sweep described by a config file and flags.
    Sweep(SweepArgs),
    /// Aggregate records.csv into summary and regime tables.
    Report(ReportArgs),
}

/// Flags mirroring the keys of the sweep config file. A flag overrides the
/// value read from `--config`.
#[derive(Args, Default, Clone)]
struct Settings {
    /// Flat TOML config (see configs/).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    factor: Option<String>,
    #[arg(long, value_delimiter = ',')]
    values: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long, value_delimiter = ',')]
    checkpoint_epochs: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    probes: Vec<String>,
    /// mnist, cifar10, random_pixels or random_ball.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    train_size: Option<usize>,
    #[arg(long)]
    test_size: Option<usize>,
    #[arg(long)]
    data_seed: Option<u64>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    hidden_layers: Option<usize>,
    /// adam or sgd.
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr_decay_factor: Option<f64>,
    #[arg(long)]
    lr_decay_period: Option<usize>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    grad_clip_norm: Option<f64>,
    #[arg(long)]
    batch_norm: bool,
    #[arg(long)]
    noise_rate: Option<f64>,
    #[arg(long)]
    knn_k: Option<usize>,
    #[arg(long)]
    diameter_anchors: Option<usize>,
    #[arg(long)]
    diameter_cap: Option<f64>,
    #[arg(long)]
    shared_direction: bool,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    ratio_hi: Option<f64>,
    #[arg(long)]
    ratio_lo: Option<f64>,
    #[arg(long)]
    acc_lo: Option<f64>,
    #[arg(long)]
    acc_hi: Option<f64>,
}

macro_rules! override_fields {
    ($cfg:ident, $s:ident; $($field:ident),*) => {
        $(if let Some(v) = $s.$field.clone() { $cfg.$field = v; })*
    };
}

impl Settings {
    /// Config file (or defaults) with every given flag applied on top.
    fn resolve(&self) -> Result<SweepConfig> {
        let mut cfg = match &self.config {
            Some(path) => SweepConfig::load(path)?,
            None => SweepConfig::new(Factor::Width, vec![SweepValue::Int(50)]),
        };
        if let Some(f) = &self.factor {
            cfg.factor = f.parse()?;
        }
        if !self.values.is_empty() {
            cfg.values = self.values.iter().map(|v| SweepValue::parse(v)).collect();
        }
        if !self.seeds.is_empty() {
            cfg.seeds = self.seeds.clone();
        }
        if !self.checkpoint_epochs.is_empty() {
            cfg.checkpoint_epochs = self.checkpoint_epochs.clone();
        }
        if !self.probes.is_empty() {
            cfg.probes = self.probes.iter().map(|p| p.parse()).collect::<Result<_, _>>()?;
        }
        if let Some(d) = &self.dataset {
            cfg.dataset = d.parse()?;
        }
        if self.data_dir.is_some() {
            cfg.data_dir = self.data_dir.clone();
        }
        if self.train_size.is_some() {
            cfg.train_size = self.train_size;
        }
        if self.test_size.is_some() {
            cfg.test_size = self.test_size;
        }
        if self.lr_decay_factor.is_some() {
            cfg.lr_decay_factor = self.lr_decay_factor;
        }
        if self.lr_decay_period.is_some() {
            cfg.lr_decay_period = self.lr_decay_period;
        }
        if self.grad_clip_norm.is_some() {
            cfg.grad_clip_norm = self.grad_clip_norm;
        }
        let s = self;
        override_fields!(cfg, s; data_seed, width, hidden_layers, optimizer, lr, beta1, beta2, momentum,
            batch_size, weight_decay, noise_rate, knn_k, diameter_anchors, diameter_cap, workers,
            ratio_hi, ratio_lo, acc_lo, acc_hi);
        cfg.batch_norm |= self.batch_norm;
        cfg.shared_direction |= self.shared_direction;
        Ok(cfg)
    }

    fn data(&self) -> Result<(SweepConfig, SweepData)> {
        let cfg = self.resolve()?;
        let data = load_sweep_data(&cfg).with_context(|| {
            format!(
                "loading {:?} (set --data-dir or ${DATA_DIR_ENV}; scripts/fetch_mnist.sh downloads MNIST)",
                cfg.dataset
            )
        })?;
        Ok((cfg, data))
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    settings: Settings,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Final model path; checkpoints go next to it as <stem>.epoch<E>.nhl.
    #[arg(long, short)]
    out: PathBuf,
    /// Per-epoch loss and accuracy as CSV.
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Train,
    Test,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long, short)]
    model: PathBuf,
    #[command(flatten)]
    settings: Settings,
    #[arg(long, value_enum, default_value = "test")]
    split: Split,
    /// Keep only these hidden layers, e.g. "1-2" or "1,3".
    #[arg(long)]
    layers: Option<String>,
    /// Output file; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long, short)]
    model: PathBuf,
    #[command(flatten)]
    settings: Settings,
    #[arg(long)]
    layers: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct DiameterArgs {
    #[arg(long, short)]
    model: PathBuf,
    #[command(flatten)]
    settings: Settings,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-sample CSV (diameter,bounded_lo,bounded_hi).
    #[arg(long)]
    histogram: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    settings: Settings,
    /// Output directory; rerunning with the same directory resumes.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// A records.csv file or a sweep output directory.
    #[arg(long)]
    records: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
    #[command(flatten)]
    settings: Settings,
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_model(path: &Path) -> Result<MlpModel> {
    checkpoint::load(path).with_context(|| format!("reading checkpoint {}", path.display()))
}

fn checkpoint_path(out: &Path, epoch: usize) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    out.with_file_name(format!("{stem}.epoch{epoch}.nhl"))
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let (cfg, data) = args.settings.data()?;
    let mut tc = cfg.base_train_config(args.seed).or_else(|_| {
        // A config with no checkpoint list still yields a valid training setup.
        let mut c = cfg.clone();
        c.checkpoint_epochs = vec![args.epochs];
        c.factor = Factor::Width;
        c.values = vec![SweepValue::Int(cfg.width as i64)];
        c.base_train_config(args.seed)
    })?;
    tc.epochs = args.epochs;
    let mut train = data.train;
    if cfg.noise_rate > 0.0 {
        train = nhash::data::inject_label_noise(&train, cfg.noise_rate, args.seed)?;
    }
    let mut dims = vec![train.input_dim()];
    dims.extend(std::iter::repeat_n(cfg.width, cfg.hidden_layers));
    dims.push(train.num_classes);
    let model = MlpModel::init(&dims, args.seed)?;
    log::info!("training {dims:?} on {} examples for {} epochs", train.len(), tc.epochs);
    let epochs: Vec<usize> = cfg.checkpoint_epochs.iter().copied().filter(|&e| e < tc.epochs).collect();
    let (model, history) = train_with(model, train.x.view(), &train.y, &tc, &epochs, |epoch, m| {
        checkpoint::save(m, checkpoint_path(&args.out, epoch))
    })?;
    checkpoint::save(&model, &args.out)?;
    if let Some(path) = &args.history {
        let mut w = output(&Some(path.clone()))?;
        writeln!(w, "epoch,train_loss,train_acc")?;
        for h in &history {
            writeln!(w, "{},{},{}", h.epoch, h.train_loss, h.train_acc)?;
        }
    }
    if let Some(last) = history.last() {
        println!("epoch {} train_loss {:.6} train_acc {:.4}", last.epoch, last.train_loss, last.train_acc);
    }
    println!("test_acc {:.4}", model.accuracy(data.test.x.view(), &data.test.y)?);
    Ok(())
}

fn restrict_all(codes: Vec<nhash::NeuralCode>, layers: &Option<String>) -> Result<Vec<nhash::NeuralCode>> {
    match layers {
        Some(spec) => {
            let mask = LayerMask::parse(spec)?;
            Ok(codes.iter().map(|c| c.restrict(&mask)).collect::<Result<_, _>>()?)
        }
        None => Ok(codes),
    }
}

fn cmd_encode(args: EncodeArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let (_, data) = args.settings.data()?;
    let ds = match args.split {
        Split::Train => data.train,
        Split::Test => data.test,
    };
    let codes = restrict_all(encode_batch(&model, ds.x.view())?, &args.layers)?;
    let mut out = output(&args.out)?;
    export_codes(&codes, &ds.y, &mut out)?;
    out.flush()?;
    Ok(())
}

fn cmd_metrics(args: MetricsArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let (cfg, data) = args.settings.data()?;
    let tr = restrict_all(encode_batch(&model, data.train.x.view())?, &args.layers)?;
    let te = restrict_all(encode_batch(&model, data.test.x.view())?, &args.layers)?;
    let (ytr, yte) = (&data.train.y, &data.test.y);
    let mut rows: Vec<(&str, f64)> = Vec::new();
    let r = redundancy(&tr)?;
    rows.push(("n_train", r.n as f64));
    rows.push(("distinct_train", r.m as f64));
    rows.push(("redundancy_train", r.ratio));
    rows.push(("redundancy_test", redundancy(&te)?.ratio));
    rows.push(("raw_test_acc", model.accuracy(data.test.x.view(), yte)?));
    let km = kmeans_accuracy(&tr, ytr, &te, yte, &KMeansConfig::new(data.train.num_classes, args.seed))?;
    rows.push(("kmeans_train", km.train_accuracy));
    rows.push(("kmeans_test", km.test_accuracy));
    let knn = knn_accuracy(&tr, ytr, &te, yte, cfg.knn_k)?;
    rows.push(("knn_train", knn.train_accuracy));
    rows.push(("knn_test", knn.test_accuracy));
    let lr_cfg = LogRegConfig {
        seed: args.seed,
        ..Default::default()
    };
    let lr = logreg_accuracy(&tr, ytr, &te, yte, &lr_cfg)?;
    rows.push(("logreg_train", lr.train_accuracy));
    rows.push(("logreg_test", lr.test_accuracy));
    println!("metric,value");
    for (name, v) in rows {
        println!("{name},{v}");
    }
    Ok(())
}

fn cmd_diameter(args: DiameterArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let (cfg, data) = args.settings.data()?;
    let anchors = data.test.head(cfg.diameter_anchors);
    let dcfg = DiameterConfig {
        cap: cfg.diameter_cap,
        shared_direction: cfg.shared_direction,
        seed: args.seed,
    };
    let s = avg_stochastic_diameter(&model, anchors.x.view(), &dcfg)?;
    if let Some(path) = &args.histogram {
        let mut w = output(&Some(path.clone()))?;
        write_histogram(&s.samples, &mut w)?;
        w.flush()?;
    }
    println!("metric,value");
    println!("anchors,{}", anchors.len());
    println!("mean_diameter,{}", s.mean.map(|m| m.to_string()).unwrap_or_default());
    println!("bounded_count,{}", s.bounded_count);
    println!("unbounded_count,{}", s.unbounded_count);
    println!("skipped,{}", s.skipped.len());
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let cfg = args.settings.resolve()?;
    cfg.validate()?;
    let summary = run_sweep(&cfg, &args.out)?;
    println!(
        "{} records in {} ({} runs trained, {} resumed, {} failed)",
        summary.records.len(),
        args.out.join(RECORDS_FILE).display(),
        summary.cells_run,
        summary.cells_skipped,
        summary.cells_failed
    );
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let path = if args.records.is_dir() {
        args.records.join(RECORDS_FILE)
    } else {
        args.records.clone()
    };
    let records = load_records(&path)?;
    if records.is_empty() {
        bail!("{} holds no records", path.display());
    }
    let mut s = args.settings.clone();
    // Only the threshold flags matter here; a config file supplies them too.
    if s.config.is_none() && args.records.is_dir() {
        let cfg_path = args.records.join(nhash::harness::CONFIG_FILE);
        if cfg_path.exists() {
            s.config = Some(cfg_path);
        }
    }
    let thresholds = s.resolve()?.thresholds();
    let rep = report(&records, &thresholds, &args.out)?;
    println!("{} groups summarized into {}", rep.summary.len(), args.out.display());
    for (regime, count) in &rep.regime_counts {
        println!("{regime},{count}");
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Train(a) => cmd_train(a),
        Command::Encode(a) => cmd_encode(a),
        Command::Metrics(a) => cmd_metrics(a),
        Command::Diameter(a) => cmd_diameter(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Report(a) => cmd_report(a),
    }
}
