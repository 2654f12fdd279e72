//! Dataset loading (MNIST IDX, CIFAR-10 binary), subsampling, synthetic
//! controls and label-noise injection.

use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Environment variable naming the directory that holds dataset files.
pub const DATA_DIR_ENV: &str = "NHASH_DATA_DIR";

pub const MNIST_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const MNIST_LABELS_MAGIC: u32 = 0x0000_0801;
pub const CIFAR_RECORD_LEN: usize = 3073;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: bad magic 0x{found:08x}, expected 0x{expected:08x}")]
    BadMagic {
        path: PathBuf,
        found: u32,
        expected: u32,
    },
    #[error("{path}: truncated ({detail})")]
    Truncated { path: PathBuf, detail: String },
    #[error("image file holds {images} items but label file holds {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("{path}: length {len} is not a multiple of {record}")]
    Length {
        path: PathBuf,
        len: usize,
        record: usize,
    },
    #[error("label {label} at record {index} is outside 0..{classes}")]
    InvalidLabel {
        index: usize,
        label: usize,
        classes: usize,
    },
    #[error("{0}")]
    Range(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    MnistTrain,
    MnistTest,
    Cifar10Train,
    Cifar10Test,
    RandomBall,
    RandomPixel,
    Derived,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Provenance::MnistTrain => "mnist_train",
            Provenance::MnistTest => "mnist_test",
            Provenance::Cifar10Train => "cifar10_train",
            Provenance::Cifar10Test => "cifar10_test",
            Provenance::RandomBall => "random_ball",
            Provenance::RandomPixel => "random_pixel",
            Provenance::Derived => "derived",
        };
        f.write_str(s)
    }
}

/// Labelled examples: one row of `x` per example.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Vec<usize>,
    pub num_classes: usize,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(
        x: Array2<f64>,
        y: Vec<usize>,
        num_classes: usize,
        provenance: Provenance,
    ) -> Result<Self, DataError> {
        if x.nrows() != y.len() {
            return Err(DataError::Range(format!(
                "{} rows but {} labels",
                x.nrows(),
                y.len()
            )));
        }
        if let Some((index, &label)) = y.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(DataError::InvalidLabel {
                index,
                label,
                classes: num_classes,
            });
        }
        Ok(Self {
            x,
            y,
            num_classes,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.y {
            counts[y] += 1;
        }
        counts
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(Axis(0), indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            num_classes: self.num_classes,
            provenance: Provenance::Derived,
        }
    }

    /// First `n` rows (all of them if `n` exceeds the length).
    pub fn head(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        let mut out = self.select(&idx);
        out.provenance = self.provenance;
        out
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, DataError> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    Ok(buf)
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32, DataError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| DataError::Truncated {
            path: path.to_path_buf(),
            detail: format!("header ends before byte {}", at + 4),
        })
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<(), DataError> {
    let found = be_u32(bytes, 0, path)?;
    if found != expected {
        return Err(DataError::BadMagic {
            path: path.to_path_buf(),
            found,
            expected,
        });
    }
    Ok(())
}

/// Parses an MNIST image/label IDX pair; pixels are scaled to `[0, 1]`.
pub fn load_mnist_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<Dataset, DataError> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let images = read_file(ip)?;
    let labels = read_file(lp)?;
    parse_mnist(&images, &labels, ip, lp)
}

fn parse_mnist(images: &[u8], labels: &[u8], ip: &Path, lp: &Path) -> Result<Dataset, DataError> {
    check_magic(images, MNIST_IMAGES_MAGIC, ip)?;
    check_magic(labels, MNIST_LABELS_MAGIC, lp)?;
    let count = be_u32(images, 4, ip)? as usize;
    let rows = be_u32(images, 8, ip)? as usize;
    let cols = be_u32(images, 12, ip)? as usize;
    let label_count = be_u32(labels, 4, lp)? as usize;
    if count != label_count {
        return Err(DataError::CountMismatch {
            images: count,
            labels: label_count,
        });
    }
    let dim = rows * cols;
    let pixels = images.get(16..16 + count * dim).ok_or_else(|| DataError::Truncated {
        path: ip.to_path_buf(),
        detail: format!("expected {} pixel bytes, found {}", count * dim, images.len() - 16),
    })?;
    let label_bytes = labels.get(8..8 + count).ok_or_else(|| DataError::Truncated {
        path: lp.to_path_buf(),
        detail: format!("expected {} label bytes, found {}", count, labels.len() - 8),
    })?;
    let x = Array2::from_shape_vec((count, dim), pixels.iter().map(|&p| p as f64 / 255.0).collect())
        .expect("shape matches buffer");
    let y: Vec<usize> = label_bytes.iter().map(|&b| b as usize).collect();
    Dataset::new(x, y, 10, Provenance::MnistTrain)
}

/// Standard file names inside an MNIST directory.
pub fn mnist_files(dir: &Path, train: bool) -> (PathBuf, PathBuf) {
    let prefix = if train { "train" } else { "t10k" };
    (
        dir.join(format!("{prefix}-images-idx3-ubyte")),
        dir.join(format!("{prefix}-labels-idx1-ubyte")),
    )
}

/// Loads the train or test split from a directory of uncompressed IDX files.
pub fn load_mnist_split(dir: impl AsRef<Path>, train: bool) -> Result<Dataset, DataError> {
    let (images, labels) = mnist_files(dir.as_ref(), train);
    let mut ds = load_mnist_idx(images, labels)?;
    ds.provenance = if train {
        Provenance::MnistTrain
    } else {
        Provenance::MnistTest
    };
    Ok(ds)
}

/// Concatenates CIFAR-10 binary batches. Each record is one label byte then
/// 3072 channel-planar pixel bytes, flattened as stored.
pub fn load_cifar10_bin<P: AsRef<Path>>(paths: &[P]) -> Result<Dataset, DataError> {
    let mut pixels = Vec::new();
    let mut y = Vec::new();
    for p in paths {
        let path = p.as_ref();
        let bytes = read_file(path)?;
        parse_cifar_into(&bytes, path, &mut pixels, &mut y)?;
    }
    let n = y.len();
    let x = Array2::from_shape_vec((n, CIFAR_RECORD_LEN - 1), pixels).expect("shape matches buffer");
    Dataset::new(x, y, 10, Provenance::Cifar10Train)
}

fn parse_cifar_into(
    bytes: &[u8],
    path: &Path,
    pixels: &mut Vec<f64>,
    labels: &mut Vec<usize>,
) -> Result<(), DataError> {
    if !bytes.len().is_multiple_of(CIFAR_RECORD_LEN) {
        return Err(DataError::Length {
            path: path.to_path_buf(),
            len: bytes.len(),
            record: CIFAR_RECORD_LEN,
        });
    }
    for record in bytes.chunks_exact(CIFAR_RECORD_LEN) {
        let label = record[0] as usize;
        if label >= 10 {
            return Err(DataError::InvalidLabel {
                index: labels.len(),
                label,
                classes: 10,
            });
        }
        labels.push(label);
        pixels.extend(record[1..].iter().map(|&p| p as f64 / 255.0));
    }
    Ok(())
}

/// Loads the five training batches or the test batch from a
/// `cifar-10-batches-bin` directory.
pub fn load_cifar10_split(dir: impl AsRef<Path>, train: bool) -> Result<Dataset, DataError> {
    let dir = dir.as_ref();
    let files: Vec<PathBuf> = if train {
        (1..=5).map(|i| dir.join(format!("data_batch_{i}.bin"))).collect()
    } else {
        vec![dir.join("test_batch.bin")]
    };
    let mut ds = load_cifar10_bin(&files)?;
    ds.provenance = if train {
        Provenance::Cifar10Train
    } else {
        Provenance::Cifar10Test
    };
    Ok(ds)
}

/// Uniform sample of `size` rows without replacement, kept in original order.
pub fn subsample(dataset: &Dataset, size: usize, seed: u64) -> Result<Dataset, DataError> {
    if size == 0 || size > dataset.len() {
        return Err(DataError::Range(format!(
            "subsample size {size} outside 1..={}",
            dataset.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, dataset.len(), size).into_vec();
    idx.sort_unstable();
    let out = dataset.select(&idx);
    log::info!("subsample of {size}: class counts {:?}", out.class_counts());
    Ok(out)
}

/// Points drawn uniformly from the unit ball in `R^dim`, with uniform labels.
pub fn random_ball(n: usize, dim: usize, num_classes: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array2::zeros((n, dim));
    for mut row in x.rows_mut() {
        let g: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let r: f64 = rng.random::<f64>().powf(1.0 / dim as f64);
        for (dst, v) in row.iter_mut().zip(&g) {
            *dst = r * v / norm;
        }
    }
    let y = (0..n).map(|_| rng.random_range(0..num_classes)).collect();
    Dataset {
        x,
        y,
        num_classes,
        provenance: Provenance::RandomBall,
    }
}

/// I.i.d. `U(0, 1)` pixels with uniform labels.
pub fn random_pixels(n: usize, dim: usize, num_classes: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_simple_fn((n, dim), || rng.random::<f64>());
    let y = (0..n).map(|_| rng.random_range(0..num_classes)).collect();
    Dataset {
        x,
        y,
        num_classes,
        provenance: Provenance::RandomPixel,
    }
}

/// Replaces the labels of a uniformly chosen `floor(rate * n)` subset with
/// uniform draws over all classes (a draw may equal the original label).
pub fn inject_label_noise(dataset: &Dataset, rate: f64, seed: u64) -> Result<Dataset, DataError> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(DataError::Range(format!("noise rate {rate} outside [0, 1]")));
    }
    let n = dataset.len();
    let count = (rate * n as f64).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen = sample(&mut rng, n, count);
    let mut out = dataset.clone();
    let mut flipped = 0;
    for i in chosen.iter() {
        let label = rng.random_range(0..dataset.num_classes);
        if label != out.y[i] {
            flipped += 1;
        }
        out.y[i] = label;
    }
    log::info!(
        "label noise rate {rate}: {count} reassigned, {flipped} changed (expected flip rate {:.4})",
        rate * (dataset.num_classes as f64 - 1.0) / dataset.num_classes as f64
    );
    Ok(out)
}

/// Indices chosen by [`inject_label_noise`] for the same arguments.
pub fn label_noise_indices(n: usize, rate: f64, seed: u64) -> Vec<usize> {
    let count = (rate * n as f64).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample(&mut rng, n, count).into_vec()
}
