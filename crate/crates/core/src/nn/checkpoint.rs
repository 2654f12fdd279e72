//! Binary model checkpoints.
//!
//! Layout (all integers and reals little-endian):
//!
//! ```text
//! "NHL1"                       magic
//! u32                          number of layer sizes
//! u32 * count                  layer sizes (input, hidden..., output)
//! u8                           1 if batch norm follows, else 0
//! f64 * ...                    weights of every layer, row-major (out x in)
//! f64 * ...                    biases of every layer
//! f64 * ...                    per hidden layer: gamma, beta, running_mean,
//!                              running_var, epsilon   (only when flagged)
//! ```

use std::io::{Read, Write};

use ndarray::{Array1, Array2};

use super::model::{BatchNorm, MlpModel};
use super::NnError;

pub const MAGIC: &[u8; 4] = b"NHL1";

pub fn write_checkpoint<W: Write>(model: &MlpModel, mut out: W) -> Result<(), NnError> {
    out.write_all(MAGIC)?;
    let dims = model.layer_dims();
    out.write_all(&(dims.len() as u32).to_le_bytes())?;
    for &d in dims {
        out.write_all(&(d as u32).to_le_bytes())?;
    }
    out.write_all(&[u8::from(model.batch_norm().is_some())])?;
    let mut put = |values: &mut dyn Iterator<Item = f64>| -> std::io::Result<()> {
        for v in values {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    };
    for w in model.weights() {
        put(&mut w.iter().copied())?;
    }
    for b in model.biases() {
        put(&mut b.iter().copied())?;
    }
    if let Some(bn) = model.batch_norm() {
        for layer in bn {
            put(&mut layer.gamma.iter().copied())?;
            put(&mut layer.beta.iter().copied())?;
            put(&mut layer.running_mean.iter().copied())?;
            put(&mut layer.running_var.iter().copied())?;
            put(&mut std::iter::once(layer.epsilon))?;
        }
    }
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N], NnError> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => NnError::Checkpoint("truncated file".into()),
            _ => NnError::Io(e),
        })?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn f64(&mut self) -> Result<f64, NnError> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }

    fn vec(&mut self, len: usize) -> Result<Vec<f64>, NnError> {
        (0..len).map(|_| self.f64()).collect()
    }
}

pub fn read_checkpoint<R: Read>(input: R) -> Result<MlpModel, NnError> {
    let mut r = Reader { inner: input };
    let magic: [u8; 4] = r.bytes()?;
    if &magic != MAGIC {
        return Err(NnError::Checkpoint(format!("bad magic {magic:?}")));
    }
    let count = r.u32()? as usize;
    if !(2..=1024).contains(&count) {
        return Err(NnError::Checkpoint(format!("implausible layer count {count}")));
    }
    let dims: Vec<usize> = (0..count)
        .map(|_| r.u32().map(|d| d as usize))
        .collect::<Result<_, _>>()?;
    let [flag] = r.bytes::<1>()?;
    if flag > 1 {
        return Err(NnError::Checkpoint(format!("bad batch-norm flag {flag}")));
    }
    let mut weights = Vec::with_capacity(count - 1);
    for pair in dims.windows(2) {
        let data = r.vec(pair[0] * pair[1])?;
        weights.push(
            Array2::from_shape_vec((pair[1], pair[0]), data)
                .map_err(|e| NnError::Checkpoint(e.to_string()))?,
        );
    }
    let mut biases = Vec::with_capacity(count - 1);
    for &d in &dims[1..] {
        biases.push(Array1::from(r.vec(d)?));
    }
    let bn = if flag == 1 {
        let mut layers = Vec::new();
        for &w in &dims[1..count - 1] {
            layers.push(BatchNorm {
                gamma: Array1::from(r.vec(w)?),
                beta: Array1::from(r.vec(w)?),
                running_mean: Array1::from(r.vec(w)?),
                running_var: Array1::from(r.vec(w)?),
                epsilon: r.f64()?,
            });
        }
        Some(layers)
    } else {
        None
    };
    let mut trailing = [0u8; 1];
    if r.inner.read(&mut trailing)? != 0 {
        return Err(NnError::Checkpoint("trailing bytes after parameters".into()));
    }
    MlpModel::from_parts(weights, biases, bn)
}

pub fn save(model: &MlpModel, path: impl AsRef<std::path::Path>) -> Result<(), NnError> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_checkpoint(model, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: impl AsRef<std::path::Path>) -> Result<MlpModel, NnError> {
    let file = std::fs::File::open(path)?;
    read_checkpoint(std::io::BufReader::new(file))
}
