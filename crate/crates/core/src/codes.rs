//! Neural codes: the on/off pattern of every hidden ReLU for one input,
//! packed into 64-bit words.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use ndarray::{ArrayView1, ArrayView2};

use crate::nn::{MlpModel, NnError};

#[derive(Debug, thiserror::Error)]
pub enum CodeError {
    #[error(transparent)]
    Model(#[from] NnError),
    #[error("code layouts differ: {0:?} vs {1:?}")]
    LayoutMismatch(Vec<usize>, Vec<usize>),
    #[error("invalid layer mask: {0}")]
    Mask(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Packed activation pattern. Bit `i` (LSB-first within each word) is the
/// `i`-th hidden unit in layer-major order; 1 means the unit is active.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct NeuralCode {
    words: Box<[u64]>,
    layout: Arc<[usize]>,
}

impl fmt::Debug for NeuralCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NeuralCode({:?}, {})", self.layout, self.to_bit_string())
    }
}

fn words_for(len: usize) -> usize {
    len.div_ceil(64)
}

impl NeuralCode {
    pub fn from_bits(bits: &[bool], layout: &[usize]) -> Result<Self, CodeError> {
        Self::from_bits_shared(bits, layout.into())
    }

    fn from_bits_shared(bits: &[bool], layout: Arc<[usize]>) -> Result<Self, CodeError> {
        let len: usize = layout.iter().sum();
        if bits.len() != len {
            return Err(CodeError::Mask(format!(
                "{} bits for a layout of {len} units",
                bits.len()
            )));
        }
        let mut words = vec![0u64; words_for(len)];
        for (i, _) in bits.iter().enumerate().filter(|(_, &b)| b) {
            words[i / 64] |= 1 << (i % 64);
        }
        Ok(Self {
            words: words.into_boxed_slice(),
            layout,
        })
    }

    /// Parses an ASCII `'0'`/`'1'` string.
    pub fn from_bit_string(s: &str, layout: &[usize]) -> Result<Self, CodeError> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(CodeError::Mask(format!("unexpected character {other:?}"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_bits(&bits, layout)
    }

    pub fn len(&self) -> usize {
        self.layout.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn layout(&self) -> &[usize] {
        &self.layout
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn bit(&self, i: usize) -> bool {
        assert!(i < self.len(), "bit {i} out of range");
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn bits(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len()).map(|i| self.bit(i))
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn to_bit_string(&self) -> String {
        self.bits().map(|b| if b { '1' } else { '0' }).collect()
    }

    /// Bits of the selected layers, concatenated in ascending layer order.
    pub fn restrict(&self, mask: &LayerMask) -> Result<NeuralCode, CodeError> {
        mask.check(&self.layout)?;
        let mut offsets = Vec::with_capacity(self.layout.len());
        let mut acc = 0;
        for &w in self.layout.iter() {
            offsets.push(acc);
            acc += w;
        }
        let mut bits = Vec::new();
        let mut layout = Vec::new();
        for &layer in &mask.layers {
            let (start, width) = (offsets[layer - 1], self.layout[layer - 1]);
            bits.extend((start..start + width).map(|i| self.bit(i)));
            layout.push(width);
        }
        NeuralCode::from_bits(&bits, &layout)
    }
}

/// Nonempty set of one-based hidden-layer indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LayerMask {
    layers: BTreeSet<usize>,
}

impl LayerMask {
    pub fn new(layers: impl IntoIterator<Item = usize>) -> Result<Self, CodeError> {
        let layers: BTreeSet<usize> = layers.into_iter().collect();
        if layers.is_empty() {
            return Err(CodeError::Mask("empty layer mask".into()));
        }
        if layers.contains(&0) {
            return Err(CodeError::Mask("layer indices start at 1".into()));
        }
        Ok(Self { layers })
    }

    pub fn all(num_layers: usize) -> Result<Self, CodeError> {
        Self::new(1..=num_layers)
    }

    /// Parses `"2"`, `"1,3"` or `"1-3"` style lists.
    pub fn parse(spec: &str) -> Result<Self, CodeError> {
        let mut layers = Vec::new();
        for part in spec.split([',', '+']).map(str::trim).filter(|p| !p.is_empty()) {
            let parse = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| CodeError::Mask(format!("bad layer index {s:?}")))
            };
            if let Some((a, b)) = part.split_once('-') {
                let (a, b) = (parse(a)?, parse(b)?);
                if a > b {
                    return Err(CodeError::Mask(format!("descending range {part:?}")));
                }
                layers.extend(a..=b);
            } else {
                layers.push(parse(part)?);
            }
        }
        Self::new(layers)
    }

    pub fn layers(&self) -> impl Iterator<Item = usize> + '_ {
        self.layers.iter().copied()
    }

    fn check(&self, layout: &[usize]) -> Result<(), CodeError> {
        let max = *self.layers.iter().next_back().unwrap();
        if max > layout.len() {
            return Err(CodeError::Mask(format!(
                "layer {max} out of range for {} hidden layers",
                layout.len()
            )));
        }
        Ok(())
    }
}

impl fmt::Display for LayerMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.layers.iter().map(|l| l.to_string()).collect();
        f.write_str(&parts.join("+"))
    }
}

/// Code of a single input: bit is 1 iff the unit's preactivation is strictly positive.
pub fn encode(model: &MlpModel, x: ArrayView1<f64>) -> Result<NeuralCode, CodeError> {
    let trace = model.forward(x)?;
    let bits: Vec<bool> = trace
        .preactivations
        .iter()
        .flat_map(|z| z.iter().map(|&v| v > 0.0))
        .collect();
    NeuralCode::from_bits(&bits, model.hidden_widths())
}

/// Codes for every row of `x`, in row order.
pub fn encode_batch(model: &MlpModel, x: ArrayView2<f64>) -> Result<Vec<NeuralCode>, CodeError> {
    let layout: Arc<[usize]> = model.hidden_widths().into();
    let mut out = Vec::with_capacity(x.nrows());
    // Bounded chunks keep the preactivation buffers small for 60k-row inputs.
    for start in (0..x.nrows()).step_by(1024) {
        let end = (start + 1024).min(x.nrows());
        let trace = model.forward_batch(x.slice(ndarray::s![start..end, ..]))?;
        let mut bits = Vec::with_capacity(model.code_len());
        for i in 0..end - start {
            bits.clear();
            for z in &trace.preactivations {
                bits.extend(z.row(i).iter().map(|&v| v > 0.0));
            }
            out.push(NeuralCode::from_bits_shared(&bits, layout.clone())?);
        }
    }
    Ok(out)
}

/// Number of differing bits.
pub fn hamming(a: &NeuralCode, b: &NeuralCode) -> Result<u32, CodeError> {
    if a.layout != b.layout {
        return Err(CodeError::LayoutMismatch(a.layout.to_vec(), b.layout.to_vec()));
    }
    Ok(hamming_words(&a.words, &b.words))
}

#[inline]
pub(crate) fn hamming_words(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

/// Distinct codes and the (sorted) example indices that share each one.
#[derive(Debug, Clone, Default)]
pub struct CodeTable {
    buckets: HashMap<NeuralCode, Vec<usize>>,
    total: usize,
}

impl CodeTable {
    pub fn num_examples(&self) -> usize {
        self.total
    }

    pub fn num_distinct(&self) -> usize {
        self.buckets.len()
    }

    pub fn get(&self, code: &NeuralCode) -> Option<&[usize]> {
        self.buckets.get(code).map(Vec::as_slice)
    }

    pub fn largest_bucket(&self) -> usize {
        self.buckets.values().map(Vec::len).max().unwrap_or(0)
    }

    /// Buckets ordered by their smallest example index.
    pub fn buckets(&self) -> Vec<(&NeuralCode, &[usize])> {
        let mut out: Vec<_> = self.buckets.iter().map(|(c, v)| (c, v.as_slice())).collect();
        out.sort_by_key(|(_, v)| v[0]);
        out
    }

    /// Merges another table whose indices are offset by `offset`.
    pub fn merge(&mut self, other: CodeTable, offset: usize) {
        for (code, idx) in other.buckets {
            let bucket = self.buckets.entry(code).or_default();
            bucket.extend(idx.into_iter().map(|i| i + offset));
            bucket.sort_unstable();
        }
        self.total += other.total;
    }
}

pub fn build_code_table(codes: &[NeuralCode]) -> CodeTable {
    let mut buckets: HashMap<NeuralCode, Vec<usize>> = HashMap::with_capacity(codes.len());
    for (i, c) in codes.iter().enumerate() {
        buckets.entry(c.clone()).or_default().push(i);
    }
    CodeTable {
        buckets,
        total: codes.len(),
    }
}

/// Writes `index,label,bitstring` lines, one per example.
pub fn export_codes<W: Write>(
    codes: &[NeuralCode],
    labels: &[usize],
    mut out: W,
) -> Result<(), CodeError> {
    for (i, (code, label)) in codes.iter().zip(labels).enumerate() {
        writeln!(out, "{i},{label},{}", code.to_bit_string())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array1, Array2};
    use proptest::prelude::*;

    fn code(bits: &str, layout: &[usize]) -> NeuralCode {
        NeuralCode::from_bit_string(bits, layout).unwrap()
    }

    #[test]
    fn forced_signs() {
        let mut m = MlpModel::init(&[3, 4, 2, 2], 0).unwrap();
        for w in m.weights_mut() {
            w.fill(0.0);
        }
        for b in m.biases_mut() {
            b.fill(1.0);
        }
        let c = encode(&m, Array1::from(vec![0.3, -2.0, 5.0]).view()).unwrap();
        assert_eq!(c.to_bit_string(), "111111");
        for b in m.biases_mut() {
            b.fill(0.0);
        }
        let c = encode(&m, Array1::zeros(3).view()).unwrap();
        assert_eq!(c.to_bit_string(), "000000");
    }

    #[test]
    fn encode_is_deterministic() {
        use std::collections::hash_map::DefaultHasher;
        use std::hash::{Hash, Hasher};
        let m = MlpModel::init(&[5, 30, 20, 3], 4).unwrap();
        let x = Array1::from_shape_fn(5, |i| i as f64 * 0.1 - 0.2);
        let (a, b) = (encode(&m, x.view()).unwrap(), encode(&m, x.view()).unwrap());
        assert_eq!(a, b);
        let h = |c: &NeuralCode| {
            let mut s = DefaultHasher::new();
            c.hash(&mut s);
            s.finish()
        };
        assert_eq!(h(&a), h(&b));
        assert_eq!(a.len(), 50);
    }

    #[test]
    fn batch_is_elementwise() {
        let m = MlpModel::init(&[4, 70, 3], 1).unwrap();
        let x = Array2::from_shape_fn((5, 4), |(i, j)| ((i * 4 + j) as f64).sin());
        let batch = encode_batch(&m, x.view()).unwrap();
        for (i, c) in batch.iter().enumerate() {
            assert_eq!(*c, encode(&m, x.row(i)).unwrap());
        }
        let one = encode_batch(&m, x.slice(ndarray::s![2..3, ..])).unwrap();
        assert_eq!(one, vec![batch[2].clone()]);
        let perm = [3usize, 0, 4, 1, 2];
        let px = x.select(ndarray::Axis(0), &perm);
        let pc = encode_batch(&m, px.view()).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            assert_eq!(pc[k], batch[i]);
        }
        let same = Array2::from_shape_fn((4, 4), |(_, j)| j as f64);
        let codes = encode_batch(&m, same.view()).unwrap();
        assert!(codes.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn restrict_projects_layers() {
        let c = code("10110011", &[3, 5]);
        assert_eq!(c.restrict(&LayerMask::all(2).unwrap()).unwrap(), c);
        let l2 = c.restrict(&LayerMask::new([2]).unwrap()).unwrap();
        assert_eq!(l2.to_bit_string(), "10011");
        assert_eq!(l2.layout(), &[5]);
        let mask = LayerMask::new([1]).unwrap();
        let once = c.restrict(&mask).unwrap();
        assert_eq!(once.restrict(&mask).unwrap(), once);
        assert!(c.restrict(&LayerMask::new([3]).unwrap()).is_err());
        assert!(LayerMask::new([]).is_err());
        assert!(LayerMask::new([0]).is_err());
    }

    #[test]
    fn mask_parsing() {
        assert_eq!(LayerMask::parse("1-3").unwrap(), LayerMask::new([1, 2, 3]).unwrap());
        assert_eq!(LayerMask::parse("2, 4").unwrap(), LayerMask::new([2, 4]).unwrap());
        assert_eq!(LayerMask::parse("1+2").unwrap().to_string(), "1+2");
        assert!(LayerMask::parse("").is_err());
        assert!(LayerMask::parse("3-1").is_err());
        assert!(LayerMask::parse("x").is_err());
    }

    #[test]
    fn hamming_basics() {
        let ones = NeuralCode::from_bits(&[true; 300], &[100, 200]).unwrap();
        let zeros = NeuralCode::from_bits(&[false; 300], &[100, 200]).unwrap();
        assert_eq!(hamming(&ones, &zeros).unwrap(), 300);
        assert_eq!(hamming(&ones, &ones).unwrap(), 0);
        let other = NeuralCode::from_bits(&[true; 300], &[300]).unwrap();
        assert!(matches!(hamming(&ones, &other), Err(CodeError::LayoutMismatch(..))));
    }

    #[test]
    fn table_counts() {
        let a = code("101", &[3]);
        let b = code("001", &[3]);
        let c = code("111", &[3]);
        let t = build_code_table(&[a.clone(), b.clone(), c.clone()]);
        assert_eq!(t.num_distinct(), 3);
        assert_eq!(t.largest_bucket(), 1);
        let t = build_code_table(&vec![a.clone(); 6]);
        assert_eq!(t.num_distinct(), 1);
        assert_eq!(t.get(&a).unwrap(), &[0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn table_merge() {
        let a = code("10", &[2]);
        let b = code("01", &[2]);
        let mut left = build_code_table(&[a.clone(), b.clone()]);
        let right = build_code_table(&[b.clone(), a.clone(), a.clone()]);
        left.merge(right, 2);
        let whole = build_code_table(&[a.clone(), b.clone(), b.clone(), a.clone(), a.clone()]);
        assert_eq!(left.get(&a), whole.get(&a));
        assert_eq!(left.get(&b), whole.get(&b));
        assert_eq!(left.num_examples(), 5);
    }

    #[test]
    fn export_format() {
        let codes = vec![code("0110", &[2, 2]), code("1000", &[2, 2])];
        let mut buf = Vec::new();
        export_codes(&codes, &[3, 7], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "0,3,0110\n1,7,1000\n");
    }

    fn arb_bits(len: usize) -> impl Strategy<Value = Vec<bool>> {
        proptest::collection::vec(any::<bool>(), len)
    }

    proptest! {
        #[test]
        fn hamming_matches_naive(a in arb_bits(150), b in arb_bits(150)) {
            let ca = NeuralCode::from_bits(&a, &[50, 100]).unwrap();
            let cb = NeuralCode::from_bits(&b, &[50, 100]).unwrap();
            let naive = a.iter().zip(&b).filter(|(x, y)| x != y).count() as u32;
            prop_assert_eq!(hamming(&ca, &cb).unwrap(), naive);
        }

        #[test]
        fn hamming_is_a_metric(a in arb_bits(130), b in arb_bits(130), c in arb_bits(130)) {
            let [a, b, c] = [a, b, c].map(|v| NeuralCode::from_bits(&v, &[130]).unwrap());
            let d = |x: &NeuralCode, y: &NeuralCode| hamming(x, y).unwrap();
            prop_assert_eq!(d(&a, &b) == 0, a == b);
            prop_assert_eq!(d(&a, &b), d(&b, &a));
            prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c));
        }

        #[test]
        fn restrict_is_a_subsequence(bits in arb_bits(60), layers in proptest::collection::btree_set(1usize..=4, 1..=4)) {
            let layout = [10, 20, 5, 25];
            let c = NeuralCode::from_bits(&bits, &layout).unwrap();
            let mask = LayerMask::new(layers.iter().copied()).unwrap();
            let r = c.restrict(&mask).unwrap();
            let expected_len: usize = layers.iter().map(|&l| layout[l - 1]).sum();
            prop_assert_eq!(r.len(), expected_len);
            let mut want = Vec::new();
            let mut offset = 0;
            for (k, &w) in layout.iter().enumerate() {
                if layers.contains(&(k + 1)) {
                    want.extend_from_slice(&bits[offset..offset + w]);
                }
                offset += w;
            }
            prop_assert_eq!(r.bits().collect::<Vec<_>>(), want);
        }

        #[test]
        fn table_matches_sort_and_group(raw in proptest::collection::vec(0u8..6, 1..60)) {
            let codes: Vec<NeuralCode> = raw
                .iter()
                .map(|&v| NeuralCode::from_bits(&[v & 1 == 1, v & 2 == 2, v & 4 == 4], &[3]).unwrap())
                .collect();
            let table = build_code_table(&codes);
            let mut sorted: Vec<(u8, usize)> = raw.iter().copied().zip(0..).collect();
            sorted.sort();
            let mut groups: Vec<Vec<usize>> = Vec::new();
            for (i, &(v, idx)) in sorted.iter().enumerate() {
                if i == 0 || sorted[i - 1].0 != v {
                    groups.push(Vec::new());
                }
                groups.last_mut().unwrap().push(idx);
            }
            let mut from_table: Vec<Vec<usize>> = table.buckets().into_iter().map(|(_, v)| v.to_vec()).collect();
            from_table.sort();
            groups.sort();
            prop_assert_eq!(from_table, groups);
            prop_assert_eq!(table.num_examples(), raw.len());
        }
    }
}
