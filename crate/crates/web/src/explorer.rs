//! Platform-independent state behind the browser demo.

use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nhash::codes::{encode, encode_batch, NeuralCode};
use nhash::geometry::region_interval;
use nhash::nn::{train_with, MlpModel, Optimizer, TrainConfig};
use nhash::probes::{knn_accuracy, redundancy};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Moons,
    Rings,
    Xor,
}

impl Shape {
    pub fn parse(name: &str) -> Option<Shape> {
        match name {
            "moons" => Some(Shape::Moons),
            "rings" => Some(Shape::Rings),
            "xor" => Some(Shape::Xor),
            _ => None,
        }
    }
}

/// Two-class toy points in roughly `[-1.5, 1.5]^2`.
pub fn toy_points(shape: Shape, n: usize, noise: f64, seed: u64) -> (Array2<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array2::zeros((n, 2));
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % 2;
        let (px, py) = match shape {
            Shape::Moons => {
                let t = rng.random::<f64>() * std::f64::consts::PI;
                if label == 0 {
                    (t.cos() - 0.5, t.sin() - 0.25)
                } else {
                    (0.5 - t.cos(), 0.25 - t.sin())
                }
            }
            Shape::Rings => {
                let t = rng.random::<f64>() * std::f64::consts::TAU;
                let r = if label == 0 { 0.5 } else { 1.2 };
                (r * t.cos(), r * t.sin())
            }
            Shape::Xor => {
                let a: f64 = rng.random_range(0.1..1.3);
                let b: f64 = rng.random_range(0.1..1.3);
                let flip_a = rng.random::<bool>();
                let sx = if flip_a { -1.0 } else { 1.0 };
                let sy = if (label == 0) == flip_a { -1.0 } else { 1.0 };
                (sx * a, sy * b)
            }
        };
        x[[i, 0]] = px + noise * (rng.random::<f64>() - 0.5);
        x[[i, 1]] = py + noise * (rng.random::<f64>() - 0.5);
        y.push(label);
    }
    (x, y)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub points: usize,
    pub distinct_codes: usize,
    pub redundancy: f64,
    pub knn_accuracy: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: (f64, f64),
    pub end: (f64, f64),
    pub length: f64,
    pub bounded: bool,
}

pub struct Explorer {
    x: Array2<f64>,
    y: Vec<usize>,
    model: MlpModel,
}

const CLASSES: usize = 2;

impl Explorer {
    pub fn new(shape: Shape, n: usize, seed: u64) -> Self {
        let (x, y) = toy_points(shape, n.max(2), 0.3, seed);
        let model = MlpModel::init(&[2, 8, CLASSES], seed).expect("valid dims");
        Self { x, y, model }
    }

    /// Retrains from a fresh initialization; returns training accuracy.
    pub fn train(
        &mut self,
        width: usize,
        layers: usize,
        epochs: usize,
        lr: f64,
        seed: u64,
    ) -> Result<f64, String> {
        if width == 0 || layers == 0 {
            return Err("width and layers must be positive".into());
        }
        let mut dims = vec![2];
        dims.extend(std::iter::repeat_n(width, layers));
        dims.push(CLASSES);
        let model = MlpModel::init(&dims, seed).map_err(|e| e.to_string())?;
        let cfg = TrainConfig {
            optimizer: Optimizer::adam(lr),
            epochs,
            batch_size: 32,
            seed,
            ..TrainConfig::default()
        };
        let (model, _) = train_with(model, self.x.view(), &self.y, &cfg, &[], |_, _| Ok(()))
            .map_err(|e| e.to_string())?;
        self.model = model;
        self.model.accuracy(self.x.view(), &self.y).map_err(|e| e.to_string())
    }

    pub fn points(&self) -> (&Array2<f64>, &[usize]) {
        (&self.x, &self.y)
    }

    pub fn stats(&self) -> Stats {
        let codes = self.codes();
        let r = redundancy(&codes).expect("non-empty");
        let k = 5.min(codes.len());
        let knn = knn_accuracy(&codes, &self.y, &codes, &self.y, k).expect("consistent codes");
        Stats {
            points: r.n,
            distinct_codes: r.m,
            redundancy: r.ratio,
            knn_accuracy: knn.train_accuracy,
            train_accuracy: self.model.accuracy(self.x.view(), &self.y).expect("2-D inputs"),
        }
    }

    fn codes(&self) -> Vec<NeuralCode> {
        encode_batch(&self.model, self.x.view()).expect("2-D inputs")
    }

    /// Row-major `res x res` RGB colors over `[-extent, extent]^2`, top row
    /// first; pixels sharing a code share a color.
    pub fn region_colors(&self, res: usize, extent: f64) -> Vec<u32> {
        let mut grid = Array2::zeros((res * res, 2));
        for row in 0..res {
            for col in 0..res {
                let (px, py) = pixel_to_point(col, row, res, extent);
                grid[[row * res + col, 0]] = px;
                grid[[row * res + col, 1]] = py;
            }
        }
        let codes = encode_batch(&self.model, grid.view()).expect("2-D inputs");
        codes.iter().map(code_color).collect()
    }

    /// Number of distinct codes on the rendered grid.
    pub fn regions_in_view(&self, res: usize, extent: f64) -> usize {
        let mut colors = self.region_colors(res, extent);
        colors.sort_unstable();
        colors.dedup();
        colors.len()
    }

    /// The piece of the line through `(px, py)` at `angle` that stays inside
    /// the activation region of `(px, py)`. `None` if the point sits exactly
    /// on a boundary.
    pub fn segment(&self, px: f64, py: f64, angle: f64, cap: f64) -> Option<Segment> {
        let x = array![px, py];
        let u = array![angle.cos(), angle.sin()];
        let s = region_interval(&self.model, x.view(), u.view(), cap).ok()?;
        Some(Segment {
            start: (px + s.t_lo * u[0], py + s.t_lo * u[1]),
            end: (px + s.t_hi * u[0], py + s.t_hi * u[1]),
            length: s.diameter,
            bounded: s.is_bounded(),
        })
    }

    /// Code of a point as a '0'/'1' string.
    pub fn code_at(&self, px: f64, py: f64) -> String {
        encode(&self.model, array![px, py].view())
            .expect("2-D input")
            .to_bit_string()
    }
}

pub fn pixel_to_point(col: usize, row: usize, res: usize, extent: f64) -> (f64, f64) {
    let step = 2.0 * extent / res as f64;
    (
        -extent + (col as f64 + 0.5) * step,
        extent - (row as f64 + 0.5) * step,
    )
}

/// Pastel color from an FNV-1a hash of the code words.
fn code_color(code: &NeuralCode) -> u32 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for w in code.words() {
        for b in w.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    let channel = |shift: u32| 110 + ((h >> shift) & 0x7f) as u32;
    (channel(0) << 16) | (channel(16) << 8) | channel(32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_sets_are_balanced_and_bounded() {
        for shape in [Shape::Moons, Shape::Rings, Shape::Xor] {
            let (x, y) = toy_points(shape, 200, 0.3, 1);
            assert_eq!(y.iter().filter(|&&l| l == 1).count(), 100);
            assert!(x.iter().all(|v| v.abs() < 2.0));
        }
    }

    #[test]
    fn training_separates_moons() {
        let mut e = Explorer::new(Shape::Moons, 200, 3);
        let acc = e.train(16, 2, 200, 0.01, 3).unwrap();
        assert!(acc > 0.9, "{acc}");
        let s = e.stats();
        assert_eq!(s.points, 200);
        assert!(s.distinct_codes > 1 && s.knn_accuracy > 0.8);
    }

    #[test]
    fn same_color_means_same_code() {
        let mut e = Explorer::new(Shape::Rings, 100, 1);
        e.train(6, 1, 20, 0.01, 1).unwrap();
        let res = 24;
        let colors = e.region_colors(res, 1.5);
        assert_eq!(colors.len(), res * res);
        for (i, j) in [(0, 1), (5, 100), (300, 301)] {
            let (a, b) = (pixel_to_point(i % res, i / res, res, 1.5), pixel_to_point(j % res, j / res, res, 1.5));
            if e.code_at(a.0, a.1) == e.code_at(b.0, b.1) {
                assert_eq!(colors[i], colors[j]);
            }
        }
        assert!(e.regions_in_view(res, 1.5) >= 1);
    }

    #[test]
    fn segment_endpoints_stay_in_region() {
        let mut e = Explorer::new(Shape::Xor, 120, 2);
        e.train(8, 2, 50, 0.01, 2).unwrap();
        let (px, py) = (0.3, -0.2);
        let seg = e.segment(px, py, 0.7, 1e6).unwrap();
        let code = e.code_at(px, py);
        for f in [0.01, 0.5, 0.99] {
            let qx = seg.start.0 + f * (seg.end.0 - seg.start.0);
            let qy = seg.start.1 + f * (seg.end.1 - seg.start.1);
            assert_eq!(e.code_at(qx, qy), code);
        }
        assert!(seg.length > 0.0);
    }
}
