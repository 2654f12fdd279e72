//! WebAssembly bindings for the activation-region explorer in `www/`.

pub mod explorer;

use wasm_bindgen::prelude::*;

use explorer::{Explorer, Shape};

const EXTENT: f64 = 1.6;
const CAP: f64 = 1e6;

#[wasm_bindgen]
pub struct RegionExplorer {
    inner: Explorer,
}

#[wasm_bindgen]
impl RegionExplorer {
    /// `shape` is "moons", "rings" or "xor".
    #[wasm_bindgen(constructor)]
    pub fn new(shape: &str, n: usize, seed: u32) -> Result<RegionExplorer, JsError> {
        let shape = Shape::parse(shape).ok_or_else(|| JsError::new("unknown shape"))?;
        Ok(Self {
            inner: Explorer::new(shape, n, u64::from(seed)),
        })
    }

    /// Trains a fresh network; returns training accuracy.
    pub fn train(&mut self, width: usize, layers: usize, epochs: usize, lr: f64, seed: u32) -> Result<f64, JsError> {
        self.inner
            .train(width, layers, epochs, lr, u64::from(seed))
            .map_err(|e| JsError::new(&e))
    }

    pub fn extent(&self) -> f64 {
        EXTENT
    }

    /// `0xRRGGBB` per pixel, row-major, top row first.
    pub fn region_colors(&self, res: usize) -> Vec<u32> {
        self.inner.region_colors(res, EXTENT)
    }

    /// Flattened `[x, y, label, ...]`.
    pub fn points(&self) -> Vec<f64> {
        let (x, y) = self.inner.points();
        x.rows()
            .into_iter()
            .zip(y)
            .flat_map(|(r, &l)| [r[0], r[1], l as f64])
            .collect()
    }

    /// `[points, distinct codes, redundancy, k-NN accuracy, train accuracy, regions in view]`.
    pub fn stats(&self, res: usize) -> Vec<f64> {
        let s = self.inner.stats();
        vec![
            s.points as f64,
            s.distinct_codes as f64,
            s.redundancy,
            s.knn_accuracy,
            s.train_accuracy,
            self.inner.regions_in_view(res, EXTENT) as f64,
        ]
    }

    /// `[x0, y0, x1, y1, length, bounded]`, empty on a region boundary.
    pub fn segment(&self, x: f64, y: f64, angle: f64) -> Vec<f64> {
        match self.inner.segment(x, y, angle, CAP) {
            Some(s) => vec![
                s.start.0,
                s.start.1,
                s.end.0,
                s.end.1,
                s.length,
                f64::from(u8::from(s.bounded)),
            ],
            None => Vec::new(),
        }
    }

    pub fn code_at(&self, x: f64, y: f64) -> String {
        self.inner.code_at(x, y)
    }
}
