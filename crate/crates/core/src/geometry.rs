//! Exact stochastic activation diameters.
//!
//! With the activation pattern frozen at `x`, every preactivation along
//! `x + t * u` is affine in `t`: `z(t) = alpha + beta * t`. The region ends
//! at the first `t` (on either side of zero) where some unit's affine
//! function changes sign, and up to that point the frozen pattern is the
//! true one, so the nearest crossings give the exact interval.

use std::io::Write;

use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::nn::{MlpModel, NnError};

/// Half-length given to a side with no crossing.
pub const DEFAULT_CAP: f64 = 1e6;
/// Direction slopes smaller than this never cross.
pub const SLOPE_EPSILON: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum GeometryError {
    #[error(transparent)]
    Model(#[from] NnError),
    #[error("point lies on a region boundary (layer {layer}, unit {unit} has preactivation 0)")]
    Boundary { layer: usize, unit: usize },
    #[error("direction has length {got}, model expects {expected}")]
    Direction { got: usize, expected: usize },
    #[error("no anchor examples")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiameterSample {
    pub anchor_index: usize,
    pub direction: Array1<f64>,
    pub t_lo: f64,
    pub t_hi: f64,
    pub bounded_lo: bool,
    pub bounded_hi: bool,
    pub diameter: f64,
}

impl DiameterSample {
    pub fn is_bounded(&self) -> bool {
        self.bounded_lo && self.bounded_hi
    }
}

/// Uniform direction on the unit sphere (normalized standard normal).
pub fn sample_direction<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Array1<f64> {
    assert!(dim >= 1, "direction needs at least one dimension");
    loop {
        let g = Array1::from_shape_simple_fn(dim, || rng.sample::<f64, _>(StandardNormal));
        let norm = g.dot(&g).sqrt();
        if norm > 1e-300 {
            return g / norm;
        }
    }
}

/// Value and slope (in `t`) of every hidden preactivation along the line,
/// with the activation pattern frozen at `t = 0`.
pub fn frozen_line_affine(
    model: &MlpModel,
    x: ArrayView1<f64>,
    direction: ArrayView1<f64>,
) -> Result<Vec<(Array1<f64>, Array1<f64>)>, GeometryError> {
    if x.len() != model.input_dim() {
        return Err(NnError::Dimension(format!(
            "input has length {}, model expects {}",
            x.len(),
            model.input_dim()
        ))
        .into());
    }
    if direction.len() != model.input_dim() {
        return Err(GeometryError::Direction {
            got: direction.len(),
            expected: model.input_dim(),
        });
    }
    let bn_affine: Option<Vec<_>> = model
        .batch_norm()
        .map(|bn| bn.iter().map(|l| l.inference_affine()).collect());
    let mut value = x.to_owned();
    let mut slope = direction.to_owned();
    let mut out = Vec::with_capacity(model.num_hidden_layers());
    for k in 0..model.num_hidden_layers() {
        let w = &model.weights()[k];
        let mut alpha = w.dot(&value) + &model.biases()[k];
        let mut beta = w.dot(&slope);
        if let Some(affine) = &bn_affine {
            let (scale, shift) = &affine[k];
            alpha = alpha * scale + shift;
            beta *= scale;
        }
        value = alpha.mapv(|a| if a > 0.0 { a } else { 0.0 });
        slope = Array1::from_iter(
            alpha
                .iter()
                .zip(beta.iter())
                .map(|(&a, &b)| if a > 0.0 { b } else { 0.0 }),
        );
        out.push((alpha, beta));
    }
    Ok(out)
}

/// Exact interval `[t_lo, t_hi]` of the activation region of `x` along
/// `direction`. Sides without a crossing (or with the nearest crossing past
/// `cap`) are reported at `∓cap` and flagged unbounded.
pub fn region_interval(
    model: &MlpModel,
    x: ArrayView1<f64>,
    direction: ArrayView1<f64>,
    cap: f64,
) -> Result<DiameterSample, GeometryError> {
    let layers = frozen_line_affine(model, x, direction)?;
    let mut t_hi = f64::INFINITY;
    let mut t_lo = f64::NEG_INFINITY;
    for (layer, (alpha, beta)) in layers.iter().enumerate() {
        for (unit, (&a, &b)) in alpha.iter().zip(beta.iter()).enumerate() {
            if a == 0.0 {
                return Err(GeometryError::Boundary { layer: layer + 1, unit });
            }
            if b.abs() < SLOPE_EPSILON {
                continue;
            }
            let t = -a / b;
            if t > 0.0 {
                t_hi = t_hi.min(t);
            } else {
                t_lo = t_lo.max(t);
            }
        }
    }
    let bounded_hi = t_hi < cap;
    let bounded_lo = t_lo > -cap;
    let t_hi = if bounded_hi { t_hi } else { cap };
    let t_lo = if bounded_lo { t_lo } else { -cap };
    Ok(DiameterSample {
        anchor_index: 0,
        direction: direction.to_owned(),
        t_lo,
        t_hi,
        bounded_lo,
        bounded_hi,
        diameter: t_hi - t_lo,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiameterConfig {
    pub cap: f64,
    /// Use one direction for every anchor instead of a fresh one each.
    pub shared_direction: bool,
    pub seed: u64,
}

impl Default for DiameterConfig {
    fn default() -> Self {
        Self {
            cap: DEFAULT_CAP,
            shared_direction: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiameterSummary {
    /// Mean over samples bounded on both sides; `None` if there are none.
    pub mean: Option<f64>,
    pub bounded_count: usize,
    pub unbounded_count: usize,
    /// Anchors dropped because they sit on a region boundary.
    pub skipped: Vec<usize>,
    pub samples: Vec<DiameterSample>,
}

/// Stochastic diameters of the regions containing each row of `anchors`.
pub fn avg_stochastic_diameter(
    model: &MlpModel,
    anchors: ArrayView2<f64>,
    config: &DiameterConfig,
) -> Result<DiameterSummary, GeometryError> {
    if anchors.nrows() == 0 {
        return Err(GeometryError::Empty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let shared = config
        .shared_direction
        .then(|| sample_direction(model.input_dim(), &mut rng));
    let mut samples = Vec::with_capacity(anchors.nrows());
    let mut skipped = Vec::new();
    for (i, x) in anchors.rows().into_iter().enumerate() {
        let u = match &shared {
            Some(u) => u.clone(),
            None => sample_direction(model.input_dim(), &mut rng),
        };
        match region_interval(model, x, u.view(), config.cap) {
            Ok(mut s) => {
                s.anchor_index = i;
                samples.push(s);
            }
            // A zero preactivation does not depend on the direction, so
            // drawing another direction cannot help.
            Err(GeometryError::Boundary { layer, unit }) => {
                log::warn!("anchor {i} lies on a boundary (layer {layer}, unit {unit}); skipped");
                skipped.push(i);
            }
            Err(e) => return Err(e),
        }
    }
    let bounded: Vec<f64> = samples
        .iter()
        .filter(|s| s.is_bounded())
        .map(|s| s.diameter)
        .collect();
    let mean = (!bounded.is_empty()).then(|| bounded.iter().sum::<f64>() / bounded.len() as f64);
    Ok(DiameterSummary {
        mean,
        bounded_count: bounded.len(),
        unbounded_count: samples.len() - bounded.len(),
        skipped,
        samples,
    })
}

/// Writes the `diameter,bounded_lo,bounded_hi` histogram export.
pub fn write_histogram<W: Write>(samples: &[DiameterSample], mut out: W) -> Result<(), GeometryError> {
    writeln!(out, "diameter,bounded_lo,bounded_hi")?;
    for s in samples {
        writeln!(out, "{},{},{}", s.diameter, s.bounded_lo, s.bounded_hi)?;
    }
    Ok(())
}
