//! Deterministic synthetic scenes: randomly placed ellipses and convex
//! polygons painted back to front over a background region.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::net::Tensor;
use crate::{Error, LabelMap, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Ellipse,
    Polygon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub n_shapes: usize,
    /// Category count including the background category 0.
    pub n_categories: u16,
    pub kinds: Vec<ShapeKind>,
    /// Shape extent (diameter) bounds in pixels.
    pub min_size: f64,
    pub max_size: f64,
    /// Standard deviation of the additive pixel noise.
    pub noise: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            width: 64,
            height: 64,
            n_shapes: 3,
            n_categories: 5,
            kinds: vec![ShapeKind::Ellipse, ShapeKind::Polygon],
            min_size: 14.0,
            max_size: 34.0,
            noise: 0.04,
        }
    }
}

impl SynthSpec {
    /// A square scene of side `size` holding two shapes scaled to fit, used
    /// for small-input checks.
    pub fn small(size: usize, seed: u64) -> Self {
        Self {
            seed,
            width: size,
            height: size,
            n_shapes: 2,
            min_size: size as f64 * 0.4,
            max_size: size as f64,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidDimensions {
                width: self.width,
                height: self.height,
            });
        }
        if self.n_categories < 2 {
            return Err(Error::Config("n_categories must be at least 2".into()));
        }
        if self.n_shapes >= u16::MAX as usize {
            return Err(Error::Config("too many shapes for 16-bit instance ids".into()));
        }
        if self.n_shapes > 0 && self.kinds.is_empty() {
            return Err(Error::Config("at least one shape kind is required".into()));
        }
        if !(self.min_size.is_finite() && self.max_size.is_finite() && self.min_size > 0.0 && self.min_size <= self.max_size) {
            return Err(Error::Config(format!(
                "shape sizes must satisfy 0 < min_size <= max_size, got {}..{}",
                self.min_size, self.max_size
            )));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::Config(format!("noise must be non-negative, got {}", self.noise)));
        }
        Ok(())
    }
}

enum Shape {
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64, cos: f64, sin: f64 },
    /// Counter-clockwise vertices.
    Polygon(Vec<(f64, f64)>),
}

impl Shape {
    fn contains(&self, x: f64, y: f64) -> bool {
        match self {
            Shape::Ellipse { cx, cy, rx, ry, cos, sin } => {
                let (dx, dy) = (x - cx, y - cy);
                let u = dx * cos + dy * sin;
                let v = -dx * sin + dy * cos;
                (u / rx).powi(2) + (v / ry).powi(2) <= 1.0
            }
            Shape::Polygon(vs) => (0..vs.len()).all(|i| {
                let (x0, y0) = vs[i];
                let (x1, y1) = vs[(i + 1) % vs.len()];
                (x1 - x0) * (y - y0) - (y1 - y0) * (x - x0) >= 0.0
            }),
        }
    }
}

fn random_shape(rng: &mut ChaCha8Rng, kind: ShapeKind, spec: &SynthSpec) -> Shape {
    let cx = rng.random_range(0.0..spec.width as f64);
    let cy = rng.random_range(0.0..spec.height as f64);
    let radius = |rng: &mut ChaCha8Rng| rng.random_range(spec.min_size..=spec.max_size) / 2.0;
    match kind {
        ShapeKind::Ellipse => {
            let (rx, ry) = (radius(rng), radius(rng));
            let theta = rng.random_range(0.0..std::f64::consts::PI);
            Shape::Ellipse {
                cx,
                cy,
                rx,
                ry,
                cos: theta.cos(),
                sin: theta.sin(),
            }
        }
        ShapeKind::Polygon => {
            let n = rng.random_range(3..=6);
            let mut angles: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
            angles.sort_by(f64::total_cmp);
            let r = radius(rng);
            // Points on one circle in angular order form a convex polygon.
            Shape::Polygon(angles.iter().map(|a| (cx + r * a.cos(), cy + r * a.sin())).collect())
        }
    }
}

/// Renders one scene. Category 0/instance 0 is the background; shape `i`
/// gets instance id `i + 1` and a random non-background category. Colours
/// combine a per-category base colour, a per-instance brightness offset and
/// linear shading, plus Gaussian noise; values are clamped to `[0, 1]` and
/// quantised to 8 bits so images survive a PNG round trip unchanged.
pub fn synth_scene(spec: &SynthSpec) -> Result<(Tensor, LabelMap)> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let palette: Vec<[f64; 3]> = (0..spec.n_categories)
        .map(|_| [rng.random_range(0.1..0.9), rng.random_range(0.1..0.9), rng.random_range(0.1..0.9)])
        .collect();

    let mut labels = LabelMap::uniform(w, h, 0, 0)?;
    for i in 0..spec.n_shapes {
        let kind = spec.kinds[rng.random_range(0..spec.kinds.len())];
        let shape = random_shape(&mut rng, kind, spec);
        let category = rng.random_range(1..spec.n_categories);
        for y in 0..h {
            for x in 0..w {
                if shape.contains(x as f64 + 0.5, y as f64 + 0.5) {
                    labels.set(x, y, category, i as u16 + 1);
                }
            }
        }
    }

    // Shading per instance (background included): offset + gradient.
    let shading: Vec<[f64; 3]> = (0..=spec.n_shapes)
        .map(|_| {
            [
                rng.random_range(-0.08..0.08),
                rng.random_range(-0.004..0.004),
                rng.random_range(-0.004..0.004),
            ]
        })
        .collect();
    let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::Config(e.to_string()))?;
    let mut image = Tensor::image(3, h, w);
    for c in 0..3 {
        for y in 0..h {
            for x in 0..w {
                let (cat, inst) = labels.label(x, y);
                let [off, gx, gy] = shading[inst as usize];
                let v = palette[cat as usize][c] + off + gx * (x as f64 - w as f64 / 2.0) + gy * (y as f64 - h as f64 / 2.0);
                let v = (v + noise.sample(&mut rng)).clamp(0.0, 1.0);
                image.plane_mut(c)[y * w + x] = (v * 255.0).round() / 255.0;
            }
        }
    }
    Ok((image, labels))
}
