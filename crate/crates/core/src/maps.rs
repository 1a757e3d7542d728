use crate::{Error, Result};

/// Per-pixel `(category, instance)` labelling of an image. Row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    category: Vec<u16>,
    instance: Vec<u16>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, category: Vec<u16>, instance: Vec<u16>) -> Result<Self> {
        check_dims(width, height)?;
        let n = width * height;
        if category.len() != n || instance.len() != n {
            return Err(Error::InvalidValue(format!(
                "label grids hold {} and {} values, expected {n}",
                category.len(),
                instance.len()
            )));
        }
        Ok(Self {
            width,
            height,
            category,
            instance,
        })
    }

    /// A map where every pixel carries the same label.
    pub fn uniform(width: usize, height: usize, category: u16, instance: u16) -> Result<Self> {
        check_dims(width, height)?;
        let n = width * height;
        Self::new(width, height, vec![category; n], vec![instance; n])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn category(&self) -> &[u16] {
        &self.category
    }

    pub fn instance(&self) -> &[u16] {
        &self.instance
    }

    #[inline]
    pub fn label(&self, x: usize, y: usize) -> (u16, u16) {
        let i = y * self.width + x;
        (self.category[i], self.instance[i])
    }

    pub fn set(&mut self, x: usize, y: usize, category: u16, instance: u16) {
        let i = y * self.width + x;
        self.category[i] = category;
        self.instance[i] = instance;
    }
}

/// Binary per-pixel boundary mask. Row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryMap {
    width: usize,
    height: usize,
    mask: Vec<bool>,
}

impl BoundaryMap {
    pub fn new(width: usize, height: usize, mask: Vec<bool>) -> Result<Self> {
        check_dims(width, height)?;
        if mask.len() != width * height {
            return Err(Error::InvalidValue(format!(
                "mask holds {} values, expected {}",
                mask.len(),
                width * height
            )));
        }
        Ok(Self {
            width,
            height,
            mask,
        })
    }

    pub fn empty(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![false; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.mask[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    /// Coordinates `(x, y)` of set pixels in raster order.
    pub fn points(&self) -> Vec<(usize, usize)> {
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| (i % self.width, i / self.width))
            .collect()
    }

    /// True when every set pixel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &BoundaryMap) -> bool {
        self.dims() == other.dims() && self.mask.iter().zip(&other.mask).all(|(&a, &b)| !a || b)
    }
}

/// Per-pixel boundary confidence in `[0, 1]`. Row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftBoundaryMap {
    width: usize,
    height: usize,
    confidence: Vec<f64>,
}

impl SoftBoundaryMap {
    pub fn new(width: usize, height: usize, confidence: Vec<f64>) -> Result<Self> {
        check_dims(width, height)?;
        if confidence.len() != width * height {
            return Err(Error::InvalidValue(format!(
                "confidence grid holds {} values, expected {}",
                confidence.len(),
                width * height
            )));
        }
        if let Some(v) = confidence.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidValue(format!("confidence {v} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            confidence,
        })
    }

    pub fn from_mask(bm: &BoundaryMap) -> Self {
        Self {
            width: bm.width,
            height: bm.height,
            confidence: bm.mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn confidence(&self) -> &[f64] {
        &self.confidence
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.confidence[y * self.width + x]
    }
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 || width.checked_mul(height).is_none() {
        return Err(Error::InvalidDimensions { width, height });
    }
    Ok(())
}
