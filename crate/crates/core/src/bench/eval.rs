use serde::{Deserialize, Serialize};

use super::matching::correspond;
use crate::boundary::thin;
use crate::{BoundaryMap, Error, Result, SoftBoundaryMap};

/// Fraction of the image diagonal used as the default matching radius.
pub const DEFAULT_DMAX_FRACTION: f64 = 0.0075;

/// Matching radius in pixels for an image of the given size.
pub fn default_d_max(width: usize, height: usize) -> f64 {
    DEFAULT_DMAX_FRACTION * ((width * width + height * height) as f64).sqrt()
}

/// `k / 100` for `k = 1..=99`.
pub fn default_thresholds() -> Vec<f64> {
    uniform_thresholds(99)
}

/// `k / (n + 1)` for `k = 1..=n`.
pub fn uniform_thresholds(n: usize) -> Vec<f64> {
    (1..=n).map(|k| k as f64 / (n + 1) as f64).collect()
}

pub fn f_measure(precision: f64, recall: f64) -> f64 {
    if precision + recall <= 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Raw correspondence counts at one threshold.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp_pred: u64,
    pub n_pred: u64,
    pub tp_gt: u64,
    pub n_gt: u64,
}

impl Counts {
    pub fn precision(&self) -> f64 {
        if self.n_pred == 0 {
            1.0
        } else {
            self.tp_pred as f64 / self.n_pred as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.n_gt == 0 {
            1.0
        } else {
            self.tp_gt as f64 / self.n_gt as f64
        }
    }

    pub fn f(&self) -> f64 {
        f_measure(self.precision(), self.recall())
    }
}

impl std::ops::Add for Counts {
    type Output = Counts;

    fn add(self, o: Counts) -> Counts {
        Counts {
            tp_pred: self.tp_pred + o.tp_pred,
            n_pred: self.n_pred + o.n_pred,
            tp_gt: self.tp_gt + o.tp_gt,
            n_gt: self.n_gt + o.n_gt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PRPoint {
    pub threshold: f64,
    pub tp_pred: u64,
    pub n_pred: u64,
    pub tp_gt: u64,
    pub n_gt: u64,
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

impl PRPoint {
    pub fn from_counts(threshold: f64, c: Counts) -> Self {
        Self {
            threshold,
            tp_pred: c.tp_pred,
            n_pred: c.n_pred,
            tp_gt: c.tp_gt,
            n_gt: c.n_gt,
            precision: c.precision(),
            recall: c.recall(),
            f: c.f(),
        }
    }

    pub fn counts(&self) -> Counts {
        Counts {
            tp_pred: self.tp_pred,
            n_pred: self.n_pred,
            tp_gt: self.tp_gt,
            n_gt: self.n_gt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub curve: Vec<PRPoint>,
    pub ods_f: f64,
    pub ods_threshold: f64,
    pub ois_f: f64,
    pub ap: f64,
}

/// Thresholds the soft map (`confidence >= t`) and thins the result.
pub fn binarize_and_thin(soft: &SoftBoundaryMap, t: f64) -> BoundaryMap {
    thin(&binarize(soft, t))
}

pub fn binarize(soft: &SoftBoundaryMap, t: f64) -> BoundaryMap {
    let mask = soft.confidence().iter().map(|&c| c >= t).collect();
    BoundaryMap::new(soft.width(), soft.height(), mask).expect("dimensions come from a valid map")
}

/// Per-threshold correspondence counts of one prediction against one
/// (already thinned) ground-truth map.
pub fn evaluate_image(
    soft: &SoftBoundaryMap,
    gt: &BoundaryMap,
    thresholds: &[f64],
    d_max: f64,
) -> Result<Vec<PRPoint>> {
    if soft.dims() != gt.dims() {
        return Err(Error::DimensionMismatch {
            expected: gt.dims(),
            found: soft.dims(),
        });
    }
    validate_thresholds(thresholds)?;
    let n_gt = gt.count() as u64;
    let mut out = Vec::with_capacity(thresholds.len());
    let mut previous: Option<(BoundaryMap, Counts)> = None;
    for &t in thresholds {
        let raw = binarize(soft, t);
        // Consecutive thresholds often select the same pixels.
        let counts = match &previous {
            Some((prev_raw, c)) if *prev_raw == raw => *c,
            _ => {
                let pred = thin(&raw);
                let m = correspond(&pred, gt, d_max)?;
                let c = Counts {
                    tp_pred: m.matched() as u64,
                    n_pred: m.n_pred as u64,
                    tp_gt: m.matched() as u64,
                    n_gt,
                };
                previous = Some((raw, c));
                c
            }
        };
        out.push(PRPoint::from_counts(t, counts));
    }
    Ok(out)
}

fn validate_thresholds(thresholds: &[f64]) -> Result<()> {
    if thresholds.is_empty() {
        return Err(Error::NoData("threshold list is empty"));
    }
    if thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) || thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidValue(
            "thresholds must be strictly increasing within [0, 1]".into(),
        ));
    }
    Ok(())
}

/// Number of recall levels sampled by [`average_precision`].
pub const AP_RECALL_SAMPLES: usize = 101;

/// Mean interpolated precision at recall `0.00, 0.01, ..., 1.00`. The
/// interpolated precision at level `r` is the best precision among curve
/// points reaching recall `>= r`, or 0 when no point does.
pub fn average_precision(curve: &[PRPoint]) -> f64 {
    let step = 1.0 / (AP_RECALL_SAMPLES - 1) as f64;
    let total: f64 = (0..AP_RECALL_SAMPLES)
        .map(|i| {
            let r = i as f64 * step;
            curve
                .iter()
                // Tolerate rounding in `i * step` at the top end.
                .filter(|p| p.recall >= r - 1e-12)
                .map(|p| p.precision)
                .fold(0.0, f64::max)
        })
        .sum();
    total / AP_RECALL_SAMPLES as f64
}

/// Dataset-level summary from per-image curves that share one threshold
/// list. Counts are integers, so the result does not depend on image order.
pub fn aggregate(per_image: &[Vec<PRPoint>]) -> Result<BenchmarkSummary> {
    let first = per_image.first().ok_or(Error::NoData("no images to aggregate"))?;
    let n_t = first.len();
    if n_t == 0 {
        return Err(Error::NoData("empty per-image curve"));
    }
    for img in per_image {
        if img.len() != n_t || img.iter().zip(first).any(|(a, b)| a.threshold != b.threshold) {
            return Err(Error::InvalidValue("images do not share a threshold list".into()));
        }
    }

    let curve: Vec<PRPoint> = (0..n_t)
        .map(|k| {
            let c = per_image
                .iter()
                .map(|img| img[k].counts())
                .fold(Counts::default(), |a, b| a + b);
            PRPoint::from_counts(first[k].threshold, c)
        })
        .collect();

    let best = argmax_f(&curve);
    let ois_counts = per_image
        .iter()
        .map(|img| img[argmax_f(img)].counts())
        .fold(Counts::default(), |a, b| a + b);

    Ok(BenchmarkSummary {
        ods_f: curve[best].f,
        ods_threshold: curve[best].threshold,
        ois_f: ois_counts.f(),
        ap: average_precision(&curve),
        curve,
    })
}

/// First index with the largest F.
fn argmax_f(points: &[PRPoint]) -> usize {
    let mut best = 0;
    for (i, p) in points.iter().enumerate() {
        if p.f > points[best].f {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(threshold: f64, tp: u64, n_pred: u64, n_gt: u64) -> PRPoint {
        PRPoint::from_counts(
            threshold,
            Counts {
                tp_pred: tp,
                n_pred,
                tp_gt: tp,
                n_gt,
            },
        )
    }

    #[test]
    fn f_measure_examples() {
        assert_eq!(f_measure(1.0, 1.0), 1.0);
        assert_eq!(f_measure(0.0, 0.7), 0.0);
        assert_eq!(f_measure(0.0, 0.0), 0.0);
        assert!((f_measure(0.5, 1.0) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn precision_convention_for_empty_prediction() {
        let c = Counts {
            tp_pred: 0,
            n_pred: 0,
            tp_gt: 0,
            n_gt: 10,
        };
        assert_eq!(c.precision(), 1.0);
        assert_eq!(c.recall(), 0.0);
        assert_eq!(c.f(), 0.0);
    }

    #[test]
    fn default_grid_and_radius() {
        let t = default_thresholds();
        assert_eq!(t.len(), 99);
        assert_eq!(t[0], 0.01);
        assert_eq!(t[98], 0.99);
        assert!((default_d_max(64, 64) - 0.0075 * 64.0 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn zero_map_binarizes_empty() {
        let soft = SoftBoundaryMap::new(3, 3, vec![0.0; 9]).unwrap();
        assert_eq!(binarize_and_thin(&soft, 0.5).count(), 0);
    }

    #[test]
    fn aggregate_single_image_ois_equals_ods() {
        let img = vec![pt(0.25, 4, 10, 8), pt(0.5, 5, 6, 8), pt(0.75, 2, 2, 8)];
        let s = aggregate(&[img.clone()]).unwrap();
        let best = img.iter().map(|p| p.f).fold(0.0, f64::max);
        assert_eq!(s.ods_f, best);
        assert_eq!(s.ois_f, s.ods_f);
        assert_eq!(s.ods_threshold, 0.5);
    }

    #[test]
    fn two_images_with_different_best_thresholds() {
        let a = vec![pt(0.3, 8, 10, 10), pt(0.6, 4, 4, 10)];
        let b = vec![pt(0.3, 2, 10, 10), pt(0.6, 6, 6, 10)];
        let s = aggregate(&[a, b]).unwrap();
        // Pooled: t=0.3 gives P = R = 0.5; t=0.6 gives P = 1, R = 0.5.
        assert!((s.ods_f - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.ods_threshold, 0.6);
        // Each image at its own best: (8 + 6) / (10 + 6) and 14 / 20.
        assert!((s.ois_f - 7.0 / 9.0).abs() < 1e-15);
        assert!(s.ois_f >= s.ods_f);
    }

    #[test]
    fn aggregate_rejects_empty_and_mismatched() {
        assert!(matches!(aggregate(&[]), Err(Error::NoData(_))));
        let a = vec![pt(0.5, 1, 1, 1)];
        let b = vec![pt(0.6, 1, 1, 1)];
        assert!(aggregate(&[a, b]).is_err());
    }

    #[test]
    fn evaluate_rejects_bad_thresholds() {
        let soft = SoftBoundaryMap::new(2, 2, vec![0.0; 4]).unwrap();
        let gt = BoundaryMap::empty(2, 2).unwrap();
        assert!(evaluate_image(&soft, &gt, &[0.5, 0.5], 1.0).is_err());
        assert!(evaluate_image(&soft, &gt, &[1.5], 1.0).is_err());
        let gt3 = BoundaryMap::empty(3, 2).unwrap();
        assert!(matches!(
            evaluate_image(&soft, &gt3, &[0.5], 1.0),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
