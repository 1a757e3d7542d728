use rayon::prelude::*;

use super::eval::{aggregate, evaluate_image, BenchmarkSummary, DEFAULT_DMAX_FRACTION};
use crate::net::Tensor;
use crate::{BoundaryMap, Error, Result, SoftBoundaryMap};

/// Sobel gradient magnitude of the channel-mean image, normalised so the
/// strongest response is 1. Borders replicate edge pixels.
pub fn sobel_baseline(image: &Tensor) -> Result<SoftBoundaryMap> {
    if image.batch() != 1 {
        return Err(Error::InvalidValue("expected a single image".into()));
    }
    let (h, w, c) = (image.height(), image.width(), image.channels());
    let mut gray = vec![0.0; h * w];
    for ch in 0..c {
        for (g, v) in gray.iter_mut().zip(image.plane(ch)) {
            *g += v / c as f64;
        }
    }
    let at = |x: isize, y: isize| {
        let x = x.clamp(0, w as isize - 1) as usize;
        let y = y.clamp(0, h as isize - 1) as usize;
        gray[y * w + x]
    };
    let mut mag = vec![0.0; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            // Differences first, so flat regions give exactly zero.
            let gx = (at(x + 1, y - 1) - at(x - 1, y - 1))
                + 2.0 * (at(x + 1, y) - at(x - 1, y))
                + (at(x + 1, y + 1) - at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) - at(x - 1, y - 1))
                + 2.0 * (at(x, y + 1) - at(x, y - 1))
                + (at(x + 1, y + 1) - at(x + 1, y - 1));
            mag[y as usize * w + x as usize] = gx.hypot(gy);
        }
    }
    let max = mag.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        mag.iter_mut().for_each(|m| *m /= max);
    }
    SoftBoundaryMap::new(w, h, mag)
}

/// Evaluates prediction/ground-truth pairs in parallel and aggregates them.
/// The matching radius of each image is `d_max_fraction` of its diagonal.
pub fn benchmark(
    pairs: &[(SoftBoundaryMap, BoundaryMap)],
    thresholds: &[f64],
    d_max_fraction: f64,
) -> Result<BenchmarkSummary> {
    let per_image = pairs
        .par_iter()
        .map(|(soft, gt)| {
            let (w, h) = gt.dims();
            let d_max = d_max_fraction * ((w * w + h * h) as f64).sqrt();
            evaluate_image(soft, gt, thresholds, d_max)
        })
        .collect::<Result<Vec<_>>>()?;
    aggregate(&per_image)
}

/// [`benchmark`] with the default radius.
pub fn benchmark_default(pairs: &[(SoftBoundaryMap, BoundaryMap)], thresholds: &[f64]) -> Result<BenchmarkSummary> {
    benchmark(pairs, thresholds, DEFAULT_DMAX_FRACTION)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_image_has_no_response_and_step_is_symmetric() {
        let flat = Tensor::from_vec([1, 3, 4, 4], vec![0.3; 48]).unwrap();
        assert!(sobel_baseline(&flat).unwrap().confidence().iter().all(|&v| v == 0.0));

        let mut step = Tensor::image(1, 4, 6);
        for y in 0..4 {
            for x in 3..6 {
                step.plane_mut(0)[y * 6 + x] = 1.0;
            }
        }
        let s = sobel_baseline(&step).unwrap();
        for y in 0..4 {
            assert_eq!(s.get(2, y), 1.0);
            assert_eq!(s.get(3, y), 1.0);
            assert_eq!(s.get(0, y), 0.0);
            assert_eq!(s.get(5, y), 0.0);
        }
    }
}
