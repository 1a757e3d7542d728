use super::forward::{clamp_prob, sigmoid};
use crate::{BoundaryMap, Error, Result, SoftBoundaryMap};

/// Class-balanced cross-entropy summed over pixels:
/// `-β Σ_{y=1} log p - (1-β) Σ_{y=0} log(1-p)`, with `p` clamped to
/// `[ε, 1-ε]`.
pub fn weighted_bce(pred: &SoftBoundaryMap, gt: &BoundaryMap, beta: f64) -> Result<f64> {
    if pred.dims() != gt.dims() {
        return Err(Error::DimensionMismatch {
            expected: gt.dims(),
            found: pred.dims(),
        });
    }
    check_beta(beta)?;
    Ok(pred
        .confidence()
        .iter()
        .zip(gt.mask())
        .map(|(&p, &y)| pixel_loss(clamp_prob(p), y, beta))
        .sum())
}

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Config(format!("beta must lie in [0, 1], got {beta}")));
    }
    Ok(())
}

#[inline]
pub(crate) fn pixel_loss(p: f64, y: bool, beta: f64) -> f64 {
    if y {
        -beta * p.ln()
    } else {
        -(1.0 - beta) * (1.0 - p).ln()
    }
}

/// Loss and its gradient with respect to the logits, evaluated on clamped
/// probabilities.
pub(crate) fn weighted_bce_logits(z: &[f64], gt: &[bool], beta: f64) -> (f64, Vec<f64>) {
    let mut loss = 0.0;
    let grad = z
        .iter()
        .zip(gt)
        .map(|(&zi, &y)| {
            let p = clamp_prob(sigmoid(zi));
            loss += pixel_loss(p, y, beta);
            if y {
                -beta * (1.0 - p)
            } else {
                (1.0 - beta) * p
            }
        })
        .collect();
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn one(p: f64, y: bool, beta: f64) -> f64 {
        let soft = SoftBoundaryMap::new(1, 1, vec![p]).unwrap();
        let gt = BoundaryMap::new(1, 1, vec![y]).unwrap();
        weighted_bce(&soft, &gt, beta).unwrap()
    }

    #[test]
    fn single_pixel_values() {
        assert!((one(0.5, true, 0.9) - 0.9 * LN_2).abs() < 1e-15);
        assert!((one(0.5, false, 0.9) - 0.1 * LN_2).abs() < 1e-15);
        assert!((one(0.5, true, 0.9) - 0.62383).abs() < 1e-5);
        assert!((one(0.5, false, 0.9) - 0.06931).abs() < 1e-5);
    }

    #[test]
    fn perfect_prediction_is_nearly_free() {
        let gt = BoundaryMap::new(2, 2, vec![true, false, false, true]).unwrap();
        let soft = SoftBoundaryMap::from_mask(&gt);
        let l = weighted_bce(&soft, &gt, 0.9).unwrap();
        assert!(l >= 0.0 && l < 4.0 * 1e-10);
    }

    #[test]
    fn beta_one_ignores_background() {
        let gt = BoundaryMap::new(3, 1, vec![false, true, false]).unwrap();
        let soft = SoftBoundaryMap::new(3, 1, vec![0.9, 0.25, 0.7]).unwrap();
        let l = weighted_bce(&soft, &gt, 1.0).unwrap();
        assert!((l + 0.25f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn rejects_mismatch() {
        let gt = BoundaryMap::empty(2, 2).unwrap();
        let soft = SoftBoundaryMap::new(1, 2, vec![0.5, 0.5]).unwrap();
        assert!(matches!(weighted_bce(&soft, &gt, 0.9), Err(Error::DimensionMismatch { .. })));
        let soft = SoftBoundaryMap::new(2, 2, vec![0.5; 4]).unwrap();
        assert!(weighted_bce(&soft, &gt, 1.5).is_err());
    }
}
