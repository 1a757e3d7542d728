//! Central-difference verification of [`backward`](super::backward).

use rayon::prelude::*;
use serde::Serialize;

use super::backward::{backward, pixel_losses, LossSelector, Sample};
use super::model::{ModelParams, ParamGroup};
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub n_params: usize,
    /// Parameters skipped because perturbations flipped a ReLU or a pooling
    /// winner at every step size tried; finite differences do not estimate
    /// the derivative there.
    pub n_kinks: usize,
    /// Parameter with the largest error: group and flat index inside it.
    pub worst: Option<(ParamGroup, usize)>,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn value_mut(model: &mut ModelParams, g: ParamGroup, mut i: usize) -> &mut f64 {
    for s in model.group_mut(g) {
        if i < s.len() {
            return &mut s[i];
        }
        i -= s.len();
    }
    unreachable!("index checked against group_len")
}

fn value(model: &ModelParams, g: ParamGroup, mut i: usize) -> f64 {
    for s in model.group(g) {
        if i < s.len() {
            return s[i];
        }
        i -= s.len();
    }
    unreachable!("index checked against group_len")
}

/// Number of step sizes tried per coordinate: `ε, ε/10, ε/100`.
const STEP_REDUCTIONS: usize = 3;

/// Fourth-order central difference at one coordinate, or `None` when one of
/// the perturbations changes the activation regime.
#[allow(clippy::too_many_arguments)]
fn stencil(
    m: &mut ModelParams,
    g: ParamGroup,
    i: usize,
    orig: f64,
    h: f64,
    batch: &[Sample],
    selector: LossSelector,
    beta: f64,
    base_regime: u64,
) -> Result<Option<f64>> {
    let mut losses = Vec::with_capacity(4);
    for delta in [h, -h, 2.0 * h, -2.0 * h] {
        *value_mut(m, g, i) = orig + delta;
        let r = pixel_losses(m, batch, selector, beta);
        *value_mut(m, g, i) = orig;
        let (l, regime) = r?;
        if regime != base_regime {
            return Ok(None);
        }
        losses.push(l);
    }
    let diff: f64 = (0..losses[0].len())
        .map(|p| 8.0 * (losses[0][p] - losses[1][p]) - (losses[2][p] - losses[3][p]))
        .sum();
    Ok(Some(diff / (12.0 * h)))
}

/// Compares analytic gradients of the selected loss with the fourth-order
/// central difference
/// `(8(L(θ+h) − L(θ−h)) − (L(θ+2h) − L(θ−2h))) / 12h`
/// for every parameter the loss depends on, returning the largest relative
/// error.
///
/// `h` starts at `eps`; where a perturbation flips a ReLU or a pooling
/// winner, the coordinate is retried with `h` ten and a hundred times
/// smaller, and skipped (counted in `n_kinks`) if every step crosses a
/// kink. Differences are accumulated pixel by pixel, `Σ_i (l_i⁺ − l_i⁻)`,
/// rather than as differences of two large sums; with the higher-order
/// stencil this keeps rounding noise far below the tolerance even for
/// gradients around 1e-7.
pub fn grad_check(model: &ModelParams, batch: &[Sample], selector: LossSelector, beta: f64, eps: f64) -> Result<GradCheckReport> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidValue(format!("finite-difference step must be positive, got {eps}")));
    }
    if batch.is_empty() {
        return Err(Error::NoData("gradient check needs at least one sample"));
    }
    let (_, grads) = backward(model, batch, selector, beta)?;
    let coords: Vec<(ParamGroup, usize)> = selector
        .dependency_set(model)
        .into_iter()
        .flat_map(|g| (0..model.group_len(g)).map(move |i| (g, i)))
        .collect();

    let base_regime = pixel_losses(model, batch, selector, beta)?.1;
    let errors: Vec<Result<Option<(f64, f64, f64)>>> = coords
        .par_iter()
        .map_init(
            || model.clone(),
            |m, &(g, i)| {
                let orig = value(model, g, i);
                let mut step = eps;
                for _ in 0..STEP_REDUCTIONS {
                    if let Some(numeric) = stencil(m, g, i, orig, step, batch, selector, beta, base_regime)? {
                        let analytic = value(&grads, g, i);
                        return Ok(Some((relative_error(analytic, numeric), analytic, numeric)));
                    }
                    step /= 10.0;
                }
                Ok(None)
            },
        )
        .collect();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        n_params: coords.len(),
        n_kinks: 0,
        worst: None,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
    };
    for (r, &coord) in errors.into_iter().zip(&coords) {
        let Some((e, a, n)) = r? else {
            report.n_kinks += 1;
            continue;
        };
        if e > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = e;
            report.worst = Some(coord);
            report.worst_analytic = a;
            report.worst_numeric = n;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{Architecture, Tensor};
    use crate::BoundaryMap;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample(h: usize, w: usize, seed: u64) -> Sample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..3 * h * w).map(|_| rng.random::<f64>()).collect();
        let image = Tensor::from_vec([1, 3, h, w], data).unwrap();
        let mask = (0..h * w).map(|_| rng.random_bool(0.2)).collect();
        Sample {
            image,
            gt: BoundaryMap::new(w, h, mask).unwrap(),
        }
    }

    fn small_arch() -> Architecture {
        Architecture {
            widths: vec![3, 4],
            scales: vec![1.0, 0.5],
            ..Architecture::default()
        }
    }

    fn learnable(mut m: ModelParams) -> ModelParams {
        for b in &mut m.branches {
            for h in &mut b.heads {
                h.learnable_up = true;
            }
        }
        m
    }

    #[test]
    fn every_selector_matches_on_a_small_model() {
        let model = learnable(ModelParams::init(&small_arch(), 4).unwrap());
        let batch = vec![sample(6, 6, 2), sample(6, 6, 3)];
        let selectors = [
            LossSelector::SideOutput(0),
            LossSelector::SideOutput(1),
            LossSelector::ScaleSpecific(0),
            LossSelector::ScaleSpecific(1),
            LossSelector::Boundary,
        ];
        for sel in selectors {
            let r = grad_check(&model, &batch, sel, 0.9, 1e-5).unwrap();
            assert_eq!(r.n_params, sel.dependency_set(&model).iter().map(|&g| model.group_len(g)).sum::<usize>());
            assert!(r.max_rel_error <= 1e-4, "{sel:?}: {r:?}");
        }
    }

    #[test]
    fn linear_regime_is_nearly_exact() {
        // Positive weights, biases and inputs keep every ReLU active and
        // every pooling winner fixed.
        let mut model = ModelParams::init(&small_arch(), 9).unwrap();
        for k in 0..model.stages() {
            for s in model.group_mut(ParamGroup::Trunk(k)) {
                s.iter_mut().for_each(|v| *v = v.abs() * 0.3 + 0.01);
            }
        }
        let mut batch = vec![sample(6, 6, 5)];
        batch[0].image.data_mut().iter_mut().for_each(|v| *v += 0.5);
        let r = grad_check(&model, &batch, LossSelector::Boundary, 0.9, 1e-5).unwrap();
        assert_eq!(r.n_kinks, 0);
        assert!(r.max_rel_error <= 1e-7, "{r:?}");
    }

    #[test]
    fn zero_inputs_sit_on_relu_kinks() {
        // With zero input and zero biases every pre-activation is exactly 0,
        // so nudging a first-stage bias flips a ReLU.
        let model = ModelParams::init(&small_arch(), 1).unwrap();
        let mut batch = vec![sample(4, 4, 1)];
        batch[0].image.data_mut().fill(0.0);
        let r = grad_check(&model, &batch, LossSelector::SideOutput(0), 0.9, 1e-5).unwrap();
        assert!(r.n_kinks > 0);
        assert!(r.max_rel_error <= 1e-4, "{r:?}");
    }

    #[test]
    fn rejects_bad_arguments() {
        let model = ModelParams::init(&small_arch(), 1).unwrap();
        let batch = vec![sample(4, 4, 1)];
        assert!(grad_check(&model, &batch, LossSelector::Boundary, 0.9, 0.0).is_err());
        assert!(grad_check(&model, &[], LossSelector::Boundary, 0.9, 1e-5).is_err());
        assert!(grad_check(&model, &batch, LossSelector::SideOutput(2), 0.9, 1e-5).is_err());
    }
}
