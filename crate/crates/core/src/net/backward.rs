//! Reverse-mode gradients of the three training losses.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::forward::{clamp_prob, forward_scale, sigmoid, Heads, ScaleCache};
use super::layers::{
    conv2d_backward, max_pool2_backward, relu_backward_inplace, resize_bilinear, resize_bilinear_backward,
    side_feature_backward, upsample_backward,
};
use super::loss::{check_beta, pixel_loss, weighted_bce_logits};
use super::model::{ModelParams, ParamGroup, UpdateSet};
use super::Tensor;
use crate::{BoundaryMap, Error, Result};

/// One training example.
#[derive(Debug, Clone)]
pub struct Sample {
    pub image: Tensor,
    pub gt: BoundaryMap,
}

/// Which loss drives the gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossSelector {
    /// Side-output loss of trunk stage `k` (0-based) at scale 1.
    SideOutput(usize),
    /// Scale-specific loss of pyramid level `s` (0-based).
    ScaleSpecific(usize),
    /// Fused multi-scale boundary loss.
    Boundary,
}

impl LossSelector {
    pub fn validate(&self, model: &ModelParams) -> Result<()> {
        match *self {
            LossSelector::SideOutput(k) if k >= model.stages() => {
                Err(Error::InvalidSelector(format!("side output {k} but model has {} stages", model.stages())))
            }
            LossSelector::ScaleSpecific(s) if s >= model.branches.len() => Err(Error::InvalidSelector(format!(
                "scale {s} but model has {} scales",
                model.branches.len()
            ))),
            _ => Ok(()),
        }
    }

    /// Every parameter group the loss depends on.
    pub fn dependency_set(&self, model: &ModelParams) -> UpdateSet {
        let mut set = UpdateSet::new();
        let heads = |set: &mut UpdateSet, scale: usize| {
            for stage in 0..model.stages() {
                set.insert(ParamGroup::Feat { scale, stage });
                set.insert(ParamGroup::Up { scale, stage });
            }
            set.insert(ParamGroup::Fuse { scale });
        };
        match *self {
            LossSelector::SideOutput(k) => {
                set.extend((0..=k).map(ParamGroup::Trunk));
                set.insert(ParamGroup::Feat { scale: 0, stage: k });
                set.insert(ParamGroup::Up { scale: 0, stage: k });
            }
            LossSelector::ScaleSpecific(s) => {
                set.extend((0..model.stages()).map(ParamGroup::Trunk));
                heads(&mut set, s);
            }
            LossSelector::Boundary => {
                set.extend((0..model.stages()).map(ParamGroup::Trunk));
                for s in 0..model.branches.len() {
                    heads(&mut set, s);
                }
                set.insert(ParamGroup::ScaleWeights);
            }
        }
        set
    }
}

/// Summed loss over the batch and gradients for every parameter the loss
/// depends on.
pub fn backward(model: &ModelParams, batch: &[Sample], selector: LossSelector, beta: f64) -> Result<(f64, ModelParams)> {
    let set = selector.dependency_set(model);
    backward_masked(model, batch, selector, beta, &set)
}

/// Like [`backward`], restricted to `set`: groups outside it come back as
/// zeros, and backpropagation stops below the lowest trunk stage in the set.
pub fn backward_masked(
    model: &ModelParams,
    batch: &[Sample],
    selector: LossSelector,
    beta: f64,
    set: &UpdateSet,
) -> Result<(f64, ModelParams)> {
    selector.validate(model)?;
    check_beta(beta)?;
    for &g in set {
        model.check_group(g)?;
    }
    let per_image: Vec<Result<(f64, ModelParams)>> = batch
        .par_iter()
        .map(|sample| {
            let mut grads = model.zeros_like();
            let loss = image_backward(model, sample, selector, beta, set, &mut grads)?;
            Ok((loss, grads))
        })
        .collect();
    // Fixed-order reduction keeps results independent of thread scheduling.
    let mut total = 0.0;
    let mut grads = model.zeros_like();
    for r in per_image {
        let (l, g) = r?;
        total += l;
        add_into(&mut grads, &g);
    }
    for g in model.all_groups() {
        if !set.contains(&g) {
            for s in grads.group_mut(g) {
                s.fill(0.0);
            }
        }
    }
    Ok((total, grads))
}

/// Loss only, no gradients.
pub fn loss(model: &ModelParams, batch: &[Sample], selector: LossSelector, beta: f64) -> Result<f64> {
    selector.validate(model)?;
    check_beta(beta)?;
    let per: Vec<Result<f64>> = batch
        .par_iter()
        .map(|s| {
            let z = logits(model, s, selector)?.0;
            check_gt(&z, &s.gt)?;
            Ok(weighted_bce_logits(z.data(), s.gt.mask(), beta).0)
        })
        .collect();
    per.into_iter().sum()
}

/// Per-pixel losses of every sample, concatenated in batch order, and a
/// fingerprint of the piecewise-linear regime the network is in: which
/// ReLUs are active and which inputs win each pooling window.
pub(crate) fn pixel_losses(model: &ModelParams, batch: &[Sample], selector: LossSelector, beta: f64) -> Result<(Vec<f64>, u64)> {
    selector.validate(model)?;
    check_beta(beta)?;
    let per: Vec<Result<(Vec<f64>, u64)>> = batch
        .par_iter()
        .map(|s| {
            let (z, caches) = logits(model, s, selector)?;
            check_gt(&z, &s.gt)?;
            let losses = z
                .data()
                .iter()
                .zip(s.gt.mask())
                .map(|(&zi, &y)| pixel_loss(clamp_prob(sigmoid(zi)), y, beta))
                .collect();
            Ok((losses, regime(&caches)))
        })
        .collect();
    let mut all = Vec::new();
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for r in per {
        let (l, sig) = r?;
        all.extend(l);
        h = (h ^ sig).wrapping_mul(0x0000_0100_0000_01b3);
    }
    Ok((all, h))
}

fn regime(caches: &[(usize, ScaleCache)]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut mix = |v: u64| h = (h ^ v).wrapping_mul(0x0000_0100_0000_01b3);
    for (_, cache) in caches {
        for stage in &cache.stages {
            for &a in stage.pool_arg.iter().flatten() {
                mix(a as u64);
            }
            for out in &stage.outputs {
                for chunk in out.data().chunks(64) {
                    let bits = chunk.iter().enumerate().fold(0u64, |b, (i, &v)| b | ((v > 0.0) as u64) << i);
                    mix(bits);
                }
            }
        }
    }
    h
}

fn add_into(acc: &mut ModelParams, g: &ModelParams) {
    for group in g.all_groups() {
        for (a, b) in acc.group_mut(group).into_iter().zip(g.group(group)) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

fn check_gt(z: &Tensor, gt: &BoundaryMap) -> Result<()> {
    if (z.width(), z.height()) != gt.dims() {
        return Err(Error::DimensionMismatch {
            expected: gt.dims(),
            found: (z.width(), z.height()),
        });
    }
    Ok(())
}

/// Scale caches needed by a selector plus the logits on the scale-1 grid.
fn logits(model: &ModelParams, sample: &Sample, selector: LossSelector) -> Result<(Tensor, Vec<(usize, ScaleCache)>)> {
    let (h, w) = (sample.image.height(), sample.image.width());
    match selector {
        LossSelector::SideOutput(k) => {
            let cache = forward_scale(model, &sample.image, 0, Heads::Only(k))?;
            let z = cache.up[k].clone().expect("head evaluated");
            Ok((z, vec![(0, cache)]))
        }
        LossSelector::ScaleSpecific(s) => {
            let cache = forward_scale(model, &sample.image, s, Heads::All)?;
            let z = resize_bilinear(cache.activation.as_ref().expect("all heads"), h, w);
            Ok((z, vec![(s, cache)]))
        }
        LossSelector::Boundary => {
            let mut z = Tensor::image(1, h, w);
            let mut caches = Vec::with_capacity(model.branches.len());
            for s in 0..model.branches.len() {
                let cache = forward_scale(model, &sample.image, s, Heads::All)?;
                let r = resize_bilinear(cache.activation.as_ref().expect("all heads"), h, w);
                for (zi, ri) in z.data_mut().iter_mut().zip(r.data()) {
                    *zi += model.w_scale[s] * ri;
                }
                caches.push((s, cache));
            }
            Ok((z, caches))
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn image_backward(
    model: &ModelParams,
    sample: &Sample,
    selector: LossSelector,
    beta: f64,
    set: &UpdateSet,
    grads: &mut ModelParams,
) -> Result<f64> {
    let (h, w) = (sample.image.height(), sample.image.width());
    let (z, caches) = logits(model, sample, selector)?;
    check_gt(&z, &sample.gt)?;
    let (loss, dz) = weighted_bce_logits(z.data(), sample.gt.mask(), beta);
    let dz = Tensor::from_vec([1, 1, h, w], dz)?;

    let lowest_trunk = set.iter().find_map(|g| match g {
        ParamGroup::Trunk(k) => Some(*k),
        _ => None,
    });
    let scale_fused = matches!(selector, LossSelector::Boundary);

    for (s, cache) in &caches {
        let s = *s;
        let mut d_f: Vec<Option<Tensor>> = vec![None; model.stages()];
        let head_grad = |k: usize, d_up: &Tensor, grads: &mut ModelParams, d_f: &mut Vec<Option<Tensor>>| {
            let head = &model.branches[s].heads[k];
            let side = cache.side[k].as_ref().expect("head evaluated");
            let want_kernel = set.contains(&ParamGroup::Up { scale: s, stage: k });
            let d_kernel = want_kernel.then(|| grads.branches[s].heads[k].up.as_mut_slice());
            let d_side = upsample_backward(side, head.factor, &head.up, d_up, d_kernel);
            let feats = cache.stages[k].features();
            let d_feat = side_feature_backward(feats, &head.feat, &d_side, &mut grads.branches[s].heads[k].feat);
            d_f[k] = Some(d_feat);
        };
        match selector {
            LossSelector::SideOutput(k) => head_grad(k, &dz, grads, &mut d_f),
            _ => {
                let d_r = if scale_fused {
                    let r = resize_bilinear(cache.activation.as_ref().expect("all heads"), h, w);
                    grads.w_scale[s] += dot(dz.data(), r.data());
                    let mut d_r = dz.clone();
                    d_r.data_mut().iter_mut().for_each(|v| *v *= model.w_scale[s]);
                    d_r
                } else {
                    dz.clone()
                };
                let d_a = resize_bilinear_backward(&d_r, cache.height, cache.width);
                for k in 0..model.stages() {
                    let up = cache.up[k].as_ref().expect("all heads");
                    grads.branches[s].fuse[k] += dot(d_a.data(), up.data());
                    let mut d_up = d_a.clone();
                    let wf = model.branches[s].fuse[k];
                    d_up.data_mut().iter_mut().for_each(|v| *v *= wf);
                    head_grad(k, &d_up, grads, &mut d_f);
                }
            }
        }
        if let Some(lowest) = lowest_trunk {
            trunk_backward(model, cache, d_f, lowest, grads);
        }
    }
    Ok(loss)
}

/// Backpropagates stage-feature gradients through the trunk down to stage
/// `lowest`, accumulating convolution gradients.
fn trunk_backward(model: &ModelParams, cache: &ScaleCache, mut d_f: Vec<Option<Tensor>>, lowest: usize, grads: &mut ModelParams) {
    let Some(top) = d_f.iter().rposition(|d| d.is_some()) else {
        return;
    };
    let mut carry: Option<Tensor> = None;
    for k in (lowest..=top).rev() {
        let mut g = match (d_f[k].take(), carry.take()) {
            (Some(mut a), Some(b)) => {
                a.add_assign(&b);
                a
            }
            (Some(a), None) | (None, Some(a)) => a,
            (None, None) => continue,
        };
        let stage = &cache.stages[k];
        for j in (0..stage.outputs.len()).rev() {
            relu_backward_inplace(&stage.outputs[j], &mut g);
            let need_input = j > 0 || k > lowest;
            let layer = &model.base.stages[k][j];
            let d_layer = &mut grads.base.stages[k][j];
            match conv2d_backward(&stage.inputs[j], layer, &g, d_layer, need_input) {
                Some(d_in) => g = d_in,
                None => break,
            }
        }
        if k > lowest {
            let prev = cache.stages[k - 1].features();
            let arg = stage.pool_arg.as_ref().expect("stages above the first are pooled");
            carry = Some(max_pool2_backward(&g, arg, prev.height(), prev.width()));
        }
    }
}
