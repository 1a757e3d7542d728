use super::layers::{conv2d, max_pool2, relu_inplace, resize_bilinear, scaled_len, side_feature, upsample};
use super::model::{BaseNet, ModelParams, SideHead};
use super::Tensor;
use crate::{Error, Result, SoftBoundaryMap};

/// Probability clamp applied before logs and to published predictions.
pub const PROB_EPS: f64 = 1e-12;

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

pub(crate) struct StageCache {
    /// Argmax indices of the pooling that produced this stage's input.
    pub pool_arg: Option<Vec<u32>>,
    pub inputs: Vec<Tensor>,
    /// Post-ReLU outputs.
    pub outputs: Vec<Tensor>,
}

impl StageCache {
    pub fn features(&self) -> &Tensor {
        self.outputs.last().expect("stage has convolutions")
    }
}

pub(crate) struct ScaleCache {
    pub height: usize,
    pub width: usize,
    pub stages: Vec<StageCache>,
    pub side: Vec<Option<Tensor>>,
    pub up: Vec<Option<Tensor>>,
    /// `ŷ_a^s` on this scale's grid, when all heads were evaluated.
    pub activation: Option<Tensor>,
}

/// Which side heads a forward pass evaluates.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Heads {
    Only(usize),
    All,
}

pub(crate) fn forward_trunk(base: &BaseNet, x: &Tensor, upto: usize) -> Result<Vec<StageCache>> {
    if x.channels() != base.in_channels() {
        return Err(Error::ChannelMismatch {
            expected: base.in_channels(),
            found: x.channels(),
        });
    }
    let mut caches: Vec<StageCache> = Vec::with_capacity(upto + 1);
    for convs in base.stages.iter().take(upto + 1) {
        let (mut cur, pool_arg) = match caches.last() {
            None => (x.clone(), None),
            Some(prev) => {
                let (p, arg) = max_pool2(prev.features());
                (p, Some(arg))
            }
        };
        let mut inputs = Vec::with_capacity(convs.len());
        let mut outputs = Vec::with_capacity(convs.len());
        for conv in convs {
            let mut out = conv2d(&cur, conv)?;
            relu_inplace(&mut out);
            inputs.push(std::mem::replace(&mut cur, out.clone()));
            outputs.push(out);
        }
        caches.push(StageCache {
            pool_arg,
            inputs,
            outputs,
        });
    }
    Ok(caches)
}

/// Stage feature maps `f^(k)` for `k = 1..K`; map `k` has spatial size
/// `ceil(input / 2^(k-1))`.
pub fn forward_base(x: &Tensor, base: &BaseNet) -> Result<Vec<Tensor>> {
    Ok(forward_trunk(base, x, base.stages.len() - 1)?
        .into_iter()
        .map(|mut s| s.outputs.pop().expect("stage has convolutions"))
        .collect())
}

/// Upsampled side output of one head at `out_h × out_w`.
pub fn head_output(features: &Tensor, head: &SideHead, out_h: usize, out_w: usize) -> Result<(Tensor, Tensor)> {
    let side = side_feature(features, &head.feat)?;
    let up = upsample(&side, head.factor, &head.up, out_h, out_w)?;
    Ok((side, up))
}

/// `ŷ_a^s(i) = Σ_k w_fuse[k] · map_k(i)`.
pub fn scale_activation(side_maps: &[Tensor], w_fuse: &[f64]) -> Result<Tensor> {
    if side_maps.len() != w_fuse.len() || side_maps.is_empty() {
        return Err(Error::InvalidValue(format!(
            "{} side maps for {} fusion weights",
            side_maps.len(),
            w_fuse.len()
        )));
    }
    let dims = side_maps[0].dims();
    if let Some(m) = side_maps.iter().find(|m| m.dims() != dims) {
        return Err(Error::DimensionMismatch {
            expected: (dims[3], dims[2]),
            found: (m.width(), m.height()),
        });
    }
    let mut out = Tensor::zeros(dims[0], dims[1], dims[2], dims[3]);
    for (m, &w) in side_maps.iter().zip(w_fuse) {
        for (o, v) in out.data_mut().iter_mut().zip(m.data()) {
            *o += w * v;
        }
    }
    Ok(out)
}

/// Pre-sigmoid fused logits `Σ_s w_scale[s] · ŷ_a^s(i)`.
pub(crate) fn fuse_logits(activations: &[Tensor], w_scale: &[f64]) -> Result<Tensor> {
    if activations.len() != w_scale.len() || activations.is_empty() {
        return Err(Error::InvalidValue(format!(
            "{} scale activations for {} scale weights",
            activations.len(),
            w_scale.len()
        )));
    }
    scale_activation(activations, w_scale)
}

/// `ŷ(i) = σ(Σ_s w_scale[s] · ŷ_a^s(i))` over activations already aligned
/// to a common grid.
pub fn multiscale_fuse(activations: &[Tensor], w_scale: &[f64]) -> Result<SoftBoundaryMap> {
    logits_to_map(&fuse_logits(activations, w_scale)?)
}

pub(crate) fn logits_to_map(z: &Tensor) -> Result<SoftBoundaryMap> {
    let probs = z.data().iter().map(|&v| clamp_prob(sigmoid(v))).collect();
    SoftBoundaryMap::new(z.width(), z.height(), probs)
}

pub(crate) fn pyramid_level(image: &Tensor, scale: f64) -> Tensor {
    let (h, w) = (image.height(), image.width());
    resize_bilinear(image, scaled_len(h, scale), scaled_len(w, scale))
}

pub(crate) fn forward_scale(model: &ModelParams, image: &Tensor, s: usize, heads: Heads) -> Result<ScaleCache> {
    let branch = model
        .branches
        .get(s)
        .ok_or_else(|| Error::InvalidSelector(format!("scale index {s} out of range")))?;
    let x = pyramid_level(image, branch.scale);
    let (h, w) = (x.height(), x.width());
    let k_total = model.stages();
    let upto = match heads {
        Heads::Only(k) if k >= k_total => {
            return Err(Error::InvalidSelector(format!("stage {k} out of range")));
        }
        Heads::Only(k) => k,
        Heads::All => k_total - 1,
    };
    let stages = forward_trunk(&model.base, &x, upto)?;
    let mut side = vec![None; k_total];
    let mut up = vec![None; k_total];
    let wanted: Vec<usize> = match heads {
        Heads::Only(k) => vec![k],
        Heads::All => (0..k_total).collect(),
    };
    for k in wanted {
        let (sd, u) = head_output(stages[k].features(), &branch.heads[k], h, w)?;
        side[k] = Some(sd);
        up[k] = Some(u);
    }
    let activation = match heads {
        Heads::All => {
            let maps: Vec<Tensor> = up.iter().map(|u| u.clone().expect("all heads evaluated")).collect();
            Some(scale_activation(&maps, &branch.fuse)?)
        }
        Heads::Only(_) => None,
    };
    Ok(ScaleCache {
        height: h,
        width: w,
        stages,
        side,
        up,
        activation,
    })
}

fn single_image(image: &Tensor) -> Result<()> {
    if image.batch() != 1 {
        return Err(Error::InvalidValue(format!(
            "expected a single image, got batch of {}",
            image.batch()
        )));
    }
    Ok(())
}

/// Fused multi-scale boundary probabilities at the input resolution.
pub fn predict(model: &ModelParams, image: &Tensor) -> Result<SoftBoundaryMap> {
    single_image(image)?;
    let (h, w) = (image.height(), image.width());
    let mut aligned = Vec::with_capacity(model.branches.len());
    for s in 0..model.branches.len() {
        let cache = forward_scale(model, image, s, Heads::All)?;
        let a = cache.activation.expect("all heads evaluated");
        aligned.push(resize_bilinear(&a, h, w));
    }
    multiscale_fuse(&aligned, &model.w_scale)
}

/// Scale-specific prediction `σ(ŷ_a^s)`, resampled to the input grid.
pub fn predict_scale(model: &ModelParams, image: &Tensor, s: usize) -> Result<SoftBoundaryMap> {
    single_image(image)?;
    let cache = forward_scale(model, image, s, Heads::All)?;
    let a = cache.activation.expect("all heads evaluated");
    logits_to_map(&resize_bilinear(&a, image.height(), image.width()))
}

/// Side-output prediction `σ(f_(side,up))` of stage `k` at scale 1.
pub fn predict_side(model: &ModelParams, image: &Tensor, k: usize) -> Result<SoftBoundaryMap> {
    single_image(image)?;
    let cache = forward_scale(model, image, 0, Heads::Only(k))?;
    logits_to_map(cache.up[k].as_ref().expect("head evaluated"))
}
