//! Three-stage training schedule: greedy side-output warm start, scale-1
//! fine-tuning, then multi-scale fusion with a frozen trunk.
//!
//! Every step minimises the selected loss averaged over the pixels of the
//! mini-batch with plain SGD and L2 weight decay, and touches only the
//! parameter groups of the stage's update set.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::backward::{backward_masked, LossSelector, Sample};
use super::model::{ModelParams, ParamGroup, UpdateSet};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub beta: f64,
    pub scales: Vec<f64>,
    pub batch_size: usize,
    /// Step size for the loss averaged over the pixels of a batch.
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// SGD steps for each greedy phase.
    pub greedy_iterations: usize,
    pub scale_iterations: usize,
    pub multiscale_iterations: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            beta: 0.9,
            scales: vec![1.0, 0.8, 0.5],
            batch_size: 5,
            learning_rate: 3.0,
            weight_decay: 2e-4,
            greedy_iterations: 400,
            scale_iterations: 2000,
            multiscale_iterations: 400,
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::Config(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        if !self.scales.contains(&1.0) {
            return Err(Error::Config("scales must contain 1".into()));
        }
        if self.scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Config(format!("scales must be positive, got {:?}", self.scales)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Config(format!("weight_decay must be non-negative, got {}", self.weight_decay)));
        }
        Ok(())
    }
}

/// Per-step mean pixel loss of one training phase, measured before each
/// update.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageLog {
    pub name: String,
    pub losses: Vec<f64>,
}

impl StageLog {
    pub fn first(&self) -> Option<f64> {
        self.losses.first().copied()
    }

    pub fn last(&self) -> Option<f64> {
        self.losses.last().copied()
    }

    /// Mean of the first and last `n` entries, which smooths mini-batch noise.
    pub fn window_means(&self, n: usize) -> Option<(f64, f64)> {
        let n = n.min(self.losses.len());
        if n == 0 {
            return None;
        }
        let head = self.losses[..n].iter().sum::<f64>() / n as f64;
        let tail = self.losses[self.losses.len() - n..].iter().sum::<f64>() / n as f64;
        Some((head, tail))
    }
}

/// Shuffled, epoch-based mini-batch order.
struct Batches {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl Batches {
    fn new(n: usize, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        Self { order, pos: 0, rng }
    }

    fn next(&mut self, size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size.min(self.order.len()) {
            if self.pos == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

fn check_data(model: &ModelParams, data: &[Sample]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::NoData("training set is empty"));
    }
    for s in data {
        if s.image.batch() != 1 {
            return Err(Error::InvalidValue("training images must have batch size 1".into()));
        }
        if s.image.channels() != model.base.in_channels() {
            return Err(Error::ChannelMismatch {
                expected: model.base.in_channels(),
                found: s.image.channels(),
            });
        }
        if (s.image.width(), s.image.height()) != s.gt.dims() {
            return Err(Error::DimensionMismatch {
                expected: s.gt.dims(),
                found: (s.image.width(), s.image.height()),
            });
        }
    }
    Ok(())
}

/// Runs `iterations` SGD steps of `selector` restricted to `set`.
fn sgd(
    model: &mut ModelParams,
    data: &[Sample],
    cfg: &TrainConfig,
    selector: LossSelector,
    set: &UpdateSet,
    iterations: usize,
    stream: u64,
) -> Result<Vec<f64>> {
    let mut batches = Batches::new(data.len(), cfg.seed, stream);
    let mut losses = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let batch: Vec<Sample> = batches.next(cfg.batch_size).into_iter().map(|i| data[i].clone()).collect();
        let n_pixels: usize = batch.iter().map(|s| s.gt.width() * s.gt.height()).sum();
        let (l, grads) = backward_masked(model, &batch, selector, cfg.beta, set)?;
        let norm = 1.0 / n_pixels as f64;
        losses.push(l * norm);
        for &g in set {
            for (p, d) in model.group_mut(g).into_iter().zip(grads.group(g)) {
                for (pv, dv) in p.iter_mut().zip(d) {
                    *pv -= cfg.learning_rate * (dv * norm + cfg.weight_decay * *pv);
                }
            }
        }
        if !model.is_finite() {
            return Err(Error::InvalidValue(
                "training diverged to non-finite parameters; lower the learning rate".into(),
            ));
        }
    }
    Ok(losses)
}

/// Greedy phase `k` update set: stage-`k` trunk plus the scale-1 stage-`k`
/// side head (its upsampling kernel only when learnable).
pub fn greedy_update_set(model: &ModelParams, k: usize) -> UpdateSet {
    let mut set = UpdateSet::from([ParamGroup::Trunk(k), ParamGroup::Feat { scale: 0, stage: k }]);
    if model.branches[0].heads[k].learnable_up {
        set.insert(ParamGroup::Up { scale: 0, stage: k });
    }
    set
}

/// Scale-1 fine-tuning update set: the whole trunk and the scale-1 side
/// weights.
pub fn scale_update_set(model: &ModelParams) -> UpdateSet {
    let mut set: UpdateSet = (0..model.stages()).map(ParamGroup::Trunk).collect();
    for (k, head) in model.branches[0].heads.iter().enumerate() {
        set.insert(ParamGroup::Feat { scale: 0, stage: k });
        if head.learnable_up {
            set.insert(ParamGroup::Up { scale: 0, stage: k });
        }
    }
    set.insert(ParamGroup::Fuse { scale: 0 });
    set
}

/// Final-stage update set: every side head, every fusion vector and the
/// scale weights; the trunk is frozen.
pub fn multiscale_update_set(model: &ModelParams) -> UpdateSet {
    let mut set = UpdateSet::from([ParamGroup::ScaleWeights]);
    for (s, branch) in model.branches.iter().enumerate() {
        for (k, head) in branch.heads.iter().enumerate() {
            set.insert(ParamGroup::Feat { scale: s, stage: k });
            if head.learnable_up {
                set.insert(ParamGroup::Up { scale: s, stage: k });
            }
        }
        set.insert(ParamGroup::Fuse { scale: s });
    }
    set
}

/// Trains trunk stages one at a time, shallowest first, each from its own
/// side-output loss. Returns one log per phase.
pub fn train_stage_greedy(model: &mut ModelParams, data: &[Sample], cfg: &TrainConfig) -> Result<Vec<StageLog>> {
    (0..model.stages()).map(|k| train_greedy_phase(model, data, cfg, k)).collect()
}

/// Phase `k` (0-based) of the greedy stage on its own: `cfg.greedy_iterations`
/// steps of the side-output loss `k` over [`greedy_update_set`].
pub fn train_greedy_phase(model: &mut ModelParams, data: &[Sample], cfg: &TrainConfig, k: usize) -> Result<StageLog> {
    cfg.validate()?;
    check_data(model, data)?;
    LossSelector::SideOutput(k).validate(model)?;
    let set = greedy_update_set(model, k);
    let losses = sgd(model, data, cfg, LossSelector::SideOutput(k), &set, cfg.greedy_iterations, k as u64)?;
    Ok(StageLog {
        name: format!("greedy-{}", k + 1),
        losses,
    })
}

/// Fine-tunes the trunk and scale-1 side weights on the scale-1 fused loss;
/// side-output losses are no longer used.
pub fn train_stage_scale(model: &mut ModelParams, data: &[Sample], cfg: &TrainConfig) -> Result<StageLog> {
    cfg.validate()?;
    check_data(model, data)?;
    let set = scale_update_set(model);
    let losses = sgd(model, data, cfg, LossSelector::ScaleSpecific(0), &set, cfg.scale_iterations, 100)?;
    Ok(StageLog {
        name: "scale".into(),
        losses,
    })
}

/// Copies the scale-1 side heads into every other scale, makes the
/// upsampling kernels learnable and trains the fused multi-scale loss with
/// the trunk frozen.
pub fn train_stage_multiscale(model: &mut ModelParams, data: &[Sample], cfg: &TrainConfig) -> Result<StageLog> {
    cfg.validate()?;
    check_data(model, data)?;
    if model.scales() != cfg.scales {
        return Err(Error::Config(format!(
            "model scales {:?} differ from configured scales {:?}",
            model.scales(),
            cfg.scales
        )));
    }
    if model.scales()[0] != 1.0 {
        return Err(Error::Config("the first model scale must be 1".into()));
    }
    prepare_multiscale(model);
    let set = multiscale_update_set(model);
    let losses = sgd(model, data, cfg, LossSelector::Boundary, &set, cfg.multiscale_iterations, 200)?;
    Ok(StageLog {
        name: "multiscale".into(),
        losses,
    })
}

/// Warm start for the final stage: every scale starts from the trained
/// scale-1 heads and fusion weights.
pub fn prepare_multiscale(model: &mut ModelParams) {
    let (heads, fuse) = (model.branches[0].heads.clone(), model.branches[0].fuse.clone());
    for branch in model.branches.iter_mut().skip(1) {
        branch.heads = heads.clone();
        branch.fuse = fuse.clone();
    }
    for branch in &mut model.branches {
        for head in &mut branch.heads {
            head.learnable_up = true;
        }
    }
}
