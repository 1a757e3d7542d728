use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::layers::{bilinear_kernel, ConvLayer};
use crate::{Error, Result};

/// Shape of the detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub in_channels: usize,
    /// Output width of every convolution in stage `k`.
    pub widths: Vec<usize>,
    pub convs_per_stage: usize,
    pub kernel: usize,
    /// Pyramid resize factors; the first must be 1.
    pub scales: Vec<f64>,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            in_channels: 3,
            widths: vec![8, 16, 32],
            convs_per_stage: 2,
            kernel: 3,
            scales: vec![1.0, 0.8, 0.5],
        }
    }
}

impl Architecture {
    pub fn stages(&self) -> usize {
        self.widths.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::Config("stage widths must be non-empty and positive".into()));
        }
        if self.in_channels == 0 || self.convs_per_stage == 0 {
            return Err(Error::Config("channels and convs per stage must be positive".into()));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::Config("convolution kernel must be odd".into()));
        }
        if self.scales.first() != Some(&1.0) {
            return Err(Error::Config("the first pyramid scale must be 1".into()));
        }
        if self.scales.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::Config("pyramid scales must be positive".into()));
        }
        Ok(())
    }
}

/// Shared trunk: `K` stages of same-padded convolution + ReLU, with 2×2 max
/// pooling between consecutive stages.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseNet {
    pub stages: Vec<Vec<ConvLayer>>,
}

impl BaseNet {
    pub fn in_channels(&self) -> usize {
        self.stages[0][0].in_channels
    }

    /// Channel count `d_k` of stage `k` (0-based).
    pub fn stage_width(&self, k: usize) -> usize {
        self.stages[k].last().expect("stages are non-empty").out_channels
    }
}

/// Side-output head for one `(scale, stage)`: a 1×1 projection to one
/// channel followed by a transposed-convolution upsampling.
#[derive(Debug, Clone, PartialEq)]
pub struct SideHead {
    pub feat: Vec<f64>,
    /// Row-major upsampling kernel.
    pub up: Vec<f64>,
    pub factor: usize,
    pub learnable_up: bool,
}

/// Scale-specific weights: one head per stage and the stage-fusion weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleBranch {
    pub scale: f64,
    pub heads: Vec<SideHead>,
    pub fuse: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub base: BaseNet,
    pub branches: Vec<ScaleBranch>,
    pub w_scale: Vec<f64>,
}

/// Independently addressable parameter groups; update sets are built from
/// these.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ParamGroup {
    /// All convolutions of trunk stage `k` (0-based).
    Trunk(usize),
    Feat { scale: usize, stage: usize },
    Up { scale: usize, stage: usize },
    Fuse { scale: usize },
    ScaleWeights,
}

/// Set of parameter groups a training step may change.
pub type UpdateSet = BTreeSet<ParamGroup>;

impl ModelParams {
    /// He-initialised trunk and 1×1 heads, bilinear upsampling kernels,
    /// `w_fuse = 1/K` and `w_scale = 1/|S|`.
    pub fn init(arch: &Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gaussian = |std: f64, n: usize| -> Vec<f64> {
            let dist = Normal::new(0.0, std).expect("finite std");
            (0..n).map(|_| dist.sample(&mut rng)).collect()
        };

        let mut stages = Vec::with_capacity(arch.stages());
        let mut in_ch = arch.in_channels;
        for &width in &arch.widths {
            let mut convs = Vec::with_capacity(arch.convs_per_stage);
            for _ in 0..arch.convs_per_stage {
                let mut conv = ConvLayer::zeros(in_ch, width, arch.kernel);
                let fan_in = in_ch * arch.kernel * arch.kernel;
                conv.weight = gaussian((2.0 / fan_in as f64).sqrt(), conv.weight.len());
                convs.push(conv);
                in_ch = width;
            }
            stages.push(convs);
        }

        let k = arch.stages();
        let mut branches = Vec::with_capacity(arch.scales.len());
        for &scale in &arch.scales {
            let mut heads = Vec::with_capacity(k);
            for (stage, &width) in arch.widths.iter().enumerate() {
                let factor = 1usize << stage;
                heads.push(SideHead {
                    feat: gaussian((2.0 / width as f64).sqrt(), width),
                    up: bilinear_kernel(factor)?,
                    factor,
                    learnable_up: false,
                });
            }
            branches.push(ScaleBranch {
                scale,
                heads,
                fuse: vec![1.0 / k as f64; k],
            });
        }
        let n_scales = arch.scales.len();
        Ok(Self {
            base: BaseNet { stages },
            branches,
            w_scale: vec![1.0 / n_scales as f64; n_scales],
        })
    }

    pub fn stages(&self) -> usize {
        self.base.stages.len()
    }

    pub fn scales(&self) -> Vec<f64> {
        self.branches.iter().map(|b| b.scale).collect()
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            in_channels: self.base.in_channels(),
            widths: (0..self.stages()).map(|k| self.base.stage_width(k)).collect(),
            convs_per_stage: self.base.stages[0].len(),
            kernel: self.base.stages[0][0].kernel,
            scales: self.scales(),
        }
    }

    /// Same-shaped container filled with zeros, used for gradients.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for g in self.all_groups() {
            for s in z.group_mut(g) {
                s.fill(0.0);
            }
        }
        z
    }

    /// Copy restricted to the scale-1 branch with unit scale weight.
    pub fn single_scale(&self) -> Self {
        Self {
            base: self.base.clone(),
            branches: vec![self.branches[0].clone()],
            w_scale: vec![1.0],
        }
    }

    /// Every group present in the model.
    pub fn all_groups(&self) -> Vec<ParamGroup> {
        let mut out: Vec<ParamGroup> = (0..self.stages()).map(ParamGroup::Trunk).collect();
        for (scale, b) in self.branches.iter().enumerate() {
            for stage in 0..b.heads.len() {
                out.push(ParamGroup::Feat { scale, stage });
                out.push(ParamGroup::Up { scale, stage });
            }
            out.push(ParamGroup::Fuse { scale });
        }
        out.push(ParamGroup::ScaleWeights);
        out
    }

    pub fn check_group(&self, g: ParamGroup) -> Result<()> {
        let ok = match g {
            ParamGroup::Trunk(k) => k < self.stages(),
            ParamGroup::Feat { scale, stage } | ParamGroup::Up { scale, stage } => {
                scale < self.branches.len() && stage < self.stages()
            }
            ParamGroup::Fuse { scale } => scale < self.branches.len(),
            ParamGroup::ScaleWeights => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSelector(format!("{g:?} does not exist in this model")))
        }
    }

    pub fn group(&self, g: ParamGroup) -> Vec<&[f64]> {
        match g {
            ParamGroup::Trunk(k) => self.base.stages[k]
                .iter()
                .flat_map(|c| [c.weight.as_slice(), c.bias.as_slice()])
                .collect(),
            ParamGroup::Feat { scale, stage } => vec![&self.branches[scale].heads[stage].feat],
            ParamGroup::Up { scale, stage } => vec![&self.branches[scale].heads[stage].up],
            ParamGroup::Fuse { scale } => vec![&self.branches[scale].fuse],
            ParamGroup::ScaleWeights => vec![&self.w_scale],
        }
    }

    pub fn group_mut(&mut self, g: ParamGroup) -> Vec<&mut [f64]> {
        match g {
            ParamGroup::Trunk(k) => self.base.stages[k]
                .iter_mut()
                .flat_map(|c| [c.weight.as_mut_slice(), c.bias.as_mut_slice()])
                .collect(),
            ParamGroup::Feat { scale, stage } => vec![&mut self.branches[scale].heads[stage].feat],
            ParamGroup::Up { scale, stage } => vec![&mut self.branches[scale].heads[stage].up],
            ParamGroup::Fuse { scale } => vec![&mut self.branches[scale].fuse],
            ParamGroup::ScaleWeights => vec![&mut self.w_scale],
        }
    }

    pub fn group_len(&self, g: ParamGroup) -> usize {
        self.group(g).iter().map(|s| s.len()).sum()
    }

    /// FNV-1a over the bit patterns of a group's values; equal checksums
    /// before and after a step mean the group was not touched.
    pub fn checksum(&self, g: ParamGroup) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for s in self.group(g) {
            for v in s {
                for byte in v.to_bits().to_le_bytes() {
                    h ^= byte as u64;
                    h = h.wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        }
        h
    }

    /// Checksum of every trunk stage.
    pub fn trunk_checksum(&self) -> Vec<u64> {
        (0..self.stages()).map(|k| self.checksum(ParamGroup::Trunk(k))).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.all_groups()
            .into_iter()
            .all(|g| self.group(g).iter().all(|s| s.iter().all(|v| v.is_finite())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_shapes() {
        let m = ModelParams::init(&Architecture::default(), 7).unwrap();
        assert_eq!(m.stages(), 3);
        assert_eq!(m.branches.len(), 3);
        assert_eq!(m.w_scale, vec![1.0 / 3.0; 3]);
        for b in &m.branches {
            assert_eq!(b.fuse, vec![1.0 / 3.0; 3]);
            assert_eq!(b.heads[0].up, vec![1.0]);
            assert_eq!(b.heads[1].up.len(), 16);
            assert_eq!(b.heads[2].up.len(), 64);
            assert_eq!(b.heads[2].feat.len(), 32);
        }
        assert_eq!(m.base.stages[1][0].in_channels, 8);
        assert_eq!(m.architecture(), Architecture::default());
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let arch = Architecture::default();
        assert_eq!(ModelParams::init(&arch, 1).unwrap(), ModelParams::init(&arch, 1).unwrap());
        assert_ne!(ModelParams::init(&arch, 1).unwrap(), ModelParams::init(&arch, 2).unwrap());
    }

    #[test]
    fn rejects_bad_architecture() {
        let mut arch = Architecture::default();
        arch.scales = vec![0.8, 1.0];
        assert!(ModelParams::init(&arch, 0).is_err());
        arch.scales = vec![1.0];
        arch.widths.clear();
        assert!(ModelParams::init(&arch, 0).is_err());
    }

    #[test]
    fn checksum_tracks_changes() {
        let mut m = ModelParams::init(&Architecture::default(), 3).unwrap();
        let before = m.checksum(ParamGroup::Trunk(1));
        m.base.stages[1][1].bias[0] += 1e-300;
        assert_ne!(before, m.checksum(ParamGroup::Trunk(1)));
        assert!(m.check_group(ParamGroup::Trunk(3)).is_err());
        assert!(m.check_group(ParamGroup::Fuse { scale: 3 }).is_err());
    }
}
