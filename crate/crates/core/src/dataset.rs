//! Synthetic train/val/test suites and manifest-driven loading.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::boundary::{extract_boundaries, thin, Connectivity};
use crate::config::Config;
use crate::manifest::{DatasetManifest, ManifestEntry, Split};
use crate::net::{Sample, Tensor};
use crate::synth::{synth_scene, SynthSpec};
use crate::{io, BoundaryMap, Error, LabelMap, Result};

#[derive(Debug, Clone)]
pub struct Scene {
    pub split: Split,
    /// File stem relative to the dataset directory, e.g. `test/0007`.
    pub stem: String,
    pub image: Tensor,
    pub labels: LabelMap,
    /// Thinned instance-boundary ground truth.
    pub gt: BoundaryMap,
}

/// Seed of scene `index` (counted across all splits).
pub fn scene_seed(base: u64, index: usize) -> u64 {
    base.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (index as u64).wrapping_add(1).wrapping_mul(0xbf58_476d_1ce4_e5b9)
}

pub fn ground_truth(labels: &LabelMap, connectivity: Connectivity) -> BoundaryMap {
    thin(&extract_boundaries(labels, connectivity))
}

/// Generates every scene of the configured suite, train first, then val,
/// then test. Scene seeds derive from `cfg.synth.seed`.
pub fn generate(cfg: &Config) -> Result<Vec<Scene>> {
    cfg.synth.validate()?;
    let plan: Vec<(Split, usize)> = [(Split::Train, cfg.n_train), (Split::Val, cfg.n_val), (Split::Test, cfg.n_test)]
        .into_iter()
        .flat_map(|(split, n)| (0..n).map(move |i| (split, i)))
        .collect();
    plan.par_iter()
        .enumerate()
        .map(|(global, &(split, i))| {
            let spec = SynthSpec {
                seed: scene_seed(cfg.synth.seed, global),
                ..cfg.synth.clone()
            };
            let (image, labels) = synth_scene(&spec)?;
            let gt = ground_truth(&labels, cfg.connectivity);
            let dir = match split {
                Split::Train => "train",
                Split::Val => "val",
                Split::Test => "test",
            };
            Ok(Scene {
                split,
                stem: format!("{dir}/{i:04}"),
                image,
                labels,
                gt,
            })
        })
        .collect()
}

/// Writes images, label maps and ground truth under `dir` together with
/// `dir/manifest.json`.
pub fn write(scenes: &[Scene], dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    let dir = dir.as_ref();
    for sub in ["train", "val", "test"] {
        let p = dir.join(sub);
        std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let entries = scenes
        .par_iter()
        .map(|s| {
            let image = PathBuf::from(format!("{}.png", s.stem));
            let boundary = PathBuf::from(format!("{}.gt.png", s.stem));
            io::save_image(&s.image, dir.join(&image))?;
            io::save_label_map(&s.labels, dir.join(&s.stem))?;
            io::save_boundary_map(&s.gt, dir.join(&boundary))?;
            Ok(ManifestEntry {
                split: s.split,
                image,
                labels: Some(PathBuf::from(&s.stem)),
                boundary: Some(boundary),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest {
        entries,
        root: dir.to_path_buf(),
    };
    manifest.save(dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Loads the image and ground truth of every entry in `split`. Ground truth
/// comes from the boundary file when present, otherwise it is derived from
/// the label maps.
pub fn load_split(manifest: &DatasetManifest, split: Split, connectivity: Connectivity) -> Result<Vec<Sample>> {
    let entries: Vec<&ManifestEntry> = manifest.split(split).collect();
    entries
        .par_iter()
        .map(|e| {
            let image = io::load_image(manifest.resolve(&e.image))?;
            let gt = match (&e.boundary, &e.labels) {
                (Some(b), _) => io::load_boundary_map(manifest.resolve(b))?,
                (None, Some(l)) => ground_truth(&io::load_label_map(manifest.resolve(l))?, connectivity),
                (None, None) => {
                    return Err(Error::Config(format!("{}: no ground truth", e.image.display())));
                }
            };
            if (image.width(), image.height()) != gt.dims() {
                return Err(Error::DimensionMismatch {
                    expected: gt.dims(),
                    found: (image.width(), image.height()),
                });
            }
            Ok(Sample { image, gt })
        })
        .collect()
}

pub fn samples(scenes: &[Scene], split: Split) -> Vec<Sample> {
    scenes
        .iter()
        .filter(|s| s.split == split)
        .map(|s| Sample {
            image: s.image.clone(),
            gt: s.gt.clone(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Config {
        Config {
            n_train: 3,
            n_val: 1,
            n_test: 2,
            ..Config::default()
        }
    }

    #[test]
    fn written_dataset_loads_back_identically() {
        let cfg = small();
        let scenes = generate(&cfg).unwrap();
        assert_eq!(scenes.len(), 6);
        assert_eq!(scenes[3].stem, "val/0000");
        let dir = tempfile::tempdir().unwrap();
        write(&scenes, dir.path()).unwrap();
        let m = DatasetManifest::load(dir.path().join("manifest.json")).unwrap();
        m.validate().unwrap();
        let test = load_split(&m, Split::Test, cfg.connectivity).unwrap();
        let mem = samples(&scenes, Split::Test);
        assert_eq!(test.len(), 2);
        for (a, b) in test.iter().zip(&mem) {
            assert_eq!(a.image, b.image);
            assert_eq!(a.gt, b.gt);
        }
    }

    #[test]
    fn scene_seeds_are_distinct() {
        let seeds: std::collections::BTreeSet<u64> = (0..1000).map(|i| scene_seed(0, i)).collect();
        assert_eq!(seeds.len(), 1000);
    }
}
