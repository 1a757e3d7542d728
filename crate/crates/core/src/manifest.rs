//! JSON dataset manifests.
//!
//! ```json
//! {"entries": [{"split": "train", "image": "train/0000.png",
//!               "labels": "train/0000", "boundary": "train/0000.gt.png"}]}
//! ```
//!
//! Relative paths are resolved against the manifest's directory. `labels`
//! is a label-map stem (see [`crate::io::label_paths`]).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{io, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::Config(format!("unknown split `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub split: Split,
    pub image: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: DatasetManifest =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self).expect("manifest serialises");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    /// Entries of one split, in manifest order.
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Checks that every entry has ground truth, referenced files exist and
    /// agree in size, and no image is listed under two splits.
    pub fn validate(&self) -> Result<()> {
        let mut seen: BTreeMap<PathBuf, Split> = BTreeMap::new();
        for e in &self.entries {
            if e.labels.is_none() && e.boundary.is_none() {
                return Err(Error::Config(format!("{}: entry has neither labels nor boundary", e.image.display())));
            }
            if let Some(prev) = seen.insert(e.image.clone(), e.split) {
                if prev != e.split {
                    return Err(Error::Config(format!(
                        "{} appears in both {prev:?} and {:?} splits",
                        e.image.display(),
                        e.split
                    )));
                }
            }
            let img = io::load_image(self.resolve(&e.image))?;
            let dims = (img.width(), img.height());
            if let Some(l) = &e.labels {
                let lm = io::load_label_map(self.resolve(l))?;
                check(dims, (lm.width(), lm.height()))?;
            }
            if let Some(b) = &e.boundary {
                check(dims, io::load_boundary_map(self.resolve(b))?.dims())?;
            }
        }
        Ok(())
    }
}

fn check(expected: (usize, usize), found: (usize, usize)) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}
