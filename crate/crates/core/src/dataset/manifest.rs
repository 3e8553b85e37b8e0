use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::io::load_image;
use super::PairedSample;
use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
    Validation,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Validation => "validation",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitFractions {
    pub train: f64,
    pub test: f64,
    pub validation: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.80,
            test: 0.19,
            validation: 0.01,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let all = [self.train, self.test, self.validation];
        if all.iter().any(|f| !f.is_finite() || *f < 0.0) || (all.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!(
                "split fractions {all:?} must be non-negative and sum to 1"
            )));
        }
        Ok(())
    }

    /// `(train, test, validation)` counts for `n` samples: test and
    /// validation are floored and the remainder goes to train. A split with
    /// a positive fraction that floors to zero still gets one sample, taken
    /// from train.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        let floor = |f: f64| (f * n as f64 + 1e-9).floor() as usize;
        let mut test = floor(self.test);
        let mut validation = floor(self.validation);
        if self.test > 0.0 && test == 0 {
            test = 1;
        }
        if self.validation > 0.0 && validation == 0 {
            validation = 1;
        }
        let train = n.saturating_sub(test + validation);
        (train, test, validation)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Relative to the manifest's directory.
    pub lq_path: String,
    pub hq_path: String,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub seed: u64,
    pub fractions: SplitFractions,
    pub entries: Vec<ManifestEntry>,
}

pub fn lq_path_for(id: &str) -> String {
    format!("lq/{id}.tif")
}

pub fn hq_path_for(id: &str) -> String {
    format!("hq/{id}.tif")
}

/// Seeded shuffle of `ids` followed by contiguous assignment in the order
/// train, test, validation.
pub fn split_dataset<S: AsRef<str>>(ids: &[S], fractions: SplitFractions, seed: u64) -> Result<DatasetManifest> {
    fractions.validate()?;
    if ids.len() < 3 {
        return Err(Error::invalid(format!(
            "need at least 3 samples to split, got {}",
            ids.len()
        )));
    }
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id.as_ref()) {
            return Err(Error::invalid(format!("duplicate sample id {:?}", id.as_ref())));
        }
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train, test, _) = fractions.counts(ids.len());
    let entries = order
        .into_iter()
        .enumerate()
        .map(|(rank, i)| {
            let split = if rank < train {
                Split::Train
            } else if rank < train + test {
                Split::Test
            } else {
                Split::Validation
            };
            let id = ids[i].as_ref();
            ManifestEntry {
                id: id.to_string(),
                lq_path: lq_path_for(id),
                hq_path: hq_path_for(id),
                split,
            }
        })
        .collect();
    Ok(DatasetManifest {
        version: MANIFEST_VERSION,
        seed,
        fractions,
        entries,
    })
}

impl DatasetManifest {
    pub fn count(&self, split: Split) -> usize {
        self.entries.iter().filter(|e| e.split == split).count()
    }

    pub fn entries_in(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: DatasetManifest = serde_json::from_str(&text)?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::invalid(format!(
                "{}: unsupported manifest version {}",
                path.display(),
                m.version
            )));
        }
        Ok(m)
    }

    /// Loads the image pairs of one split; paths resolve against `root`.
    pub fn load_split(&self, root: impl AsRef<Path>, split: Split) -> Result<Vec<PairedSample>> {
        let root = root.as_ref();
        self.entries_in(split).map(|e| e.load(root)).collect()
    }
}

impl ManifestEntry {
    /// Loads this pair; relative paths resolve against `root`.
    pub fn load(&self, root: impl AsRef<Path>) -> Result<PairedSample> {
        let root = root.as_ref();
        let lq = load_image(resolve(root, &self.lq_path))?;
        let hq = load_image(resolve(root, &self.hq_path))?;
        if lq.shape() != hq.shape() {
            return Err(Error::ShapeMismatch {
                context: "manifest pair",
                left: lq.shape().to_vec(),
                right: hq.shape().to_vec(),
            });
        }
        Ok(PairedSample {
            lq,
            hq,
            id: self.id.clone(),
            transform_log: Vec::new(),
        })
    }
}

fn resolve(root: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}
