//! Directory-level preparation: pair discovery, z-matching, alignment,
//! augmentation, split and output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::align::{align_pair_detailed, select_best_z, AlignConfig};
use super::augment::{augment_all, augment_pair, AugmentConfig};
use super::io::{load_image, save_image_u16, to_rgb};
use super::manifest::{hq_path_for, lq_path_for, split_dataset, DatasetManifest, ManifestEntry, SplitFractions};
use super::PairedSample;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitOrder {
    /// Augment every aligned pair, then split the whole pool.
    #[default]
    AugmentThenSplit,
    /// Split the aligned originals; augmented copies inherit their
    /// original's split, so no field is shared between splits.
    SplitThenAugment,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrepareConfig {
    pub align: AlignConfig,
    pub augment: AugmentConfig,
    pub fractions: SplitFractions,
    pub seed: u64,
    pub order: SplitOrder,
}

/// One line of the alignment report.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignmentRow {
    pub id: String,
    pub z: Option<(usize, usize)>,
    pub outcome: std::result::Result<super::Alignment, String>,
}

#[derive(Clone, Debug)]
pub struct PrepareReport {
    pub manifest: DatasetManifest,
    pub rows: Vec<AlignmentRow>,
}

impl PrepareReport {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.outcome.is_err()).count()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("id,status,z_lq,z_hq,angle_deg,shift_y,shift_x,correlation,message\n");
        for r in &self.rows {
            let (za, zb) = r.z.map_or((String::new(), String::new()), |(a, b)| (a.to_string(), b.to_string()));
            match &r.outcome {
                Ok(a) => writeln!(
                    s,
                    "{},aligned,{za},{zb},{},{},{},{:.6},",
                    r.id, a.angle_deg, a.shift.0, a.shift.1, a.correlation
                ),
                Err(m) => writeln!(s, "{},rejected,{za},{zb},,,,,\"{}\"", r.id, m.replace('"', "'")),
            }
            .expect("writing to a String");
        }
        s
    }
}

/// Image files of a directory grouped by pair id. A stem ending in
/// `_z<digits>` joins the z-stack of the id before the suffix, ordered by
/// slice number.
fn scan(dir: &Path) -> Result<BTreeMap<String, Vec<PathBuf>>> {
    let mut groups: BTreeMap<String, Vec<(usize, PathBuf)>> = BTreeMap::new();
    let read = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in read {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext_ok = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| ["png", "tif", "tiff"].iter().any(|x| e.eq_ignore_ascii_case(x)));
        if !path.is_file() || !ext_ok {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        let (id, z) = match stem.rsplit_once("_z") {
            Some((base, n)) if !base.is_empty() && !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()) => {
                (base.to_string(), n.parse().unwrap_or(0))
            }
            _ => (stem.to_string(), 0),
        };
        groups.entry(id).or_default().push((z, path));
    }
    Ok(groups
        .into_iter()
        .map(|(id, mut v)| {
            v.sort();
            (id, v.into_iter().map(|(_, p)| p).collect())
        })
        .collect())
}

fn load_stack(paths: &[PathBuf]) -> Result<Vec<crate::nn::Tensor>> {
    paths.iter().map(|p| load_image(p).and_then(to_rgb)).collect()
}

fn prepare_one(id: &str, lq: &[PathBuf], hq: &[PathBuf], cfg: &AlignConfig) -> (AlignmentRow, Option<PairedSample>) {
    let attempt = || -> Result<(Option<(usize, usize)>, PairedSample, super::Alignment)> {
        let lq_stack = load_stack(lq)?;
        let hq_stack = load_stack(hq)?;
        let (z, ia, ib) = if lq_stack.len() > 1 || hq_stack.len() > 1 {
            // compare on common central crops so differing fields are comparable
            let side_h = lq_stack[0].shape().h.min(hq_stack[0].shape().h);
            let side_w = lq_stack[0].shape().w.min(hq_stack[0].shape().w);
            let crop = |t: &crate::nn::Tensor| {
                let s = t.shape();
                super::transform::apply(
                    t,
                    &super::Transform::Crop {
                        top: (s.h - side_h) / 2,
                        left: (s.w - side_w) / 2,
                        height: side_h,
                        width: side_w,
                    },
                )
            };
            let a: Vec<_> = lq_stack.iter().map(crop).collect::<Result<_>>()?;
            let b: Vec<_> = hq_stack.iter().map(crop).collect::<Result<_>>()?;
            let (ia, ib) = select_best_z(&a, &b)?;
            (Some((ia, ib)), ia, ib)
        } else {
            (None, 0, 0)
        };
        let (sample, info) = align_pair_detailed(id, &lq_stack[ia], &hq_stack[ib], cfg)?;
        Ok((z, sample, info))
    };
    match attempt() {
        Ok((z, sample, info)) => (
            AlignmentRow {
                id: id.to_string(),
                z,
                outcome: Ok(info),
            },
            Some(sample),
        ),
        Err(e) => (
            AlignmentRow {
                id: id.to_string(),
                z: None,
                outcome: Err(e.to_string()),
            },
            None,
        ),
    }
}

/// Builds a dataset under `out_dir`: `lq/` and `hq/` 16-bit TIFF patches,
/// `manifest.json` and `alignment_report.csv`. Files in the two input
/// directories are paired by stem. Pairs that fail to load or align are
/// reported and left out.
pub fn prepare_dataset(
    lq_dir: impl AsRef<Path>,
    hq_dir: impl AsRef<Path>,
    out_dir: impl AsRef<Path>,
    cfg: &PrepareConfig,
) -> Result<PrepareReport> {
    let (lq_dir, hq_dir, out_dir) = (lq_dir.as_ref(), hq_dir.as_ref(), out_dir.as_ref());
    cfg.fractions.validate()?;
    let lq_groups = scan(lq_dir)?;
    let hq_groups = scan(hq_dir)?;
    let mut rows = Vec::new();
    let mut aligned = Vec::new();
    for (id, lq_paths) in &lq_groups {
        let Some(hq_paths) = hq_groups.get(id) else {
            continue;
        };
        let (row, sample) = prepare_one(id, lq_paths, hq_paths, &cfg.align);
        rows.push(row);
        aligned.extend(sample);
    }
    if rows.is_empty() {
        return Err(Error::Empty(format!(
            "no matching file names between {} and {}",
            lq_dir.display(),
            hq_dir.display()
        )));
    }
    if aligned.is_empty() {
        return Err(Error::Empty("every pair failed alignment".into()));
    }

    let (samples, manifest) = match cfg.order {
        SplitOrder::AugmentThenSplit => {
            let all = augment_all(&aligned, cfg.seed, &cfg.augment)?;
            let ids: Vec<&str> = all.iter().map(|s| s.id.as_str()).collect();
            let m = split_dataset(&ids, cfg.fractions, cfg.seed)?;
            (all, m)
        }
        SplitOrder::SplitThenAugment => {
            let ids: Vec<&str> = aligned.iter().map(|s| s.id.as_str()).collect();
            let base = split_dataset(&ids, cfg.fractions, cfg.seed)?;
            let by_id: BTreeMap<&str, &PairedSample> = aligned.iter().map(|s| (s.id.as_str(), s)).collect();
            let mut all = Vec::new();
            let mut entries = Vec::new();
            // shuffled order of the originals, each followed by its copies
            for e in &base.entries {
                let original = by_id[e.id.as_str()];
                let family = std::iter::once(original.clone()).chain(augment_pair(original, cfg.seed, &cfg.augment)?);
                for s in family {
                    entries.push(ManifestEntry {
                        id: s.id.clone(),
                        lq_path: lq_path_for(&s.id),
                        hq_path: hq_path_for(&s.id),
                        split: e.split,
                    });
                    all.push(s);
                }
            }
            (all, DatasetManifest { entries, ..base })
        }
    };

    for sub in ["lq", "hq"] {
        let d = out_dir.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    for s in &samples {
        save_image_u16(out_dir.join(lq_path_for(&s.id)), &s.lq)?;
        save_image_u16(out_dir.join(hq_path_for(&s.id)), &s.hq)?;
    }
    manifest.save(out_dir.join("manifest.json"))?;
    let report = PrepareReport { manifest, rows };
    let rp = out_dir.join("alignment_report.csv");
    std::fs::write(&rp, report.to_csv()).map_err(|e| Error::io(&rp, e))?;
    Ok(report)
}
