use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::transform::{apply, Target, Transform, TransformRecord};
use super::PairedSample;
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    /// Extra pairs emitted per original.
    pub extra_per_sample: usize,
    /// Bound on each translation component, in pixels.
    pub max_translation: i64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            extra_per_sample: 3,
            max_translation: 16,
        }
    }
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn draw(rng: &mut ChaCha8Rng, max_translation: i64) -> Vec<Transform> {
    let mut ops = Vec::new();
    if rng.gen_bool(0.5) {
        ops.push(Transform::FlipHorizontal);
    }
    if rng.gen_bool(0.5) {
        ops.push(Transform::FlipVertical);
    }
    let k = rng.gen_range(0..4u8);
    if k != 0 {
        ops.push(Transform::Rot90 { k });
    }
    if max_translation > 0 && rng.gen_bool(0.5) {
        let dy = rng.gen_range(-max_translation..=max_translation);
        let dx = rng.gen_range(-max_translation..=max_translation);
        if dy != 0 || dx != 0 {
            ops.push(Transform::Translate { dy, dx });
        }
    }
    ops
}

/// Emits `cfg.extra_per_sample` new pairs derived from `sample`, each with
/// one random combination of flips, quarter turns and a bounded translation
/// applied identically to both images. The original is not included.
///
/// The stream depends only on `seed` and `sample.id`, so the result does not
/// change with the order samples are processed in. Each emitted log is the
/// sample's log followed by the new records.
pub fn augment_pair(sample: &PairedSample, seed: u64, cfg: &AugmentConfig) -> Result<Vec<PairedSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(&sample.id));
    let mut out = Vec::with_capacity(cfg.extra_per_sample);
    for i in 0..cfg.extra_per_sample {
        let mut ops = draw(&mut rng, cfg.max_translation);
        while ops.is_empty() {
            ops = draw(&mut rng, cfg.max_translation);
        }
        let (mut lq, mut hq) = (sample.lq.clone(), sample.hq.clone());
        let mut log = sample.transform_log.clone();
        for t in ops {
            lq = apply(&lq, &t)?;
            hq = apply(&hq, &t)?;
            log.push(TransformRecord {
                target: Target::Both,
                transform: t,
            });
        }
        out.push(PairedSample {
            lq,
            hq,
            id: format!("{}_aug{}", sample.id, i + 1),
            transform_log: log,
        });
    }
    Ok(out)
}

/// Originals followed by their augmentations, sample by sample.
pub fn augment_all(samples: &[PairedSample], seed: u64, cfg: &AugmentConfig) -> Result<Vec<PairedSample>> {
    let mut out = Vec::with_capacity(samples.len() * (1 + cfg.extra_per_sample));
    for s in samples {
        out.push(s.clone());
        out.extend(augment_pair(s, seed, cfg)?);
    }
    Ok(out)
}
