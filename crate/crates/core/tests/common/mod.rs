#![allow(dead_code)]

pub mod grad;
pub mod oracles;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xscope_core::dataset::PairedSample;
use xscope_core::nn::{Shape, Tensor};

/// Smooth random pattern in `[0, 1]`: a sum of Gaussian spots per channel.
pub fn texture(shape: Shape, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tensor::zeros(shape);
    for n in 0..shape.n {
        for c in 0..shape.c {
            let spots: Vec<(f64, f64, f64, f64)> = (0..(shape.h * shape.w / 48).max(6))
                .map(|_| {
                    (
                        rng.gen_range(0.0..shape.h as f64),
                        rng.gen_range(0.0..shape.w as f64),
                        rng.gen_range(1.0..3.5),
                        rng.gen_range(0.3..1.0),
                    )
                })
                .collect();
            let mut plane = vec![0.0f64; shape.plane()];
            for (i, v) in plane.iter_mut().enumerate() {
                let (y, x) = ((i / shape.w) as f64, (i % shape.w) as f64);
                *v = spots
                    .iter()
                    .map(|&(sy, sx, s, a)| a * (-((y - sy).powi(2) + (x - sx).powi(2)) / (2.0 * s * s)).exp())
                    .sum();
            }
            let max = plane.iter().cloned().fold(1e-12, f64::max);
            for (o, v) in t.plane_mut(n, c).iter_mut().zip(plane) {
                *o = (v / max) as f32;
            }
        }
    }
    t
}

/// Separable box blur of radius `r` with edge clamping.
pub fn box_blur(t: &Tensor, r: usize) -> Tensor {
    let s = t.shape();
    let ri = r as i64;
    let tmp = Tensor::from_fn(s, |n, c, y, x| {
        let mut acc = 0.0;
        for d in -ri..=ri {
            let xx = (x as i64 + d).clamp(0, s.w as i64 - 1) as usize;
            acc += t.at(n, c, y, xx);
        }
        acc / (2 * r + 1) as f32
    });
    Tensor::from_fn(s, |n, c, y, x| {
        let mut acc = 0.0;
        for d in -ri..=ri {
            let yy = (y as i64 + d).clamp(0, s.h as i64 - 1) as usize;
            acc += tmp.at(n, c, yy, x);
        }
        acc / (2 * r + 1) as f32
    })
}

/// Degraded copy: blurred, dimmed, lifted background and mild noise.
pub fn degrade(hq: &Tensor, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = box_blur(hq, 2);
    for v in b.data_mut() {
        *v = (0.6 * *v + 0.1 + rng.gen_range(-0.04..0.04)).clamp(0.0, 1.0);
    }
    b
}

pub fn synthetic_pair(side: usize, seed: u64) -> PairedSample {
    let hq = texture(Shape::new(1, 3, side, side), seed);
    let lq = degrade(&hq, seed ^ 0x5555);
    PairedSample {
        lq,
        hq,
        id: format!("pair{seed}"),
        transform_log: Vec::new(),
    }
}

/// Writes the samples as a prepared dataset under `root` and returns its
/// manifest (also saved as `root/manifest.json`).
pub fn write_dataset(
    root: &std::path::Path,
    samples: &[PairedSample],
    fractions: xscope_core::dataset::SplitFractions,
    seed: u64,
) -> xscope_core::dataset::DatasetManifest {
    use xscope_core::dataset::{save_image_u16, split_dataset};
    let ids: Vec<&str> = samples.iter().map(|s| s.id.as_str()).collect();
    let manifest = split_dataset(&ids, fractions, seed).unwrap();
    std::fs::create_dir_all(root.join("lq")).unwrap();
    std::fs::create_dir_all(root.join("hq")).unwrap();
    for s in samples {
        let entry = manifest.entries.iter().find(|e| e.id == s.id).unwrap();
        save_image_u16(root.join(&entry.lq_path), &s.lq).unwrap();
        save_image_u16(root.join(&entry.hq_path), &s.hq).unwrap();
    }
    manifest.save(root.join("manifest.json")).unwrap();
    manifest
}

pub fn crop(t: &Tensor, top: usize, left: usize, side: usize) -> Tensor {
    let s = t.shape();
    Tensor::from_fn(Shape::new(1, s.c, side, side), |n, c, y, x| t.at(n, c, top + y, left + x))
}

/// Raw acquisition directories `lq/` and `hq/` under `root`: two matching
/// fields (`cell_a`, `cell_b`) with the HQ frame inset by 8 pixels, one
/// pair whose LQ image is noise (`cell_x`) and an LQ file without partner.
pub fn write_raw_pairs(root: &std::path::Path, side: usize) {
    use xscope_core::dataset::save_image_u16;
    std::fs::create_dir_all(root.join("lq")).unwrap();
    std::fs::create_dir_all(root.join("hq")).unwrap();
    let field_shape = Shape::new(1, 3, side, side);
    for (i, id) in ["cell_a", "cell_b"].iter().enumerate() {
        let field = texture(field_shape, 40 + i as u64);
        let hq = crop(&field, 8, 8, side - 16);
        let lq = degrade(&field, 90 + i as u64);
        save_image_u16(root.join(format!("hq/{id}.tif")), &hq).unwrap();
        save_image_u16(root.join(format!("lq/{id}.png")), &lq).unwrap();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let noise = Tensor::from_fn(field_shape, |_, _, _, _| rng.gen_range(0.0..1.0));
    save_image_u16(root.join("lq/cell_x.tif"), &noise).unwrap();
    let other = crop(&texture(field_shape, 7), 8, 8, side - 16);
    save_image_u16(root.join("hq/cell_x.tif"), &other).unwrap();
    save_image_u16(root.join("lq/orphan.tif"), &noise).unwrap();
}
