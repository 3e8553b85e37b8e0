#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xscope_core::dataset::save_image_u16;
use xscope_core::nn::{Shape, Tensor};

pub fn xscope<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_xscope")).args(args).output().unwrap()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Gaussian spots, each channel normalised to a peak of 1.
pub fn texture(shape: Shape, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tensor::zeros(shape);
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
        let plane: Vec<f64> = (0..shape.plane())
            .map(|i| {
                let (y, x) = ((i / shape.w) as f64, (i % shape.w) as f64);
                spots
                    .iter()
                    .map(|&(sy, sx, s, a)| a * (-((y - sy).powi(2) + (x - sx).powi(2)) / (2.0 * s * s)).exp())
                    .sum()
            })
            .collect();
        let max = plane.iter().cloned().fold(1e-12, f64::max);
        for (o, v) in t.plane_mut(0, c).iter_mut().zip(plane) {
            *o = (v / max) as f32;
        }
    }
    t
}

/// 5x5 box blur, dimmed, with a lifted background and mild noise.
pub fn degrade(hq: &Tensor, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = hq.shape();
    Tensor::from_fn(s, |n, c, y, x| {
        let mut acc = 0.0;
        for dy in -2i64..=2 {
            for dx in -2i64..=2 {
                let yy = (y as i64 + dy).clamp(0, s.h as i64 - 1) as usize;
                let xx = (x as i64 + dx).clamp(0, s.w as i64 - 1) as usize;
                acc += hq.at(n, c, yy, xx);
            }
        }
        (0.6 * acc / 25.0 + 0.1 + rng.gen_range(-0.04..0.04)).clamp(0.0, 1.0)
    })
}

pub fn crop(t: &Tensor, top: usize, left: usize, side: usize) -> Tensor {
    Tensor::from_fn(Shape::new(1, t.shape().c, side, side), |n, c, y, x| t.at(n, c, top + y, left + x))
}

/// `lq/` and `hq/` under `root`: two matching fields with the HQ frame
/// inset by 8 pixels, and one pair whose LQ image is noise.
pub fn write_raw_pairs(root: &Path, side: usize) {
    std::fs::create_dir_all(root.join("lq")).unwrap();
    std::fs::create_dir_all(root.join("hq")).unwrap();
    let shape = Shape::new(1, 3, side, side);
    for (i, id) in ["cell_a", "cell_b"].iter().enumerate() {
        let field = texture(shape, 40 + i as u64);
        save_image_u16(root.join(format!("hq/{id}.tif")), &crop(&field, 8, 8, side - 16)).unwrap();
        save_image_u16(root.join(format!("lq/{id}.png")), &degrade(&field, 90 + i as u64)).unwrap();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let noise = Tensor::from_fn(shape, |_, _, _, _| rng.gen_range(0.0..1.0));
    save_image_u16(root.join("lq/cell_x.tif"), &noise).unwrap();
    save_image_u16(root.join("hq/cell_x.tif"), &crop(&texture(shape, 7), 8, 8, side - 16)).unwrap();
}

/// Sorted file names directly inside `dir`.
pub fn listing(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}
