mod common;

use std::path::Path;

use common::{listing, stderr, texture, xscope};
use ndarray::Array2;
use xscope_core::dataset::{load_image, save_image_u16};
use xscope_core::gan::{Generator, GeneratorConfig};
use xscope_core::metrics::psnr;
use xscope_core::nn::{Shape, Tensor};
use xscope_core::psf::{channel_psfs, fft_convolve, PsfParams};
use xscope_core::training::{save_generator, CheckpointMeta};

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn checkpoint(dir: &Path) -> std::path::PathBuf {
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(4);
    let g = Generator::new(GeneratorConfig::reduced(), &mut rng).unwrap();
    let path = dir.join("g.ckpt");
    save_generator(&g, &CheckpointMeta::default(), &path).unwrap();
    path
}

#[test]
fn enhance_writes_one_16_bit_file_per_input_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = checkpoint(dir.path());
    let inputs: Vec<String> = [("a.tif", 32, 32), ("b.png", 16, 48), ("c.tif", 64, 32)]
        .iter()
        .enumerate()
        .map(|(i, &(name, h, w))| {
            let p = dir.path().join(name);
            save_image_u16(&p, &texture(Shape::new(1, 3, h, w), i as u64)).unwrap();
            p.to_str().unwrap().to_string()
        })
        .collect();
    let run = |out: &Path| {
        let mut args = vec!["enhance".to_string(), "--checkpoint".into(), s(&ckpt).into(), "--out".into(), s(out).into()];
        args.extend(inputs.iter().cloned());
        let o = xscope(&args);
        assert!(o.status.success(), "{}", stderr(&o));
    };
    let (first, second) = (dir.path().join("e1"), dir.path().join("e2"));
    run(&first);
    run(&second);
    assert_eq!(listing(&first), ["a_generated.tif", "b_generated.png", "c_generated.tif"]);
    for name in listing(&first) {
        let bytes = std::fs::read(first.join(&name)).unwrap();
        assert_eq!(bytes, std::fs::read(second.join(&name)).unwrap(), "{name}");
        let img = image::open(first.join(&name)).unwrap();
        assert!(matches!(img.color(), image::ColorType::Rgb16), "{name}: {:?}", img.color());
    }
    assert_eq!(load_image(first.join("c_generated.tif")).unwrap().shape(), Shape::new(1, 3, 64, 32));
    assert_eq!(load_image(first.join("b_generated.png")).unwrap().shape(), Shape::new(1, 3, 16, 48));
}

#[test]
fn enhance_rejects_indivisible_sizes_with_crop_hint() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = checkpoint(dir.path());
    let bad = dir.path().join("odd.tif");
    save_image_u16(&bad, &texture(Shape::new(1, 3, 30, 33), 1)).unwrap();
    let good = dir.path().join("even.tif");
    save_image_u16(&good, &texture(Shape::new(1, 3, 16, 16), 2)).unwrap();
    let out = dir.path().join("out");
    let o = xscope(["enhance", "--checkpoint", s(&ckpt), "--out", s(&out), s(&bad), s(&good)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("center-crop to 28x32"), "{}", stderr(&o));
    assert_eq!(listing(&out), ["even_generated.tif"]);
}

#[test]
fn delta_psf_deconvolution_returns_the_input() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("x.tif");
    let img = texture(Shape::new(1, 3, 24, 24), 5);
    save_image_u16(&input, &img).unwrap();
    let stored = load_image(&input).unwrap();
    let out = dir.path().join("d");
    let o = xscope(["deconvolve", "--delta-psf", "--out", s(&out), s(&input)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let back = load_image(out.join("x_deconvolved.tif")).unwrap();
    let worst = back.data().iter().zip(stored.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
    assert!(worst as f64 <= 1.0 / 65535.0 + 1e-6, "{worst}");
}

#[test]
fn deconvolution_of_a_blurred_image_gains_a_decibel() {
    let dir = tempfile::tempdir().unwrap();
    let side = 64;
    let truth = texture(Shape::new(1, 3, side, side), 9);
    let params = PsfParams {
        kernel_size: 31,
        ..PsfParams::default()
    };
    let mut blurred = Tensor::zeros(truth.shape());
    let psfs = channel_psfs(&params, &[565.0, 520.0, 461.0]).unwrap();
    for (c, psf) in psfs.iter().enumerate() {
        let plane = Array2::from_shape_vec((side, side), truth.plane(0, c).iter().map(|&v| v as f64).collect()).unwrap();
        for (dst, v) in blurred.plane_mut(0, c).iter_mut().zip(fft_convolve(&plane, psf).iter()) {
            *dst = *v as f32;
        }
    }
    let input = dir.path().join("blurred.tif");
    save_image_u16(&input, &blurred).unwrap();
    let out = dir.path().join("d");
    let o = xscope(["deconvolve", "--kernel-size", "31", "--out", s(&out), s(&input)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let restored = load_image(out.join("blurred_deconvolved.tif")).unwrap();
    let before = psnr(&truth, &load_image(&input).unwrap(), 1.0).unwrap();
    let after = psnr(&truth, &restored, 1.0).unwrap();
    assert!(after - before >= 1.0, "{before:.2} dB -> {after:.2} dB");
}
