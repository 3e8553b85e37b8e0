use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use crate::error::{Error, Result};
use crate::nn::{Shape, Tensor};

/// Loads an 8- or 16-bit grayscale or RGB PNG/TIFF as a `(1, c, h, w)`
/// tensor scaled by the dtype maximum into `[0, 1]`.
pub fn load_image(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|source| match source {
        image::ImageError::IoError(e) => Error::io(path, e),
        source => Error::Image {
            path: path.to_path_buf(),
            source,
        },
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, data): (usize, Vec<f32>) = match img {
        DynamicImage::ImageLuma8(b) => (1, planar(b.as_raw(), 1, h, w, 255.0)),
        DynamicImage::ImageLuma16(b) => (1, planar(b.as_raw(), 1, h, w, 65535.0)),
        DynamicImage::ImageRgb8(b) => (3, planar(b.as_raw(), 3, h, w, 255.0)),
        DynamicImage::ImageRgb16(b) => (3, planar(b.as_raw(), 3, h, w, 65535.0)),
        other => {
            return Err(Error::UnsupportedImage {
                path: path.to_path_buf(),
                reason: format!("pixel type {:?} is not 8/16-bit gray or RGB", other.color()),
            })
        }
    };
    Tensor::from_vec(Shape::new(1, channels, h, w), data)
}

/// Interleaved samples to channel-planar floats.
fn planar<P: Copy + Into<f64>>(raw: &[P], c: usize, h: usize, w: usize, max: f64) -> Vec<f32> {
    let mut out = vec![0f32; c * h * w];
    for (i, &v) in raw.iter().enumerate() {
        let (pix, ch) = (i / c, i % c);
        out[ch * h * w + pix] = (v.into() / max) as f32;
    }
    out
}

/// `round(clamp(v, 0, 1) * 65535)`.
#[inline]
pub fn quantize_u16(v: f32) -> u16 {
    (v.clamp(0.0, 1.0) as f64 * 65535.0).round() as u16
}

/// Writes a single-item 1- or 3-channel tensor as a 16-bit image. The
/// container (PNG or TIFF) follows the file extension.
pub fn save_image_u16(path: impl AsRef<Path>, image: &Tensor) -> Result<()> {
    let path = path.as_ref();
    let s = image.shape();
    if s.n != 1 || !(s.c == 1 || s.c == 3) {
        return Err(Error::invalid(format!(
            "can only save a single 1- or 3-channel image, got {s:?}"
        )));
    }
    let (w, h) = (s.w as u32, s.h as u32);
    let plane = s.plane();
    let mut raw = vec![0u16; s.c * plane];
    for c in 0..s.c {
        for (p, &v) in image.plane(0, c).iter().enumerate() {
            raw[p * s.c + c] = quantize_u16(v);
        }
    }
    let result = if s.c == 1 {
        ImageBuffer::<Luma<u16>, _>::from_raw(w, h, raw)
            .expect("buffer size")
            .save(path)
    } else {
        ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, raw)
            .expect("buffer size")
            .save(path)
    };
    result.map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Replicates a single channel into three; 3-channel input is returned as is.
pub fn to_rgb(image: Tensor) -> Result<Tensor> {
    let s = image.shape();
    match s.c {
        3 => Ok(image),
        1 => Ok(Tensor::from_fn(Shape::new(s.n, 3, s.h, s.w), |n, _, y, x| {
            image.at(n, 0, y, x)
        })),
        c => Err(Error::invalid(format!("cannot convert {c} channels to RGB"))),
    }
}
