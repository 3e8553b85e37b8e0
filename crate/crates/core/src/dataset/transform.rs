use serde::{Deserialize, Serialize};

use super::align::rotate_plane;
use crate::error::{Error, Result};
use crate::nn::{Shape, Tensor};

/// A geometric operation applied to every channel of an image.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    /// `out[y][x] = in[y][w - 1 - x]`
    FlipHorizontal,
    /// `out[y][x] = in[h - 1 - y][x]`
    FlipVertical,
    /// `k` quarter turns counter-clockwise.
    Rot90 { k: u8 },
    /// `out[y][x] = in[y - dy][x - dx]`, zero where the source is outside.
    Translate { dy: i64, dx: i64 },
    /// Bilinear rotation about the centre, zero fill.
    Rotate { degrees: f64 },
    Crop {
        top: usize,
        left: usize,
        height: usize,
        width: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Lq,
    Hq,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformRecord {
    pub target: Target,
    pub transform: Transform,
}

impl Transform {
    pub fn is_identity(&self, shape: Shape) -> bool {
        match *self {
            Transform::FlipHorizontal => shape.w <= 1,
            Transform::FlipVertical => shape.h <= 1,
            Transform::Rot90 { k } => k % 4 == 0,
            Transform::Translate { dy, dx } => dy == 0 && dx == 0,
            Transform::Rotate { degrees } => degrees == 0.0,
            Transform::Crop {
                top,
                left,
                height,
                width,
            } => top == 0 && left == 0 && height == shape.h && width == shape.w,
        }
    }
}

/// Applies `t` to every plane of `image`.
pub fn apply(image: &Tensor, t: &Transform) -> Result<Tensor> {
    let s = image.shape();
    let out = match *t {
        Transform::FlipHorizontal => Tensor::from_fn(s, |n, c, y, x| image.at(n, c, y, s.w - 1 - x)),
        Transform::FlipVertical => Tensor::from_fn(s, |n, c, y, x| image.at(n, c, s.h - 1 - y, x)),
        Transform::Rot90 { k } => {
            let mut cur = image.clone();
            for _ in 0..k % 4 {
                let cs = cur.shape();
                let turned = Shape::new(cs.n, cs.c, cs.w, cs.h);
                cur = Tensor::from_fn(turned, |n, c, y, x| cur.at(n, c, x, cs.w - 1 - y));
            }
            cur
        }
        Transform::Translate { dy, dx } => Tensor::from_fn(s, |n, c, y, x| {
            let sy = y as i64 - dy;
            let sx = x as i64 - dx;
            if sy < 0 || sx < 0 || sy >= s.h as i64 || sx >= s.w as i64 {
                0.0
            } else {
                image.at(n, c, sy as usize, sx as usize)
            }
        }),
        Transform::Rotate { degrees } => {
            if degrees == 0.0 {
                return Ok(image.clone());
            }
            let mut out = Tensor::zeros(s);
            for n in 0..s.n {
                for c in 0..s.c {
                    let plane = ndarray::Array2::from_shape_fn((s.h, s.w), |(y, x)| image.at(n, c, y, x) as f64);
                    let r = rotate_plane(&plane, degrees);
                    for (o, v) in out.plane_mut(n, c).iter_mut().zip(r.iter()) {
                        *o = *v as f32;
                    }
                }
            }
            out
        }
        Transform::Crop {
            top,
            left,
            height,
            width,
        } => {
            if top + height > s.h || left + width > s.w || height == 0 || width == 0 {
                return Err(Error::invalid(format!(
                    "crop {height}x{width} at ({top}, {left}) outside image {s:?}"
                )));
            }
            Tensor::from_fn(Shape::new(s.n, s.c, height, width), |n, c, y, x| {
                image.at(n, c, top + y, left + x)
            })
        }
    };
    Ok(out)
}

/// Replays the records that touch `side` (`Lq` or `Hq`) in order.
pub fn replay(image: &Tensor, records: &[TransformRecord], side: Target) -> Result<Tensor> {
    let mut out = image.clone();
    for r in records {
        if r.target == side || r.target == Target::Both {
            out = apply(&out, &r.transform)?;
        }
    }
    Ok(out)
}
