//! Forward and backward kernels for every differentiable operation the two
//! networks use. All functions are pure: they allocate their outputs and
//! never touch their inputs.

use super::tensor::{Element, Shape, Tensor};
use crate::error::{Error, Result};

/// Spatial zero padding of a convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// `(k - 1) / 2` on each side; preserves size at stride 1 for odd kernels.
    Same,
    Explicit(usize),
}

impl Padding {
    fn amount(self, kernel: usize) -> usize {
        match self {
            Padding::Same => (kernel - 1) / 2,
            Padding::Explicit(p) => p,
        }
    }
}

/// Geometry shared by the convolution forward and backward passes.
#[derive(Clone, Copy, Debug)]
struct ConvGeometry {
    input: Shape,
    kh: usize,
    kw: usize,
    c_out: usize,
    stride: usize,
    pad_y: usize,
    pad_x: usize,
    out_h: usize,
    out_w: usize,
}

impl ConvGeometry {
    fn new(input: Shape, weight: Shape, stride: usize, padding: Padding) -> Result<Self> {
        if stride == 0 {
            return Err(Error::invalid("conv2d stride must be positive"));
        }
        if input.c != weight.c {
            return Err(Error::ShapeMismatch {
                context: "conv2d input channels vs weight c_in",
                left: input.to_vec(),
                right: weight.to_vec(),
            });
        }
        let (kh, kw) = (weight.h, weight.w);
        let (pad_y, pad_x) = (padding.amount(kh), padding.amount(kw));
        if input.h + 2 * pad_y < kh || input.w + 2 * pad_x < kw || kh == 0 || kw == 0 {
            return Err(Error::ShapeMismatch {
                context: "conv2d kernel larger than padded input",
                left: input.to_vec(),
                right: weight.to_vec(),
            });
        }
        Ok(ConvGeometry {
            input,
            kh,
            kw,
            c_out: weight.n,
            stride,
            pad_y,
            pad_x,
            out_h: (input.h + 2 * pad_y - kh) / stride + 1,
            out_w: (input.w + 2 * pad_x - kw) / stride + 1,
        })
    }

    fn output(&self) -> Shape {
        Shape::new(self.input.n, self.c_out, self.out_h, self.out_w)
    }

    /// Output columns `ox` whose input column `ox*stride + kx - pad` is in range.
    #[inline]
    fn ox_range(&self, kx: usize) -> (usize, usize) {
        range_for(kx, self.pad_x, self.stride, self.input.w, self.out_w)
    }

    #[inline]
    fn oy_range(&self, ky: usize) -> (usize, usize) {
        range_for(ky, self.pad_y, self.stride, self.input.h, self.out_h)
    }
}

/// Half-open range of output positions `o` with `0 <= o*stride + k - pad < len`.
#[inline]
fn range_for(k: usize, pad: usize, stride: usize, len: usize, out: usize) -> (usize, usize) {
    // o*stride >= pad - k
    let lo = if pad > k {
        (pad - k).div_ceil(stride)
    } else {
        0
    };
    // o*stride + k - pad <= len - 1
    let hi = if len + pad > k {
        ((len + pad - k - 1) / stride + 1).min(out)
    } else {
        0
    };
    (lo, hi.max(lo))
}

fn bias_shape_ok<T: Element>(bias: &Tensor<T>, c_out: usize) -> Result<()> {
    if bias.len() != c_out {
        return Err(Error::ShapeMismatch {
            context: "bias length vs output channels",
            left: bias.shape().to_vec(),
            right: vec![c_out],
        });
    }
    Ok(())
}

/// 2-D cross-correlation (no kernel flip) plus per-channel bias.
///
/// `weight` has shape `(c_out, c_in, kh, kw)`; `bias` holds `c_out` values.
pub fn conv2d<T: Element>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: Padding,
) -> Result<Tensor<T>> {
    let g = ConvGeometry::new(input.shape(), weight.shape(), stride, padding)?;
    bias_shape_ok(bias, g.c_out)?;
    input.ensure_finite("conv2d input")?;

    let out_shape = g.output();
    let mut out = Tensor::zeros(out_shape);
    let (in_s, ws) = (g.input, weight.shape());
    let wdata = weight.data();
    let idata = input.data();
    let bdata = bias.data();
    let out_plane = out_shape.plane();
    let odata = out.data_mut();

    for n in 0..in_s.n {
        for co in 0..g.c_out {
            let obase = (n * g.c_out + co) * out_plane;
            let oplane = &mut odata[obase..obase + out_plane];
            oplane.iter_mut().for_each(|v| *v = bdata[co]);
            for ci in 0..in_s.c {
                let ibase = (n * in_s.c + ci) * in_s.plane();
                let iplane = &idata[ibase..ibase + in_s.plane()];
                for ky in 0..g.kh {
                    let (oy_lo, oy_hi) = g.oy_range(ky);
                    for kx in 0..g.kw {
                        let wv = wdata[((co * ws.c + ci) * g.kh + ky) * g.kw + kx];
                        if wv == T::zero() {
                            continue;
                        }
                        let (ox_lo, ox_hi) = g.ox_range(kx);
                        for oy in oy_lo..oy_hi {
                            let iy = oy * g.stride + ky - g.pad_y;
                            let irow = &iplane[iy * in_s.w..(iy + 1) * in_s.w];
                            let orow = &mut oplane[oy * g.out_w..(oy + 1) * g.out_w];
                            if g.stride == 1 {
                                let ix0 = ox_lo + kx - g.pad_x;
                                let src = &irow[ix0..ix0 + (ox_hi - ox_lo)];
                                for (o, &i) in orow[ox_lo..ox_hi].iter_mut().zip(src) {
                                    *o = *o + wv * i;
                                }
                            } else {
                                for ox in ox_lo..ox_hi {
                                    let ix = ox * g.stride + kx - g.pad_x;
                                    orow[ox] = orow[ox] + wv * irow[ix];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of [`conv2d`] with respect to its three inputs.
#[derive(Clone, Debug)]
pub struct ConvGrads<T: Element> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn conv2d_backward<T: Element>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    output_grad: &Tensor<T>,
    stride: usize,
    padding: Padding,
) -> Result<ConvGrads<T>> {
    let g = ConvGeometry::new(input.shape(), weight.shape(), stride, padding)?;
    output_grad.ensure_shape(g.output(), "conv2d_backward output_grad")?;
    let in_s = g.input;
    let ws = weight.shape();
    let out_plane = g.out_h * g.out_w;
    let idata = input.data();
    let wdata = weight.data();
    let gdata = output_grad.data();

    let mut gin = Tensor::<T>::zeros(in_s);
    let mut gw = Tensor::<T>::zeros(ws);
    let mut gb = Tensor::<T>::zeros(Shape::new(1, g.c_out, 1, 1));

    for co in 0..g.c_out {
        let mut acc = 0.0f64;
        for n in 0..in_s.n {
            let obase = (n * g.c_out + co) * out_plane;
            acc += gdata[obase..obase + out_plane]
                .iter()
                .map(|v| v.as_f64())
                .sum::<f64>();
        }
        gb.data_mut()[co] = T::from_f64(acc);
    }

    let gin_data = gin.data_mut();
    let gw_data = gw.data_mut();
    for n in 0..in_s.n {
        for co in 0..g.c_out {
            let obase = (n * g.c_out + co) * out_plane;
            let gplane = &gdata[obase..obase + out_plane];
            for ci in 0..in_s.c {
                let ibase = (n * in_s.c + ci) * in_s.plane();
                for ky in 0..g.kh {
                    let (oy_lo, oy_hi) = g.oy_range(ky);
                    for kx in 0..g.kw {
                        let widx = ((co * ws.c + ci) * g.kh + ky) * g.kw + kx;
                        let wv = wdata[widx];
                        let (ox_lo, ox_hi) = g.ox_range(kx);
                        let mut wacc = T::zero();
                        for oy in oy_lo..oy_hi {
                            let iy = oy * g.stride + ky - g.pad_y;
                            let grow = &gplane[oy * g.out_w..(oy + 1) * g.out_w];
                            let row_start = ibase + iy * in_s.w;
                            if g.stride == 1 {
                                let ix0 = ox_lo + kx - g.pad_x;
                                let len = ox_hi - ox_lo;
                                let irow = &idata[row_start + ix0..row_start + ix0 + len];
                                let grow = &grow[ox_lo..ox_hi];
                                for (&gv, &iv) in grow.iter().zip(irow) {
                                    wacc = wacc + gv * iv;
                                }
                                let girow = &mut gin_data[row_start + ix0..row_start + ix0 + len];
                                for (gi, &gv) in girow.iter_mut().zip(grow) {
                                    *gi = *gi + wv * gv;
                                }
                            } else {
                                for ox in ox_lo..ox_hi {
                                    let ix = ox * g.stride + kx - g.pad_x;
                                    let gv = grow[ox];
                                    wacc = wacc + gv * idata[row_start + ix];
                                    gin_data[row_start + ix] = gin_data[row_start + ix] + wv * gv;
                                }
                            }
                        }
                        gw_data[widx] = gw_data[widx] + wacc;
                    }
                }
            }
        }
    }

    Ok(ConvGrads {
        input: gin,
        weight: gw,
        bias: gb,
    })
}

/// Leaky ReLU: `max(0, x) - a * max(0, -x)`.
pub fn lrelu<T: Element>(x: &Tensor<T>, a: T) -> Result<Tensor<T>> {
    check_slope(a)?;
    x.ensure_finite("lrelu input")?;
    Ok(x.map(|v| if v > T::zero() { v } else { a * v }))
}

/// Backward of [`lrelu`]; the subgradient at exactly zero is `a`.
pub fn lrelu_backward<T: Element>(x: &Tensor<T>, a: T, output_grad: &Tensor<T>) -> Result<Tensor<T>> {
    check_slope(a)?;
    output_grad.ensure_shape(x.shape(), "lrelu_backward")?;
    let data = x
        .data()
        .iter()
        .zip(output_grad.data())
        .map(|(&v, &g)| if v > T::zero() { g } else { a * g })
        .collect();
    Tensor::from_vec(x.shape(), data)
}

fn check_slope<T: Element>(a: T) -> Result<()> {
    if !a.is_finite() || a < T::zero() || a >= T::one() {
        return Err(Error::invalid(format!("lrelu slope must be in [0, 1), got {a}")));
    }
    Ok(())
}

/// Non-overlapping `size x size` window means.
pub fn avg_pool<T: Element>(x: &Tensor<T>, size: usize) -> Result<Tensor<T>> {
    let s = x.shape();
    if size == 0 || s.h % size != 0 || s.w % size != 0 {
        return Err(Error::invalid(format!(
            "avg_pool size {size} does not divide spatial dims {}x{}",
            s.h, s.w
        )));
    }
    let out_s = Shape::new(s.n, s.c, s.h / size, s.w / size);
    let inv = 1.0 / (size * size) as f64;
    let mut out = Tensor::zeros(out_s);
    for n in 0..s.n {
        for c in 0..s.c {
            let src = x.plane(n, c);
            let dst = out.plane_mut(n, c);
            for oy in 0..out_s.h {
                for ox in 0..out_s.w {
                    let mut acc = 0.0f64;
                    for dy in 0..size {
                        let row = &src[(oy * size + dy) * s.w + ox * size..][..size];
                        acc += row.iter().map(|v| v.as_f64()).sum::<f64>();
                    }
                    dst[oy * out_s.w + ox] = T::from_f64(acc * inv);
                }
            }
        }
    }
    Ok(out)
}

/// Spreads each pooled gradient uniformly (`1/size²`) over its window.
pub fn avg_pool_backward<T: Element>(
    input_shape: Shape,
    size: usize,
    output_grad: &Tensor<T>,
) -> Result<Tensor<T>> {
    if size == 0 || input_shape.h % size != 0 || input_shape.w % size != 0 {
        return Err(Error::invalid("avg_pool_backward: indivisible input shape"));
    }
    let out_s = Shape::new(input_shape.n, input_shape.c, input_shape.h / size, input_shape.w / size);
    output_grad.ensure_shape(out_s, "avg_pool_backward output_grad")?;
    let scale = T::from_f64(1.0 / (size * size) as f64);
    Ok(Tensor::from_fn(input_shape, |n, c, y, x| {
        output_grad.at(n, c, y / size, x / size) * scale
    }))
}

/// Nearest-neighbour upsampling by an integer factor.
pub fn upsample_nn<T: Element>(x: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    if factor == 0 {
        return Err(Error::invalid("upsample factor must be >= 1"));
    }
    let s = x.shape();
    let out_s = Shape::new(s.n, s.c, s.h * factor, s.w * factor);
    Ok(Tensor::from_fn(out_s, |n, c, y, xx| {
        x.at(n, c, y / factor, xx / factor)
    }))
}

/// Sums gradients over each replicated block.
pub fn upsample_nn_backward<T: Element>(output_grad: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    let s = output_grad.shape();
    if factor == 0 || s.h % factor != 0 || s.w % factor != 0 {
        return Err(Error::invalid("upsample_nn_backward: indivisible gradient shape"));
    }
    let out_s = Shape::new(s.n, s.c, s.h / factor, s.w / factor);
    let mut out = Tensor::zeros(out_s);
    for n in 0..s.n {
        for c in 0..s.c {
            let src = output_grad.plane(n, c);
            let dst = out.plane_mut(n, c);
            for y in 0..s.h {
                for x in 0..s.w {
                    let d = &mut dst[(y / factor) * out_s.w + x / factor];
                    *d = *d + src[y * s.w + x];
                }
            }
        }
    }
    Ok(out)
}

/// Concatenates along the channel axis, `a`'s channels first.
pub fn concat_channels<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (sa, sb) = (a.shape(), b.shape());
    if (sa.n, sa.h, sa.w) != (sb.n, sb.h, sb.w) {
        return Err(Error::ShapeMismatch {
            context: "concat_channels",
            left: sa.to_vec(),
            right: sb.to_vec(),
        });
    }
    let out_s = Shape::new(sa.n, sa.c + sb.c, sa.h, sa.w);
    let mut data = Vec::with_capacity(out_s.len());
    let (ia, ib) = (sa.c * sa.plane(), sb.c * sb.plane());
    for n in 0..sa.n {
        data.extend_from_slice(&a.data()[n * ia..(n + 1) * ia]);
        data.extend_from_slice(&b.data()[n * ib..(n + 1) * ib]);
    }
    Tensor::from_vec(out_s, data)
}

/// Backward of [`concat_channels`]: splits the gradient at channel `c_a`.
pub fn split_channels<T: Element>(grad: &Tensor<T>, c_a: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let s = grad.shape();
    if c_a > s.c {
        return Err(Error::invalid(format!("split at {c_a} beyond {} channels", s.c)));
    }
    let sa = Shape::new(s.n, c_a, s.h, s.w);
    let sb = Shape::new(s.n, s.c - c_a, s.h, s.w);
    let (ia, ib) = (sa.c * s.plane(), sb.c * s.plane());
    let mut da = Vec::with_capacity(sa.len());
    let mut db = Vec::with_capacity(sb.len());
    for n in 0..s.n {
        let base = n * (ia + ib);
        da.extend_from_slice(&grad.data()[base..base + ia]);
        db.extend_from_slice(&grad.data()[base + ia..base + ia + ib]);
    }
    Ok((Tensor::from_vec(sa, da)?, Tensor::from_vec(sb, db)?))
}

/// Affine map `W·x + b` applied to each flattened batch element.
///
/// `weight` has shape `(out, in, 1, 1)`; the output is `(n, out, 1, 1)`.
pub fn dense<T: Element>(x: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let s = x.shape();
    let ws = weight.shape();
    let fan_in = s.c * s.plane();
    if ws.c * ws.h * ws.w != fan_in {
        return Err(Error::ShapeMismatch {
            context: "dense input length vs weight",
            left: s.to_vec(),
            right: ws.to_vec(),
        });
    }
    bias_shape_ok(bias, ws.n)?;
    x.ensure_finite("dense input")?;
    let mut out = Tensor::zeros(Shape::new(s.n, ws.n, 1, 1));
    for n in 0..s.n {
        let xi = &x.data()[n * fan_in..(n + 1) * fan_in];
        for o in 0..ws.n {
            let row = &weight.data()[o * fan_in..(o + 1) * fan_in];
            let acc: f64 = row
                .iter()
                .zip(xi)
                .map(|(&w, &v)| w.as_f64() * v.as_f64())
                .sum();
            out.data_mut()[n * ws.n + o] = T::from_f64(acc + bias.data()[o].as_f64());
        }
    }
    Ok(out)
}

pub fn dense_backward<T: Element>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    output_grad: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let s = x.shape();
    let ws = weight.shape();
    let fan_in = s.c * s.plane();
    if ws.c * ws.h * ws.w != fan_in {
        return Err(Error::ShapeMismatch {
            context: "dense_backward input length vs weight",
            left: s.to_vec(),
            right: ws.to_vec(),
        });
    }
    output_grad.ensure_shape(Shape::new(s.n, ws.n, 1, 1), "dense_backward output_grad")?;
    let g = output_grad.data();

    let mut gx = Tensor::zeros(s);
    for n in 0..s.n {
        for i in 0..fan_in {
            let acc: f64 = (0..ws.n)
                .map(|o| weight.data()[o * fan_in + i].as_f64() * g[n * ws.n + o].as_f64())
                .sum();
            gx.data_mut()[n * fan_in + i] = T::from_f64(acc);
        }
    }
    let mut gw = Tensor::zeros(ws);
    for o in 0..ws.n {
        for i in 0..fan_in {
            let acc: f64 = (0..s.n)
                .map(|n| g[n * ws.n + o].as_f64() * x.data()[n * fan_in + i].as_f64())
                .sum();
            gw.data_mut()[o * fan_in + i] = T::from_f64(acc);
        }
    }
    let mut gb = Tensor::zeros(Shape::new(1, ws.n, 1, 1));
    for o in 0..ws.n {
        gb.data_mut()[o] = T::from_f64((0..s.n).map(|n| g[n * ws.n + o].as_f64()).sum());
    }
    Ok(ConvGrads {
        input: gx,
        weight: gw,
        bias: gb,
    })
}

/// Logistic function of a scalar, with the exponent clamped so that it never
/// overflows.
#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    let x = x.clamp(-700.0, 700.0);
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| T::from_f64(sigmoid_scalar(v.as_f64())))
}

pub fn sigmoid_backward<T: Element>(x: &Tensor<T>, output_grad: &Tensor<T>) -> Result<Tensor<T>> {
    output_grad.ensure_shape(x.shape(), "sigmoid_backward")?;
    let data = x
        .data()
        .iter()
        .zip(output_grad.data())
        .map(|(&v, &g)| {
            let s = sigmoid_scalar(v.as_f64());
            T::from_f64(s * (1.0 - s) * g.as_f64())
        })
        .collect();
    Tensor::from_vec(x.shape(), data)
}
