//! Full-reference image comparison metrics: MSE, NRMSE, PSNR and SSIM.
//!
//! Images are [`Tensor`]s with values nominally in `[0, 1]`. All arithmetic
//! is carried out in `f64`. SSIM is evaluated per channel (and per batch
//! item) and averaged with equal weight; MSE, NRMSE and PSNR use all
//! elements at once.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Element, Tensor};

/// SSIM stabilising constants relative to the data range.
pub const K1: f64 = 0.01;
pub const K2: f64 = 0.03;

fn same_shape<T: Element>(a: &Tensor<T>, b: &Tensor<T>, context: &'static str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            context,
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    if a.is_empty() {
        return Err(Error::Empty("image".into()));
    }
    Ok(())
}

pub fn mse<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    same_shape(a, b, "mse")?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x.as_f64() - y.as_f64();
            d * d
        })
        .sum();
    Ok(sum / a.len() as f64)
}

/// Root-mean-squared error normalised by the RMS of `reference`.
pub fn nrmse<T: Element>(reference: &Tensor<T>, test: &Tensor<T>) -> Result<f64> {
    same_shape(reference, test, "nrmse")?;
    let ref_ms = reference
        .data()
        .iter()
        .map(|v| v.as_f64() * v.as_f64())
        .sum::<f64>()
        / reference.len() as f64;
    if ref_ms == 0.0 {
        return Err(Error::Degenerate("nrmse reference image is identically zero".into()));
    }
    Ok(mse(reference, test)?.sqrt() / ref_ms.sqrt())
}

/// PSNR from a mean squared error; `+inf` when `mse == 0`.
pub fn psnr_from_mse(mse: f64, data_range: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (data_range * data_range / mse).log10()
    }
}

pub fn psnr<T: Element>(a: &Tensor<T>, b: &Tensor<T>, data_range: f64) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?, data_range))
}

/// Averaging window of the local SSIM statistics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SsimWindow {
    /// Uniform `size x size` box.
    Uniform { size: usize },
    /// Separable Gaussian, `size x size` taps.
    Gaussian { size: usize, sigma: f64 },
}

impl SsimWindow {
    pub fn size(&self) -> usize {
        match *self {
            SsimWindow::Uniform { size } | SsimWindow::Gaussian { size, .. } => size,
        }
    }

    /// Normalised 1-D taps; the 2-D window is their outer product.
    pub fn taps(&self) -> Vec<f64> {
        match *self {
            SsimWindow::Uniform { size } => vec![1.0 / size as f64; size],
            SsimWindow::Gaussian { size, sigma } => {
                let c = (size as f64 - 1.0) / 2.0;
                let raw: Vec<f64> = (0..size)
                    .map(|i| {
                        let d = i as f64 - c;
                        (-d * d / (2.0 * sigma * sigma)).exp()
                    })
                    .collect();
                let s: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / s).collect()
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SsimOptions {
    pub data_range: f64,
    pub window: SsimWindow,
}

impl Default for SsimOptions {
    fn default() -> Self {
        SsimOptions {
            data_range: 1.0,
            window: SsimWindow::Uniform { size: 7 },
        }
    }
}

impl SsimOptions {
    pub fn gaussian() -> Self {
        SsimOptions {
            data_range: 1.0,
            window: SsimWindow::Gaussian {
                size: 11,
                sigma: 1.5,
            },
        }
    }

    pub fn c1(&self) -> f64 {
        (K1 * self.data_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (K2 * self.data_range).powi(2)
    }

    /// Sample-covariance correction `n / (n - 1)` for `n` window pixels.
    pub fn cov_norm(&self) -> f64 {
        let np = (self.window.size() * self.window.size()) as f64;
        np / (np - 1.0)
    }
}

/// Filters a `h x w` plane with the separable `taps`, keeping only windows
/// fully inside the image. Output is `(h - k + 1) x (w - k + 1)`.
pub(crate) fn filter_valid(plane: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h + 1 - k, w + 1 - k);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        let src = &plane[y * w..(y + 1) * w];
        let dst = &mut rows[y * ow..(y + 1) * ow];
        for (x, d) in dst.iter_mut().enumerate() {
            *d = taps.iter().zip(&src[x..x + k]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps
                .iter()
                .enumerate()
                .map(|(i, t)| t * rows[(y + i) * ow + x])
                .sum();
        }
    }
    out
}

/// Mean SSIM of one pair of planes.
/// Adjoint of [`filter_valid`]: spreads a window-map gradient back onto
/// the plane.
pub(crate) fn filter_valid_adjoint(grad: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h + 1 - k, w + 1 - k);
    let mut rows = vec![0.0; h * ow];
    for y in 0..oh {
        for x in 0..ow {
            let g = grad[y * ow + x];
            for (i, t) in taps.iter().enumerate() {
                rows[(y + i) * ow + x] += t * g;
            }
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        let src = &rows[y * ow..(y + 1) * ow];
        let dst = &mut out[y * w..(y + 1) * w];
        for (x, g) in src.iter().enumerate() {
            for (j, t) in taps.iter().enumerate() {
                dst[x + j] += t * g;
            }
        }
    }
    out
}

/// Mean SSIM of one plane and, when asked, its gradient with respect to `a`.
fn ssim_plane_impl(a: &[f64], b: &[f64], h: usize, w: usize, opts: &SsimOptions, want_grad: bool) -> (f64, Vec<f64>) {
    let taps = opts.window.taps();
    let sq = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
    let ua = filter_valid(a, h, w, &taps);
    let ub = filter_valid(b, h, w, &taps);
    let uaa = filter_valid(&sq(a, a), h, w, &taps);
    let ubb = filter_valid(&sq(b, b), h, w, &taps);
    let uab = filter_valid(&sq(a, b), h, w, &taps);
    let (c1, c2, cn) = (opts.c1(), opts.c2(), opts.cov_norm());
    let m = ua.len();
    let mut total = 0.0;
    // d(mean SSIM) / d(window sums of a, a*a, a*b)
    let (mut g_u, mut g_uu, mut g_ub) = if want_grad {
        (vec![0.0; m], vec![0.0; m], vec![0.0; m])
    } else {
        (Vec::new(), Vec::new(), Vec::new())
    };
    for i in 0..m {
        let (ma, mb) = (ua[i], ub[i]);
        let va = cn * (uaa[i] - ma * ma);
        let vb = cn * (ubb[i] - mb * mb);
        let vab = cn * (uab[i] - ma * mb);
        let (n1, n2) = (2.0 * ma * mb + c1, 2.0 * vab + c2);
        let (d1, d2) = (ma * ma + mb * mb + c1, va + vb + c2);
        let s = (n1 * n2) / (d1 * d2);
        total += s;
        if want_grad {
            let ds_dmu = 2.0 * mb * n2 / (d1 * d2) - s * 2.0 * ma / d1;
            let ds_dva = -s / d2;
            let ds_dvab = 2.0 * n1 / (d1 * d2);
            let scale = 1.0 / m as f64;
            g_u[i] = scale * (ds_dmu - ds_dva * cn * 2.0 * ma - ds_dvab * cn * mb);
            g_uu[i] = scale * ds_dva * cn;
            g_ub[i] = scale * ds_dvab * cn;
        }
    }
    if !want_grad {
        return (total / m as f64, Vec::new());
    }
    let gu = filter_valid_adjoint(&g_u, h, w, &taps);
    let guu = filter_valid_adjoint(&g_uu, h, w, &taps);
    let gub = filter_valid_adjoint(&g_ub, h, w, &taps);
    let grad = (0..h * w).map(|k| gu[k] + 2.0 * a[k] * guu[k] + b[k] * gub[k]).collect();
    (total / m as f64, grad)
}

fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize, opts: &SsimOptions) -> f64 {
    ssim_plane_impl(a, b, h, w, opts, false).0
}

fn check_window(s: crate::nn::Shape, opts: &SsimOptions) -> Result<()> {
    let k = opts.window.size();
    if k < 2 || s.h < k || s.w < k {
        return Err(Error::invalid(format!(
            "image {}x{} smaller than the {k}x{k} SSIM window",
            s.h, s.w
        )));
    }
    Ok(())
}

/// SSIM as in [`ssim`] together with its gradient with respect to `a`.
pub fn ssim_with_grad<T: Element>(a: &Tensor<T>, b: &Tensor<T>, opts: &SsimOptions) -> Result<(f64, Tensor<T>)> {
    same_shape(a, b, "ssim")?;
    let s = a.shape();
    check_window(s, opts)?;
    let planes = (s.n * s.c) as f64;
    let mut total = 0.0;
    let mut grad = Tensor::zeros(s);
    for n in 0..s.n {
        for c in 0..s.c {
            let pa: Vec<f64> = a.plane(n, c).iter().map(|v| v.as_f64()).collect();
            let pb: Vec<f64> = b.plane(n, c).iter().map(|v| v.as_f64()).collect();
            let (v, g) = ssim_plane_impl(&pa, &pb, s.h, s.w, opts, true);
            total += v;
            for (o, gv) in grad.plane_mut(n, c).iter_mut().zip(g) {
                *o = T::from_f64(gv / planes);
            }
        }
    }
    Ok((total / planes, grad))
}

pub fn ssim<T: Element>(a: &Tensor<T>, b: &Tensor<T>, opts: &SsimOptions) -> Result<f64> {
    same_shape(a, b, "ssim")?;
    let s = a.shape();
    check_window(s, opts)?;
    let mut total = 0.0;
    for n in 0..s.n {
        for c in 0..s.c {
            let pa: Vec<f64> = a.plane(n, c).iter().map(|v| v.as_f64()).collect();
            let pb: Vec<f64> = b.plane(n, c).iter().map(|v| v.as_f64()).collect();
            total += ssim_plane(&pa, &pb, s.h, s.w, opts);
        }
    }
    Ok(total / (s.n * s.c) as f64)
}

/// One row of a comparison table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub name_a: String,
    pub name_b: String,
    pub mse: f64,
    pub nrmse: f64,
    pub ssim: f64,
    /// `f64::INFINITY` when the images are identical.
    pub psnr: f64,
}

impl MetricReport {
    pub fn metric(&self, m: Metric) -> f64 {
        match m {
            Metric::Mse => self.mse,
            Metric::Nrmse => self.nrmse,
            Metric::Ssim => self.ssim,
            Metric::Psnr => self.psnr,
        }
    }
}

/// The four reported metrics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Mse,
    Nrmse,
    Ssim,
    Psnr,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Mse, Metric::Nrmse, Metric::Ssim, Metric::Psnr];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Mse => "mse",
            Metric::Nrmse => "nrmse",
            Metric::Ssim => "ssim",
            Metric::Psnr => "psnr",
        }
    }
}

/// Formats a metric value for CSV output; infinities become `inf`.
pub fn format_value(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else if v == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{v}")
    }
}

pub fn parse_value(s: &str) -> Option<f64> {
    match s.trim() {
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        other => other.parse().ok(),
    }
}

/// All four metrics of `test` against `reference` with unit data range.
pub fn compare<T: Element>(
    name_a: &str,
    reference: &Tensor<T>,
    name_b: &str,
    test: &Tensor<T>,
    opts: &SsimOptions,
) -> Result<MetricReport> {
    let m = mse(reference, test)?;
    Ok(MetricReport {
        name_a: name_a.to_string(),
        name_b: name_b.to_string(),
        mse: m,
        nrmse: nrmse(reference, test)?,
        ssim: ssim(reference, test, opts)?,
        psnr: psnr_from_mse(m, opts.data_range),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Shape;

    fn img(h: usize, w: usize, v: &[f32]) -> Tensor<f32> {
        Tensor::from_vec(Shape::new(1, 1, h, w), v.to_vec()).unwrap()
    }

    #[test]
    fn mse_hand_values() {
        let a = img(2, 2, &[0., 0., 1., 1.]);
        let b = img(2, 2, &[0., 1., 1., 1.]);
        assert_eq!(mse(&a, &b).unwrap(), 0.25);
        assert_eq!(mse(&b, &a).unwrap(), 0.25);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert!(mse(&a, &img(1, 4, &[0.; 4])).is_err());
    }

    #[test]
    fn nrmse_hand_values() {
        let r = img(2, 2, &[1.; 4]);
        let t = img(2, 2, &[0., 1., 1., 1.]);
        assert!((nrmse(&r, &t).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(nrmse(&r, &r).unwrap(), 0.0);
        let (r2, t2) = (r.map(|v| v * 0.3), t.map(|v| v * 0.3));
        assert!((nrmse(&r2, &t2).unwrap() - 0.5).abs() < 1e-7);
        assert!(nrmse(&img(2, 2, &[0.; 4]), &t).is_err());
    }

    #[test]
    fn psnr_closed_form() {
        assert!((psnr_from_mse(0.01, 1.0) - 20.0).abs() < 1e-12);
        assert!((psnr_from_mse(0.0106, 1.0) - 19.75).abs() < 0.01);
        assert!((psnr_from_mse(0.0011, 1.0) - 29.59).abs() < 0.01);
        assert_eq!(psnr_from_mse(0.0, 1.0), f64::INFINITY);
    }

    #[test]
    fn ssim_constant_images() {
        let a = Tensor::<f32>::full(Shape::new(1, 1, 9, 9), 0.2);
        let b = Tensor::<f32>::full(Shape::new(1, 1, 9, 9), 0.4);
        let a64: Tensor<f64> = a.cast();
        let b64 = Tensor::<f64>::full(Shape::new(1, 1, 9, 9), 0.4);
        let a64 = a64.map(|_| 0.2);
        let expected = (2.0 * 0.2 * 0.4 + 1e-4) / (0.2f64.powi(2) + 0.4f64.powi(2) + 1e-4);
        let got = ssim(&a64, &b64, &SsimOptions::default()).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
        assert!((expected - 0.80010).abs() < 1e-5);
        assert!((ssim(&a, &b, &SsimOptions::default()).unwrap() - expected).abs() < 1e-6);
    }

    #[test]
    fn ssim_identity_and_small_image_error() {
        let a = Tensor::<f32>::from_fn(Shape::new(1, 3, 10, 12), |_, c, y, x| {
            ((c * 13 + y * 5 + x * 3) % 17) as f32 / 17.0
        });
        assert!((ssim(&a, &a, &SsimOptions::default()).unwrap() - 1.0).abs() < 1e-12);
        assert!((ssim(&a, &a, &SsimOptions::gaussian()).is_err()));
        let small = Tensor::<f32>::zeros(Shape::new(1, 1, 6, 6));
        assert!(ssim(&small, &small, &SsimOptions::default()).is_err());
    }

    #[test]
    fn gaussian_taps_normalised() {
        let t = SsimOptions::gaussian().window.taps();
        assert_eq!(t.len(), 11);
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(t[5] > t[4] && (t[0] - t[10]).abs() < 1e-18);
    }

    #[test]
    fn compare_identical() {
        let a = Tensor::<f32>::from_fn(Shape::new(1, 1, 8, 8), |_, _, y, x| (y * 8 + x) as f32 / 64.0);
        let r = compare("a", &a, "b", &a, &SsimOptions::default()).unwrap();
        assert_eq!((r.mse, r.nrmse, r.ssim, r.psnr), (0.0, 0.0, 1.0, f64::INFINITY));
        assert_eq!(format_value(r.psnr), "inf");
        assert_eq!(parse_value("inf"), Some(f64::INFINITY));
    }

    #[test]
    fn ssim_gradient_matches_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let shape = Shape::new(2, 2, 12, 11);
        let a = Tensor::<f64>::from_fn(shape, |_, _, _, _| rng.gen_range(0.0..1.0));
        let b = Tensor::<f64>::from_fn(shape, |_, _, _, _| rng.gen_range(0.0..1.0));
        for opts in [SsimOptions::default(), SsimOptions::gaussian()] {
            let opts = SsimOptions {
                window: match opts.window {
                    SsimWindow::Gaussian { sigma, .. } => SsimWindow::Gaussian { size: 5, sigma },
                    w => w,
                },
                ..opts
            };
            let (v, g) = ssim_with_grad(&a, &b, &opts).unwrap();
            assert_eq!(v, ssim(&a, &b, &opts).unwrap());
            let eps = 1e-6;
            for k in (0..shape.len()).step_by(17) {
                let mut p = a.clone();
                p.data_mut()[k] += eps;
                let mut m = a.clone();
                m.data_mut()[k] -= eps;
                let num = (ssim(&p, &b, &opts).unwrap() - ssim(&m, &b, &opts).unwrap()) / (2.0 * eps);
                let ana = g.data()[k];
                assert!((num - ana).abs() <= 1e-6 * num.abs().max(1e-4), "{k}: {num} vs {ana}");
            }
        }
    }
}
