//! Classical restoration baseline: Born-Wolf point-spread functions and
//! Richardson-Lucy deconvolution with circular FFT convolution.

pub mod bessel;
pub mod quadrature;

use std::collections::HashMap;
use std::f64::consts::PI;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::Fft2;
use crate::nn::{Element, Tensor};

/// Emission maxima (nm) of the three stains, in R, G, B channel order.
pub const DEFAULT_WAVELENGTHS_RGB_NM: [f64; 3] = [565.0, 520.0, 461.0];

/// Division floor in the Richardson-Lucy ratio image.
pub const RL_EPSILON: f64 = 1e-12;

const QUAD_TOL: f64 = 1e-8;
const QUAD_MAX_DEPTH: u32 = 40;

/// Optical parameters of a widefield PSF.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsfParams {
    pub numerical_aperture: f64,
    pub refractive_index: f64,
    pub wavelength_nm: f64,
    pub pixel_size_nm: f64,
    pub kernel_size: usize,
}

impl Default for PsfParams {
    fn default() -> Self {
        PsfParams {
            numerical_aperture: 1.4,
            refractive_index: 1.515,
            wavelength_nm: 520.0,
            pixel_size_nm: 159.0,
            kernel_size: 65,
        }
    }
}

impl PsfParams {
    pub fn with_wavelength(self, wavelength_nm: f64) -> Self {
        PsfParams {
            wavelength_nm,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.numerical_aperture > 0.0
            && self.numerical_aperture <= self.refractive_index
            && self.wavelength_nm > 0.0
            && self.pixel_size_nm > 0.0
            && self.kernel_size >= 3
            && self.kernel_size % 2 == 1;
        if !ok {
            return Err(Error::invalid(format!("invalid PSF parameters {self:?}")));
        }
        Ok(())
    }

    /// Radius of the first Airy zero, `3.8317 / (k NA)`, in nanometres.
    pub fn first_zero_nm(&self) -> f64 {
        3.831_705_970_207_512 / self.wavenumber_na()
    }

    fn wavenumber_na(&self) -> f64 {
        2.0 * PI / self.wavelength_nm * self.numerical_aperture
    }

    /// Unnormalised Born-Wolf intensity at lateral radius `r_nm` and defocus
    /// `z_nm`:
    /// `|∫_0^1 J0(k NA r ρ) exp(-i k ρ² z NA² / (2 n)) ρ dρ|²`.
    pub fn intensity(&self, r_nm: f64, z_nm: f64) -> Result<f64> {
        let k = 2.0 * PI / self.wavelength_nm;
        let v = self.wavenumber_na() * r_nm;
        let phase = k * z_nm * self.numerical_aperture.powi(2) / (2.0 * self.refractive_index);
        let integrand = |rho: f64| {
            let radial = bessel::j0(v * rho) * rho;
            let p = -phase * rho * rho;
            (radial * p.cos(), radial * p.sin())
        };
        let (re, im) = quadrature::adaptive_simpson(&integrand, 0.0, 1.0, QUAD_TOL, QUAD_MAX_DEPTH)?;
        Ok(re * re + im * im)
    }
}

/// A normalised, odd-sized 2-D convolution kernel.
#[derive(Clone, Debug)]
pub struct Psf {
    pub kernel: Array2<f64>,
    /// `None` for synthetic kernels such as [`Psf::delta`].
    pub params: Option<PsfParams>,
}

impl Psf {
    /// Single unit pixel at the centre: convolution with it is the identity.
    pub fn delta(size: usize) -> Result<Self> {
        if size % 2 == 0 {
            return Err(Error::invalid("kernel size must be odd"));
        }
        let mut kernel = Array2::zeros((size, size));
        kernel[[size / 2, size / 2]] = 1.0;
        Ok(Psf {
            kernel,
            params: None,
        })
    }

    /// Wraps an arbitrary non-negative odd-sized kernel, normalising it to
    /// unit sum.
    pub fn from_kernel(kernel: Array2<f64>) -> Result<Self> {
        let (h, w) = kernel.dim();
        if h % 2 == 0 || w % 2 == 0 {
            return Err(Error::invalid("kernel dimensions must be odd"));
        }
        if kernel.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::invalid("kernel values must be finite and non-negative"));
        }
        let s = kernel.sum();
        if s <= 0.0 {
            return Err(Error::Degenerate("kernel sums to zero".into()));
        }
        Ok(Psf {
            kernel: kernel / s,
            params: None,
        })
    }

    pub fn size(&self) -> (usize, usize) {
        self.kernel.dim()
    }
}

/// Born-Wolf PSF sampled at pixel centres around the kernel centre and
/// normalised to unit sum. `defocus_nm = 0` gives the Airy pattern.
pub fn born_wolf_psf(params: &PsfParams, defocus_nm: f64) -> Result<Psf> {
    params.validate()?;
    let size = params.kernel_size;
    let c = (size / 2) as i64;
    // The intensity depends on dy² + dx² only; evaluate each radius once.
    let mut cache: HashMap<i64, f64> = HashMap::new();
    let mut kernel = Array2::zeros((size, size));
    for y in 0..size {
        for x in 0..size {
            let (dy, dx) = (y as i64 - c, x as i64 - c);
            let r2 = dy * dy + dx * dx;
            let v = match cache.get(&r2) {
                Some(&v) => v,
                None => {
                    let v = params.intensity((r2 as f64).sqrt() * params.pixel_size_nm, defocus_nm)?;
                    cache.insert(r2, v);
                    v
                }
            };
            kernel[[y, x]] = v;
        }
    }
    let total = kernel.sum();
    Ok(Psf {
        kernel: kernel / total,
        params: Some(*params),
    })
}

/// Circular convolution plan: the kernel, centred at the origin and wrapped
/// onto the image grid, in the frequency domain.
struct ConvolutionPlan {
    fft: Fft2,
    otf: Vec<Complex64>,
}

impl ConvolutionPlan {
    fn new(h: usize, w: usize, psf: &Psf) -> Self {
        let fft = Fft2::new(h, w);
        let (kh, kw) = psf.size();
        let (cy, cx) = ((kh / 2) as i64, (kw / 2) as i64);
        let mut wrapped = Array2::<f64>::zeros((h, w));
        for ((ky, kx), &v) in psf.kernel.indexed_iter() {
            let y = (ky as i64 - cy).rem_euclid(h as i64) as usize;
            let x = (kx as i64 - cx).rem_euclid(w as i64) as usize;
            wrapped[[y, x]] += v;
        }
        let otf = fft.forward_real(&wrapped);
        ConvolutionPlan { fft, otf }
    }

    /// `image ⊛ kernel`, or with the flipped kernel when `flipped`.
    fn apply(&self, image: &Array2<f64>, flipped: bool) -> Array2<f64> {
        let mut spec = self.fft.forward_real(image);
        for (s, o) in spec.iter_mut().zip(&self.otf) {
            *s *= if flipped { o.conj() } else { *o };
        }
        self.fft.inverse_real(spec)
    }
}

/// One in-focus PSF per channel, sharing `base` except for the wavelength.
pub fn channel_psfs(base: &PsfParams, wavelengths_nm: &[f64]) -> Result<Vec<Psf>> {
    wavelengths_nm
        .iter()
        .map(|&w| born_wolf_psf(&base.with_wavelength(w), 0.0))
        .collect()
}

/// Circular convolution of `image` with `psf` (kernel centre at the origin),
/// computed in the frequency domain. Output has the size of `image`.
pub fn fft_convolve(image: &Array2<f64>, psf: &Psf) -> Array2<f64> {
    let (h, w) = image.dim();
    ConvolutionPlan::new(h, w, psf).apply(image, false)
}

/// Richardson-Lucy deconvolution starting from the observed image.
pub fn richardson_lucy(observed: &Array2<f64>, psf: &Psf, iterations: usize) -> Result<Array2<f64>> {
    richardson_lucy_from(observed, psf, iterations, observed.clone())
}

/// Richardson-Lucy deconvolution from an explicit initial estimate:
/// `u <- u * ((d / (u ⊛ p)) ⊛ p_flipped)`.
pub fn richardson_lucy_from(
    observed: &Array2<f64>,
    psf: &Psf,
    iterations: usize,
    initial: Array2<f64>,
) -> Result<Array2<f64>> {
    if iterations == 0 {
        return Err(Error::invalid("richardson_lucy needs at least one iteration"));
    }
    if initial.dim() != observed.dim() {
        return Err(Error::ShapeMismatch {
            context: "richardson_lucy initial estimate",
            left: vec![observed.dim().0, observed.dim().1],
            right: vec![initial.dim().0, initial.dim().1],
        });
    }
    if observed.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::invalid("observed image must be finite and non-negative"));
    }
    let (h, w) = observed.dim();
    let plan = ConvolutionPlan::new(h, w, psf);
    let mut estimate = initial;
    for _ in 0..iterations {
        let blurred = plan.apply(&estimate, false);
        let ratio = ndarray::Zip::from(observed)
            .and(&blurred)
            .map_collect(|&d, &b| d / b.max(RL_EPSILON));
        let correction = plan.apply(&ratio, true);
        ndarray::Zip::from(&mut estimate)
            .and(&correction)
            .for_each(|u, &c| *u = (*u * c).max(0.0));
    }
    Ok(estimate)
}

/// Deconvolves every channel of every batch item with its channel's PSF.
pub fn deconvolve_channels<T: Element>(image: &Tensor<T>, psfs: &[Psf], iterations: usize) -> Result<Tensor<T>> {
    let s = image.shape();
    if psfs.len() != s.c {
        return Err(Error::invalid(format!(
            "{} PSFs supplied for {} channels",
            psfs.len(),
            s.c
        )));
    }
    let mut out = Tensor::zeros(s);
    for n in 0..s.n {
        for (c, psf) in psfs.iter().enumerate() {
            let plane = plane_to_array(image, n, c);
            let restored = richardson_lucy(&plane, psf, iterations)?;
            for (dst, &v) in out.plane_mut(n, c).iter_mut().zip(restored.iter()) {
                *dst = T::from_f64(v);
            }
        }
    }
    Ok(out)
}

pub fn plane_to_array<T: Element>(image: &Tensor<T>, n: usize, c: usize) -> Array2<f64> {
    let s = image.shape();
    Array2::from_shape_vec((s.h, s.w), image.plane(n, c).iter().map(|v| v.as_f64()).collect())
        .expect("plane matches shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_params(kernel_size: usize) -> PsfParams {
        PsfParams {
            kernel_size,
            ..PsfParams::default()
        }
    }

    #[test]
    fn params_validation() {
        assert!(PsfParams::default().validate().is_ok());
        let bad = PsfParams {
            numerical_aperture: 1.6,
            ..PsfParams::default()
        };
        assert!(bad.validate().is_err());
        assert!(small_params(4).validate().is_err());
        assert!(small_params(1).validate().is_err());
    }

    #[test]
    fn in_focus_matches_airy_closed_form() {
        let p = PsfParams::default();
        let i0 = p.intensity(0.0, 0.0).unwrap();
        assert!((i0 - 0.25).abs() < 1e-10);
        for r in [50.0, 120.0, 226.0, 400.0, 1500.0, 5000.0] {
            let v = 2.0 * PI / p.wavelength_nm * p.numerical_aperture * r;
            let airy = bessel::airy(v) * 0.25;
            assert!((p.intensity(r, 0.0).unwrap() - airy).abs() < 1e-9, "r = {r}");
        }
    }

    #[test]
    fn kernel_is_normalised_symmetric_and_peaked() {
        let psf = born_wolf_psf(&small_params(21), 0.0).unwrap();
        let k = &psf.kernel;
        assert!((k.sum() - 1.0).abs() < 1e-12);
        assert!(k.iter().all(|&v| v >= 0.0));
        let c = 10;
        let peak = k[[c, c]];
        assert!(k.iter().all(|&v| v <= peak));
        for y in 0..21 {
            for x in 0..21 {
                assert_eq!(k[[y, x]], k[[x, y]]);
                assert_eq!(k[[y, x]], k[[20 - y, x]]);
            }
        }
    }

    #[test]
    fn defocus_spreads_energy() {
        let p = small_params(15);
        let focus = born_wolf_psf(&p, 0.0).unwrap();
        let blurred = born_wolf_psf(&p, 800.0).unwrap();
        assert!(blurred.kernel[[7, 7]] < focus.kernel[[7, 7]]);
        assert!((blurred.kernel.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn delta_convolution_is_identity() {
        let img = Array2::from_shape_fn((8, 6), |(y, x)| (y * 6 + x) as f64 * 0.01);
        let out = fft_convolve(&img, &Psf::delta(5).unwrap());
        assert!(out.iter().zip(img.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn constant_image_preserved() {
        let img = Array2::from_elem((16, 16), 0.3);
        let psf = born_wolf_psf(&small_params(7), 0.0).unwrap();
        let out = fft_convolve(&img, &psf);
        assert!(out.iter().all(|v| (v - 0.3).abs() < 1e-12));
    }

    #[test]
    fn rl_rejects_bad_input() {
        let psf = Psf::delta(3).unwrap();
        let mut img = Array2::from_elem((8, 8), 0.5);
        assert!(richardson_lucy(&img, &psf, 0).is_err());
        img[[2, 2]] = -0.1;
        assert!(richardson_lucy(&img, &psf, 3).is_err());
    }

    #[test]
    fn rl_delta_kernel_identity() {
        let img = Array2::from_shape_fn((12, 12), |(y, x)| ((y * 7 + x * 3) % 5) as f64 * 0.2);
        let psf = Psf::delta(3).unwrap();
        for it in 1..4 {
            let out = richardson_lucy(&img, &psf, it).unwrap();
            assert!(out.iter().zip(img.iter()).all(|(a, b)| (a - b).abs() < 1e-9));
        }
    }

    #[test]
    fn from_kernel_normalises() {
        let k = Array2::from_elem((3, 3), 2.0);
        let psf = Psf::from_kernel(k).unwrap();
        assert!((psf.kernel.sum() - 1.0).abs() < 1e-15);
        assert!(Psf::from_kernel(Array2::from_elem((2, 3), 1.0)).is_err());
    }
}
