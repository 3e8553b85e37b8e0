//! Two-dimensional complex FFTs over row-major planes.

use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub(crate) struct Fft2 {
    h: usize,
    w: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(h: usize, w: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            h,
            w,
            row_fwd: planner.plan_fft_forward(w),
            row_inv: planner.plan_fft_inverse(w),
            col_fwd: planner.plan_fft_forward(h),
            col_inv: planner.plan_fft_inverse(h),
        }
    }

    pub fn forward_real(&self, a: &Array2<f64>) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = a.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut buf, false);
        buf
    }

    /// Inverse transform, normalised, returning the real part.
    pub fn inverse_real(&self, mut buf: Vec<Complex64>) -> Array2<f64> {
        self.transform(&mut buf, true);
        let scale = 1.0 / (self.h * self.w) as f64;
        let data = buf.into_iter().map(|c| c.re * scale).collect();
        Array2::from_shape_vec((self.h, self.w), data).expect("buffer matches plane size")
    }

    fn transform(&self, buf: &mut [Complex64], inverse: bool) {
        let (row, col) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        for r in buf.chunks_exact_mut(self.w) {
            row.process(r);
        }
        let mut column = vec![Complex64::new(0.0, 0.0); self.h];
        for x in 0..self.w {
            for y in 0..self.h {
                column[y] = buf[y * self.w + x];
            }
            col.process(&mut column);
            for y in 0..self.h {
                buf[y * self.w + x] = column[y];
            }
        }
    }
}
