use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xscope_core::nn::Tensor;

/// Per-window SSIM written out directly: every 7×7 window, plain sums,
/// unbiased moments; the mean over windows, then over channels.
pub fn brute_ssim(a: &Tensor<f64>, b: &Tensor<f64>, win: usize) -> f64 {
    let s = a.shape();
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let np = (win * win) as f64;
    let mut per_channel = Vec::new();
    for n in 0..s.n {
        for c in 0..s.c {
            let mut acc = 0.0;
            let mut count = 0usize;
            for y0 in 0..=s.h - win {
                for x0 in 0..=s.w - win {
                    let mut xs = Vec::new();
                    let mut ys = Vec::new();
                    for y in y0..y0 + win {
                        for x in x0..x0 + win {
                            xs.push(a.at(n, c, y, x));
                            ys.push(b.at(n, c, y, x));
                        }
                    }
                    let mx = xs.iter().sum::<f64>() / np;
                    let my = ys.iter().sum::<f64>() / np;
                    let vx = xs.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / (np - 1.0);
                    let vy = ys.iter().map(|v| (v - my).powi(2)).sum::<f64>() / (np - 1.0);
                    let cxy = xs.iter().zip(&ys).map(|(p, q)| (p - mx) * (q - my)).sum::<f64>() / (np - 1.0);
                    acc += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                    count += 1;
                }
            }
            per_channel.push(acc / count as f64);
        }
    }
    per_channel.iter().sum::<f64>() / per_channel.len() as f64
}

/// erf by its Maclaurin series; fine for |x| <= 3.
pub fn erf_series(x: f64) -> f64 {
    let mut sum = 0.0;
    let mut term = x;
    for n in 0..200 {
        sum += term / (2 * n + 1) as f64;
        term *= -x * x / (n + 1) as f64;
    }
    2.0 / std::f64::consts::PI.sqrt() * sum
}

/// erfc by Laplace's continued fraction, evaluated bottom-up; for x >= 2.
pub fn erfc_fraction(x: f64) -> f64 {
    let mut f = x;
    for k in (1..400).rev() {
        f = x + (k as f64 / 2.0) / f;
    }
    (-x * x).exp() / std::f64::consts::PI.sqrt() / f
}

/// Q(k, x) for integer k: the Poisson tail e^{-x} Σ_{i<k} x^i / i!.
pub fn gamma_q_integer(k: u32, x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for i in 1..k {
        term *= x / i as f64;
        sum += term;
    }
    (-x).exp() * sum
}

/// Direct circular convolution, kernel centre at the origin.
pub fn direct_convolve(image: &Array2<f64>, kernel: &Array2<f64>) -> Array2<f64> {
    let (h, w) = image.dim();
    let (kh, kw) = kernel.dim();
    let (cy, cx) = ((kh / 2) as i64, (kw / 2) as i64);
    Array2::from_shape_fn((h, w), |(y, x)| {
        let mut acc = 0.0;
        for ky in 0..kh {
            for kx in 0..kw {
                let sy = (y as i64 - (ky as i64 - cy)).rem_euclid(h as i64) as usize;
                let sx = (x as i64 - (kx as i64 - cx)).rem_euclid(w as i64) as usize;
                acc += kernel[[ky, kx]] * image[[sy, sx]];
            }
        }
        acc
    })
}

/// Sparse bright points and thin lines on a dim background.
pub fn pattern(side: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = Array2::from_elem((side, side), 0.02);
    for _ in 0..side {
        let (y, x) = (rng.gen_range(0..side), rng.gen_range(0..side));
        img[[y, x]] = rng.gen_range(0.5..1.0);
    }
    for k in (4..side).step_by(13) {
        for x in 0..side {
            img[[k, x]] = 0.8;
        }
    }
    img
}

