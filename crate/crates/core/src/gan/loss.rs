//! Relativistic adversarial losses on discriminator logits and the composite
//! generator objective.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{self, SsimOptions};
use crate::nn::ops::sigmoid_scalar;
use crate::nn::{Element, Tensor};

/// Probabilities are clamped to `[P_CLAMP, 1 - P_CLAMP]` inside BCE.
pub const P_CLAMP: f64 = 1e-7;

/// `-(t ln p + (1 - t) ln(1 - p))` with `p` clamped.
pub fn bce(p: f64, t: f64) -> f64 {
    let p = p.clamp(P_CLAMP, 1.0 - P_CLAMP);
    -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
}

/// `BCE(sigmoid(z), t)` and the logit-form derivative `sigmoid(z) - t`.
///
/// The clamp bounds the reported value only. Differentiating the clamped
/// value would give a zero gradient to whichever network saturates first,
/// and it would then never recover.
fn bce_logit(z: f64, t: f64) -> (f64, f64) {
    let p = sigmoid_scalar(z);
    (bce(p, t), p - t)
}

fn check_logits(d_fake: f64, d_real: f64) -> Result<()> {
    if !d_fake.is_finite() || !d_real.is_finite() {
        return Err(Error::NonFinite(format!("logits d_fake={d_fake}, d_real={d_real}")));
    }
    Ok(())
}

fn check_label(y: f64) -> Result<()> {
    if y != 0.0 && y != 1.0 {
        return Err(Error::invalid(format!("label must be 0 or 1, got {y}")));
    }
    Ok(())
}

/// `BCE(σ(d_fake - d_real), y) + BCE(σ(d_real - d_fake), 1 - y)`.
pub fn discriminator_loss(d_fake: f64, d_real: f64, y: f64) -> Result<f64> {
    Ok(discriminator_loss_with_grad(d_fake, d_real, y)?.0)
}

/// Loss and its derivatives `(dL/d d_fake, dL/d d_real)`.
pub fn discriminator_loss_with_grad(d_fake: f64, d_real: f64, y: f64) -> Result<(f64, f64, f64)> {
    check_logits(d_fake, d_real)?;
    check_label(y)?;
    let diff = d_fake - d_real;
    let (l1, g1) = bce_logit(diff, y);
    let (l2, g2) = bce_logit(-diff, 1.0 - y);
    let g = g1 - g2;
    Ok((l1 + l2, g, -g))
}

/// Generator's adversarial term `BCE(σ(d_fake - d_real), 1)` and its
/// derivatives.
pub fn adversarial_loss_with_grad(d_fake: f64, d_real: f64) -> Result<(f64, f64, f64)> {
    check_logits(d_fake, d_real)?;
    let (l, g) = bce_logit(d_fake - d_real, 1.0);
    Ok((l, g, -g))
}

/// Batch mean of [`discriminator_loss`] with per-item logit gradients.
pub fn discriminator_loss_batch(d_fake: &[f64], d_real: &[f64], y: f64) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    batch(d_fake, d_real, |f, r| discriminator_loss_with_grad(f, r, y))
}

fn batch(
    d_fake: &[f64],
    d_real: &[f64],
    f: impl Fn(f64, f64) -> Result<(f64, f64, f64)>,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if d_fake.len() != d_real.len() || d_fake.is_empty() {
        return Err(Error::ShapeMismatch {
            context: "logit batches",
            left: vec![d_fake.len()],
            right: vec![d_real.len()],
        });
    }
    let n = d_fake.len() as f64;
    let (mut loss, mut gf, mut gr) = (0.0, Vec::new(), Vec::new());
    for (&a, &b) in d_fake.iter().zip(d_real) {
        let (l, ga, gb) = f(a, b)?;
        loss += l / n;
        gf.push(ga / n);
        gr.push(gb / n);
    }
    Ok((loss, gf, gr))
}

/// Weights of the generator objective
/// `α·MSE + β·(1 − SSIM) + γ·BCE(σ(d_fake − d_real), 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for LossWeights {
    /// At an MSE near 0.007, an SSIM near 0.83 and an untrained
    /// discriminator, the two image terms make up about 11% of the total.
    fn default() -> Self {
        LossWeights {
            alpha: 10.0,
            beta: 0.1,
            gamma: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.alpha, self.beta, self.gamma].iter().all(|v| v.is_finite());
        if !finite || self.alpha < 0.0 || self.beta < 0.0 || self.gamma <= 0.0 {
            return Err(Error::invalid(format!(
                "loss weights {self:?} need alpha, beta >= 0 and gamma > 0"
            )));
        }
        Ok(())
    }
}

/// Weighted parts of the generator objective; `total` is their sum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GeneratorLoss {
    pub total: f64,
    pub mse_part: f64,
    pub ssim_part: f64,
    pub bce_part: f64,
}

impl GeneratorLoss {
    /// Share of the two image-similarity terms in the total.
    pub fn image_share(&self) -> f64 {
        (self.mse_part + self.ssim_part) / self.total
    }
}

/// Gradients of the generator objective.
#[derive(Clone, Debug)]
pub struct GeneratorLossGrad<T: Element = f32> {
    /// With respect to the generated batch, image terms only.
    pub gx: Tensor<T>,
    /// With respect to each fake logit.
    pub d_fake: Vec<f64>,
}

pub fn generator_loss<T: Element>(
    gx: &Tensor<T>,
    y_img: &Tensor<T>,
    d_fake: &[f64],
    d_real: &[f64],
    weights: &LossWeights,
) -> Result<GeneratorLoss> {
    Ok(generator_loss_with_grad(gx, y_img, d_fake, d_real, weights)?.0)
}

/// SSIM uses the metrics module's default window on a `[0, 1]` range.
pub fn generator_loss_with_grad<T: Element>(
    gx: &Tensor<T>,
    y_img: &Tensor<T>,
    d_fake: &[f64],
    d_real: &[f64],
    weights: &LossWeights,
) -> Result<(GeneratorLoss, GeneratorLossGrad<T>)> {
    weights.validate()?;
    gx.ensure_finite("generated batch")?;
    if d_fake.len() != gx.shape().n {
        return Err(Error::ShapeMismatch {
            context: "generator_loss logits vs batch",
            left: vec![d_fake.len()],
            right: gx.shape().to_vec(),
        });
    }
    let mse = metrics::mse(gx, y_img)?;
    let (ssim, ssim_grad) = metrics::ssim_with_grad(gx, y_img, &SsimOptions::default())?;
    let (bce_mean, g_fake, _) = batch(d_fake, d_real, adversarial_loss_with_grad)?;

    let parts = GeneratorLoss {
        mse_part: weights.alpha * mse,
        ssim_part: weights.beta * (1.0 - ssim),
        bce_part: weights.gamma * bce_mean,
        total: 0.0,
    };
    let loss = GeneratorLoss {
        total: parts.mse_part + parts.ssim_part + parts.bce_part,
        ..parts
    };

    let count = gx.len() as f64;
    let mse_scale = 2.0 * weights.alpha / count;
    let mut g = Tensor::zeros(gx.shape());
    for (((o, &a), &b), &s) in g
        .data_mut()
        .iter_mut()
        .zip(gx.data())
        .zip(y_img.data())
        .zip(ssim_grad.data())
    {
        *o = T::from_f64(mse_scale * (a.as_f64() - b.as_f64()) - weights.beta * s.as_f64());
    }
    let d_fake_grad = g_fake.iter().map(|v| v * weights.gamma).collect();
    Ok((loss, GeneratorLossGrad { gx: g, d_fake: d_fake_grad }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Shape;

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn equal_logits() {
        for z in [-3.0, 0.0, 12.5] {
            assert!((discriminator_loss(z, z, 0.0).unwrap() - 2.0 * LN2).abs() < 1e-12);
            assert!((discriminator_loss(z, z, 1.0).unwrap() - 2.0 * LN2).abs() < 1e-12);
        }
    }

    #[test]
    fn separated_logits_and_symmetry() {
        assert!(discriminator_loss(0.0, 50.0, 0.0).unwrap() < 1e-6);
        assert!(discriminator_loss(50.0, 0.0, 0.0).unwrap() > 20.0);
        for (f, r) in [(0.3, -1.2), (2.0, 2.5), (-7.0, 4.0)] {
            for y in [0.0, 1.0] {
                let a = discriminator_loss(f, r, y).unwrap();
                assert!((a - discriminator_loss(r, f, 1.0 - y).unwrap()).abs() < 1e-12);
                assert!((a - discriminator_loss(f + 3.3, r + 3.3, y).unwrap()).abs() < 1e-12);
            }
        }
        assert!(discriminator_loss(f64::NAN, 0.0, 0.0).is_err());
        assert!(discriminator_loss(0.0, 0.0, 0.5).is_err());
    }

    #[test]
    fn logit_gradients() {
        let h = 1e-6;
        for (f, r, y) in [(0.3, -1.2, 0.0), (2.0, 2.5, 1.0), (-0.7, 0.1, 0.0)] {
            let (_, gf, gr) = discriminator_loss_with_grad(f, r, y).unwrap();
            let nf = (discriminator_loss(f + h, r, y).unwrap() - discriminator_loss(f - h, r, y).unwrap()) / (2.0 * h);
            let nr = (discriminator_loss(f, r + h, y).unwrap() - discriminator_loss(f, r - h, y).unwrap()) / (2.0 * h);
            assert!((gf - nf).abs() < 1e-7 && (gr - nr).abs() < 1e-7);
            let (_, af, _) = adversarial_loss_with_grad(f, r).unwrap();
            let adv = |f: f64| bce(sigmoid_scalar(f - r), 1.0);
            assert!((af - (adv(f + h) - adv(f - h)) / (2.0 * h)).abs() < 1e-7);
        }
    }

    #[test]
    fn generator_parts() {
        let s = Shape::new(1, 3, 16, 16);
        let y = Tensor::<f64>::from_fn(s, |_, c, i, j| ((c + i * j) % 9) as f64 / 8.0);
        let w = LossWeights::default();
        let l = generator_loss(&y, &y, &[0.4], &[0.4], &w).unwrap();
        assert!((l.total - w.gamma * LN2).abs() < 1e-12);
        let gx = y.map(|v| (v * 0.8 + 0.05).min(1.0));
        let l = generator_loss(&gx, &y, &[0.1], &[-0.2], &w).unwrap();
        assert!((l.mse_part + l.ssim_part + l.bce_part - l.total).abs() < 1e-12);
        let pure = LossWeights {
            alpha: 0.0,
            beta: 0.0,
            gamma: 2.0,
        };
        let p = generator_loss(&gx, &y, &[0.1], &[-0.2], &pure).unwrap();
        assert_eq!(p.total, p.bce_part);
        assert!((p.total - 2.0 * bce(sigmoid_scalar(0.3), 1.0)).abs() < 1e-12);
        assert!(LossWeights { gamma: 0.0, ..w }.validate().is_err());
    }

    #[test]
    fn generator_image_gradient() {
        let s = Shape::new(1, 2, 10, 10);
        let y = Tensor::<f64>::from_fn(s, |_, c, i, j| ((3 * c + i * j + i) % 11) as f64 / 10.0);
        let gx = Tensor::<f64>::from_fn(s, |_, c, i, j| ((5 * c + 2 * i + j) % 7) as f64 / 6.0);
        let w = LossWeights::default();
        let (_, g) = generator_loss_with_grad(&gx, &y, &[0.0], &[0.0], &w).unwrap();
        let h = 1e-6;
        for k in (0..s.len()).step_by(7) {
            let mut p = gx.clone();
            p.data_mut()[k] += h;
            let mut m = gx.clone();
            m.data_mut()[k] -= h;
            let num = (generator_loss(&p, &y, &[0.0], &[0.0], &w).unwrap().total
                - generator_loss(&m, &y, &[0.0], &[0.0], &w).unwrap().total)
                / (2.0 * h);
            assert!((num - g.gx.data()[k]).abs() < 1e-7, "{k}");
        }
    }
}
