//! Central finite-difference verification of analytic gradients.
//!
//! The check projects an operation's output onto a fixed random tensor `r`,
//! giving the scalar objective `L = sum(r * op(inputs))`. Its analytic
//! gradient is the operation's backward pass fed with `r`; the numeric one is
//! `(L(x + eps) - L(x - eps)) / (2 eps)` per probed element.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::{Shape, Tensor};
use crate::error::{Error, Result};

/// An operation with a forward map and its vector-Jacobian product.
pub trait Differentiable {
    fn forward(&self, inputs: &[Tensor<f64>]) -> Result<Tensor<f64>>;

    /// Gradients with respect to each input, given the output gradient.
    fn backward(&self, inputs: &[Tensor<f64>], output_grad: &Tensor<f64>) -> Result<Vec<Tensor<f64>>>;
}

/// Tuning of [`grad_check_with`].
#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Probe at most this many elements per input (all when `None`).
    pub max_probes_per_input: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            eps: 1e-3,
            max_probes_per_input: None,
            seed: 0x9e37_79b9,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub probes: usize,
    /// (input index, element index) of the worst probe.
    pub worst: Option<(usize, usize)>,
}

/// Relative error with denominator `max(|a|, |b|, 1e-8)`.
#[inline]
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

pub fn grad_check(op: &dyn Differentiable, inputs: &[Tensor<f64>], eps: f64) -> Result<f64> {
    let opts = GradCheckOptions {
        eps,
        ..Default::default()
    };
    Ok(grad_check_with(op, inputs, &opts)?.max_relative_error)
}

pub fn grad_check_with(
    op: &dyn Differentiable,
    inputs: &[Tensor<f64>],
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    check_eps(opts.eps)?;
    let out = op.forward(inputs)?;
    let again = op.forward(inputs)?;
    if !bit_identical(&out, &again) {
        return Err(Error::NonDeterministic);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let projection = random_tensor(out.shape(), &mut rng);
    let analytic = op.backward(inputs, &projection)?;
    if analytic.len() != inputs.len() {
        return Err(Error::invalid("backward must return one gradient per input"));
    }

    let objective = |xs: &[Tensor<f64>]| -> Result<f64> {
        let y = op.forward(xs)?;
        Ok(y.data().iter().zip(projection.data()).map(|(a, b)| a * b).sum())
    };

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        probes: 0,
        worst: None,
    };
    let mut work = inputs.to_vec();
    for (k, grad) in analytic.iter().enumerate() {
        grad.ensure_shape(inputs[k].shape(), "grad_check analytic gradient")?;
        for i in probe_indices(inputs[k].len(), opts.max_probes_per_input, &mut rng) {
            let orig = work[k].data()[i];
            work[k].data_mut()[i] = orig + opts.eps;
            let plus = objective(&work)?;
            work[k].data_mut()[i] = orig - opts.eps;
            let minus = objective(&work)?;
            work[k].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * opts.eps);
            let err = relative_error(grad.data()[i], numeric);
            report.probes += 1;
            if err > report.max_relative_error || report.worst.is_none() {
                report.max_relative_error = report.max_relative_error.max(err);
                report.worst = Some((k, i));
            }
        }
    }
    Ok(report)
}

/// Finite-difference check of a scalar function of flat coordinates.
///
/// `eval(i, delta)` returns the objective with coordinate `i` displaced by
/// `delta` (and must restore it afterwards); `analytic[j]` is the gradient at
/// `coords[j]`. Steps down to 1e-8 are accepted: a perturbation of a weight
/// early in a deep LReLU network moves thousands of pre-activations, and
/// steps of 1e-5 already carry some of them across the kink.
pub fn check_coordinates(
    coords: &[usize],
    analytic: &[f64],
    eps: f64,
    mut eval: impl FnMut(usize, f64) -> Result<f64>,
) -> Result<GradCheckReport> {
    check_eps_in(eps, 1e-8, 1e-2)?;
    if coords.len() != analytic.len() {
        return Err(Error::invalid("coords and analytic gradients differ in length"));
    }
    let base = eval(0, 0.0)?;
    if base.to_bits() != eval(0, 0.0)?.to_bits() {
        return Err(Error::NonDeterministic);
    }
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        probes: 0,
        worst: None,
    };
    for (&i, &a) in coords.iter().zip(analytic) {
        let numeric = (eval(i, eps)? - eval(i, -eps)?) / (2.0 * eps);
        let err = relative_error(a, numeric);
        report.probes += 1;
        if err >= report.max_relative_error {
            report.max_relative_error = err;
            report.worst = Some((0, i));
        }
    }
    Ok(report)
}

fn check_eps_in(eps: f64, lo: f64, hi: f64) -> Result<()> {
    if !(lo..=hi).contains(&eps) {
        return Err(Error::invalid(format!("finite-difference step {eps} outside [{lo:e}, {hi:e}]")));
    }
    Ok(())
}

fn check_eps(eps: f64) -> Result<()> {
    check_eps_in(eps, 1e-5, 1e-2)
}

fn bit_identical(a: &Tensor<f64>, b: &Tensor<f64>) -> bool {
    a.shape() == b.shape()
        && a
            .data()
            .iter()
            .zip(b.data())
            .all(|(x, y)| x.to_bits() == y.to_bits())
}

fn probe_indices<R: Rng>(len: usize, max: Option<usize>, rng: &mut R) -> Vec<usize> {
    match max {
        Some(m) if m < len => {
            let mut v = sample(rng, len, m).into_vec();
            v.sort_unstable();
            v
        }
        _ => (0..len).collect(),
    }
}

/// Uniform values in `[-1, 1]`.
pub fn random_tensor<R: Rng>(shape: Shape, rng: &mut R) -> Tensor<f64> {
    let data = (0..shape.len()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    Tensor::from_vec(shape, data).expect("length matches shape")
}
