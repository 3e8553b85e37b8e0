use crate::error::{Error, Result};

/// Adaptive Simpson integration of a complex-valued (re, im) integrand.
///
/// Each panel is split until the refined estimate differs from the coarse
/// one by less than `tol` (scaled to the panel); fails if `max_depth` splits
/// are not enough.
pub fn adaptive_simpson(
    f: &dyn Fn(f64) -> (f64, f64),
    a: f64,
    b: f64,
    tol: f64,
    max_depth: u32,
) -> Result<(f64, f64)> {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, max_depth)
}

type C = (f64, f64);

fn simpson(a: f64, b: f64, fa: C, fm: C, fb: C) -> C {
    let h = (b - a) / 6.0;
    (
        h * (fa.0 + 4.0 * fm.0 + fb.0),
        h * (fa.1 + 4.0 * fm.1 + fb.1),
    )
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    f: &dyn Fn(f64) -> C,
    a: f64,
    b: f64,
    fa: C,
    fm: C,
    fb: C,
    whole: C,
    tol: f64,
    depth: u32,
) -> Result<C> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let refined = (left.0 + right.0, left.1 + right.1);
    let diff = (refined.0 - whole.0).abs().max((refined.1 - whole.1).abs());
    // Simpson's error estimate: the refined value is off by about diff/15.
    if diff <= 15.0 * tol {
        return Ok((
            refined.0 + (refined.0 - whole.0) / 15.0,
            refined.1 + (refined.1 - whole.1) / 15.0,
        ));
    }
    if depth == 0 {
        return Err(Error::Quadrature(format!(
            "interval [{a:.3e}, {b:.3e}] still differs by {diff:.3e} at maximum depth"
        )));
    }
    let l = recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)?;
    let r = recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)?;
    Ok((l.0 + r.0, l.1 + r.1))
}
