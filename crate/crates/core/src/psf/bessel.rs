//! Integer-order Bessel functions of the first kind.
//!
//! Evaluated from Bessel's integral
//! `J_n(x) = (1/pi) ∫_0^pi cos(n t - x sin t) dt`
//! with the trapezoidal rule. The integrand is smooth and periodic, so the
//! rule converges geometrically once the node count exceeds roughly `|x|/2`.

use std::f64::consts::PI;

/// `J_n(x)` for integer order `n >= 0`.
pub fn bessel_j(n: u32, x: f64) -> f64 {
    if x == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let nodes = (x.abs().ceil() as usize + n as usize + 40).max(48);
    let h = PI / nodes as f64;
    let nf = n as f64;
    let f = |t: f64| (nf * t - x * t.sin()).cos();
    let mut sum = 0.5 * (f(0.0) + f(PI));
    for i in 1..nodes {
        sum += f(i as f64 * h);
    }
    sum * h / PI
}

pub fn j0(x: f64) -> f64 {
    bessel_j(0, x)
}

pub fn j1(x: f64) -> f64 {
    bessel_j(1, x)
}

/// Normalised Airy intensity `[2 J1(v) / v]^2`, equal to 1 at `v = 0`.
pub fn airy(v: f64) -> f64 {
    if v.abs() < 1e-8 {
        return 1.0;
    }
    let a = 2.0 * j1(v) / v;
    a * a
}
