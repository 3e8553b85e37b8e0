//! Rigid registration of a wide-field image onto its confocal counterpart:
//! rotation search, cropping to the reference frame, phase-correlation
//! translation and z-slice matching.

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::transform::{apply, Target, Transform, TransformRecord};
use super::PairedSample;
use crate::error::{Error, Result};
use crate::fourier::Fft2;
use crate::nn::Tensor;

/// Correlation peaks per surface re-scored by overlap correlation.
const PEAK_CANDIDATES: usize = 5;

/// Channel-mean of the first batch item as an `f64` plane.
pub fn luminance(image: &Tensor) -> Array2<f64> {
    let s = image.shape();
    let mut out = Array2::zeros((s.h, s.w));
    for c in 0..s.c {
        for (o, &v) in out.iter_mut().zip(image.plane(0, c)) {
            *o += v as f64;
        }
    }
    out / s.c.max(1) as f64
}

/// Pearson correlation of two equally sized planes.
pub fn normalized_cross_correlation(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch {
            context: "normalized_cross_correlation",
            left: vec![a.dim().0, a.dim().1],
            right: vec![b.dim().0, b.dim().1],
        });
    }
    ncc_masked(a.iter().copied().zip(b.iter().copied()))
}

fn ncc_masked(pairs: impl Iterator<Item = (f64, f64)> + Clone) -> Result<f64> {
    let (mut n, mut sa, mut sb) = (0.0, 0.0, 0.0);
    for (x, y) in pairs.clone() {
        n += 1.0;
        sa += x;
        sb += y;
    }
    if n == 0.0 {
        return Err(Error::Degenerate("empty correlation region".into()));
    }
    let (ma, mb) = (sa / n, sb / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in pairs {
        let (dx, dy) = (x - ma, y - mb);
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va <= 0.0 || vb <= 0.0 {
        return Err(Error::Degenerate("constant image has no correlation".into()));
    }
    Ok(cov / (va * vb).sqrt())
}

fn wrap_signed(v: usize, n: usize) -> i64 {
    if v > n / 2 {
        v as i64 - n as i64
    } else {
        v as i64
    }
}

/// Integer translation `(dy, dx)` such that `b(y, x) ≈ a(y - dy, x - dx)`.
/// Candidates come from the frequency-domain circular cross-correlation,
/// plain and whitened; the one whose overlap correlates best wins.
/// Components lie in `(-n/2, n/2]`.
pub fn estimate_shift_planes(a: &Array2<f64>, b: &Array2<f64>) -> Result<(i64, i64)> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch {
            context: "estimate_shift",
            left: vec![a.dim().0, a.dim().1],
            right: vec![b.dim().0, b.dim().1],
        });
    }
    let (h, w) = a.dim();
    // A Hann taper suppresses the wrap-around edges of cropped fields,
    // which would otherwise pin the peak at zero shift.
    let hann = |n: usize, i: usize| {
        if n < 3 {
            1.0
        } else {
            0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos()
        }
    };
    let centred = |p: &Array2<f64>| -> Result<Array2<f64>> {
        let m = p.mean().unwrap_or(0.0);
        if p.iter().all(|&v| (v - m).abs() < 1e-12) {
            return Err(Error::Degenerate("constant image has no translation signal".into()));
        }
        Ok(Array2::from_shape_fn((h, w), |(y, x)| (p[[y, x]] - m) * hann(h, y) * hann(w, x)))
    };
    let fft = Fft2::new(h, w);
    let fa = fft.forward_real(&centred(a)?);
    let fb = fft.forward_real(&centred(b)?);
    let raw: Vec<Complex64> = fb.iter().zip(&fa).map(|(&x, &y)| x * y.conj()).collect();
    let whitened: Vec<Complex64> = raw
        .iter()
        .map(|&c| {
            let m = c.norm();
            if m > 1e-15 {
                c / m
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();

    // Peaks of both the phase-correlation and the plain cross-correlation
    // surface, with their neighbours, are re-scored by the correlation of
    // the raw overlapping regions. Whitening is unreliable on smooth fields
    // and the taper pulls the plain peak towards zero shift.
    let mut candidates: Vec<(i64, i64)> = Vec::new();
    for surface in [fft.inverse_real(whitened), fft.inverse_real(raw)] {
        let mut peaks: Vec<((usize, usize), f64)> = surface.indexed_iter().map(|(i, &v)| (i, v)).collect();
        peaks.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
        for &((y, x), _) in peaks.iter().take(PEAK_CANDIDATES) {
            for oy in -1..=1i64 {
                for ox in -1..=1i64 {
                    let c = (
                        wrap_signed((y as i64 + oy).rem_euclid(h as i64) as usize, h),
                        wrap_signed((x as i64 + ox).rem_euclid(w as i64) as usize, w),
                    );
                    if !candidates.contains(&c) {
                        candidates.push(c);
                    }
                }
            }
        }
    }
    let mut best = candidates[0];
    let mut best_score = f64::NEG_INFINITY;
    for &(dy, dx) in &candidates {
        if let Ok(score) = overlap_correlation(a, b, dy, dx) {
            if score > best_score {
                best_score = score;
                best = (dy, dx);
            }
        }
    }
    Ok(best)
}

/// Correlation of `b(y, x)` with `a(y - dy, x - dx)` where both exist.
fn overlap_correlation(a: &Array2<f64>, b: &Array2<f64>, dy: i64, dx: i64) -> Result<f64> {
    let (h, w) = (a.dim().0 as i64, a.dim().1 as i64);
    let ys = dy.max(0)..(h + dy.min(0));
    let xs = dx.max(0)..(w + dx.min(0));
    if ys.is_empty() || xs.is_empty() {
        return Err(Error::Degenerate("no overlap".into()));
    }
    let pairs = ys.flat_map(move |y| {
        xs.clone()
            .map(move |x| (a[[(y - dy) as usize, (x - dx) as usize]], b[[y as usize, x as usize]]))
    });
    ncc_masked(pairs)
}

pub fn estimate_shift(a: &Tensor, b: &Tensor) -> Result<(i64, i64)> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            context: "estimate_shift",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    estimate_shift_planes(&luminance(a), &luminance(b))
}

/// Bilinear rotation by `degrees` about the plane centre, zero outside.
/// Positive angles turn counter-clockwise in (x right, y up) coordinates.
pub fn rotate_plane(p: &Array2<f64>, degrees: f64) -> Array2<f64> {
    if degrees == 0.0 {
        return p.clone();
    }
    let (h, w) = p.dim();
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let (s, c) = degrees.to_radians().sin_cos();
    Array2::from_shape_fn((h, w), |(y, x)| {
        // Row index grows downward, so flip y into a right-handed frame.
        let (dx, dy) = (x as f64 - cx, cy - y as f64);
        let sx = c * dx + s * dy;
        let sy = -s * dx + c * dy;
        bilinear(p, cy - sy, cx + sx)
    })
}

fn bilinear(p: &Array2<f64>, y: f64, x: f64) -> f64 {
    let (h, w) = p.dim();
    if y < 0.0 || x < 0.0 || y > (h - 1) as f64 || x > (w - 1) as f64 {
        return 0.0;
    }
    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
    let (fy, fx) = (y - y0 as f64, x - x0 as f64);
    let top = p[[y0, x0]] * (1.0 - fx) + p[[y0, x1]] * fx;
    let bottom = p[[y1, x0]] * (1.0 - fx) + p[[y1, x1]] * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Correlation of `rotated` translated by `shift` against `b`, over a
/// central disc untouched by either the rotation corners or the shift.
fn ncc_centre_disc(rotated: &Array2<f64>, b: &Array2<f64>, shift: (i64, i64)) -> Result<f64> {
    let (h, w) = b.dim();
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let r = 0.45 * h.min(w) as f64 - ((shift.0 * shift.0 + shift.1 * shift.1) as f64).sqrt();
    if r <= 1.0 {
        return Err(Error::Degenerate("shift leaves no overlap to correlate".into()));
    }
    let r2 = r * r;
    let pairs = (0..h).flat_map(move |y| (0..w).map(move |x| (y, x))).filter_map(move |(y, x)| {
        let (dy, dx) = (y as f64 - cy, x as f64 - cx);
        if dy * dy + dx * dx > r2 {
            return None;
        }
        let sy = y as i64 - shift.0;
        let sx = x as i64 - shift.1;
        Some((rotated[[sy as usize, sx as usize]], b[[y, x]]))
    });
    ncc_masked(pairs)
}

/// Angle (degrees) on the grid `k * step_deg`, `|k * step| <= range_deg`,
/// such that rotating `a` by it best matches `b` after shift compensation.
/// Ties go to the smaller `|angle|`.
pub fn estimate_rotation(a: &Tensor, b: &Tensor, search_range_deg: f64, step_deg: f64) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            context: "estimate_rotation",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    Ok(estimate_rotation_planes(&luminance(a), &luminance(b), search_range_deg, step_deg)?.0)
}

/// Returns `(angle, correlation)`.
pub fn estimate_rotation_planes(
    a: &Array2<f64>,
    b: &Array2<f64>,
    search_range_deg: f64,
    step_deg: f64,
) -> Result<(f64, f64)> {
    if !(0.0..=10.0).contains(&search_range_deg) || step_deg < 0.1 {
        return Err(Error::invalid(format!(
            "rotation search range {search_range_deg} must be within ±10° and step {step_deg} >= 0.1°"
        )));
    }
    let steps = (search_range_deg / step_deg + 1e-9).floor() as i64;
    // 0, -1, +1, -2, +2, ... so that strict improvement keeps the smaller |angle|.
    let order = std::iter::once(0).chain((1..=steps).flat_map(|k| [-k, k]));
    let mut best: Option<(f64, f64)> = None;
    for k in order {
        let angle = k as f64 * step_deg;
        let rotated = rotate_plane(a, angle);
        let shift = estimate_shift_planes(&rotated, b)?;
        let score = match ncc_centre_disc(&rotated, b, shift) {
            Ok(s) => s,
            Err(Error::Degenerate(_)) => f64::NEG_INFINITY,
            Err(e) => return Err(e),
        };
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((angle, score));
        }
    }
    Ok(best.expect("grid contains zero"))
}

/// Settings of [`align_pair`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignConfig {
    pub search_range_deg: f64,
    pub step_deg: f64,
    /// Side of the square output patch.
    pub patch_size: usize,
    /// Minimum correlation of the aligned pair.
    pub min_correlation: f64,
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig {
            search_range_deg: 5.0,
            step_deg: 0.5,
            patch_size: 256,
            min_correlation: 0.2,
        }
    }
}

/// What [`align_pair_detailed`] measured for one pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    /// Rotation of the LQ field relative to the HQ field; undone by
    /// rotating the LQ field by its negative.
    pub angle_deg: f64,
    /// Translation of the rotated LQ field relative to the HQ field.
    pub shift: (i64, i64),
    /// Correlation of the final patches.
    pub correlation: f64,
}

fn centre_offset(outer: usize, inner: usize) -> usize {
    (outer - inner) / 2
}

/// Registers `lq_raw` onto `hq_raw` and cuts both to a centred square patch.
///
/// Steps: rotation estimated on centred crops of common size; the LQ field is
/// rotated and cropped to the HQ frame; the residual translation is removed
/// by re-cropping (or zero-filled translation when the LQ field has no
/// margin); finally both are centre-cropped to `patch_size`.
pub fn align_pair(id: &str, lq_raw: &Tensor, hq_raw: &Tensor, cfg: &AlignConfig) -> Result<PairedSample> {
    align_pair_detailed(id, lq_raw, hq_raw, cfg).map(|(s, _)| s)
}

pub fn align_pair_detailed(
    id: &str,
    lq_raw: &Tensor,
    hq_raw: &Tensor,
    cfg: &AlignConfig,
) -> Result<(PairedSample, Alignment)> {
    let (ls, hs) = (lq_raw.shape(), hq_raw.shape());
    if ls.n != 1 || hs.n != 1 || ls.c != hs.c {
        return Err(Error::ShapeMismatch {
            context: "align_pair inputs",
            left: ls.to_vec(),
            right: hs.to_vec(),
        });
    }
    if ls.h < hs.h || ls.w < hs.w {
        return Err(Error::invalid(format!(
            "{id}: LQ field {}x{} smaller than HQ field {}x{}",
            ls.h, ls.w, hs.h, hs.w
        )));
    }
    let p = cfg.patch_size;
    if hs.h < p || hs.w < p {
        return Err(Error::invalid(format!(
            "{id}: HQ field {}x{} smaller than patch size {p}",
            hs.h, hs.w
        )));
    }
    let mut log = Vec::new();
    let mut record = |target, transform| log.push(TransformRecord { target, transform });

    // a. rotation, measured on equally sized central crops
    let (side_h, side_w) = (hs.h, hs.w);
    let (top, left) = (centre_offset(ls.h, side_h), centre_offset(ls.w, side_w));
    let centre_crop = Transform::Crop {
        top,
        left,
        height: side_h,
        width: side_w,
    };
    let lq_centre = apply(lq_raw, &centre_crop)?;
    let (theta, _) = estimate_rotation_planes(
        &luminance(hq_raw),
        &luminance(&lq_centre),
        cfg.search_range_deg,
        cfg.step_deg,
    )?;
    let rotate = Transform::Rotate { degrees: 0.0 - theta };
    let lq_rot = apply(lq_raw, &rotate)?;
    record(Target::Lq, rotate);

    // b-c. crop to the HQ frame, then measure the residual translation
    let lq_frame = apply(&lq_rot, &centre_crop)?;
    let (dy, dx) = estimate_shift(hq_raw, &lq_frame)?;

    // d. lq_frame(y) ≈ hq(y - d), so read the LQ field at y + d; when the
    // shifted window leaves the LQ field, fall back to a zero-filled shift
    let (t2, l2) = (top as i64 + dy, left as i64 + dx);
    let fits = t2 >= 0 && l2 >= 0 && t2 as usize + side_h <= ls.h && l2 as usize + side_w <= ls.w;
    let lq_aligned = if fits {
        let crop = Transform::Crop {
            top: t2 as usize,
            left: l2 as usize,
            height: side_h,
            width: side_w,
        };
        record(Target::Lq, crop);
        apply(&lq_rot, &crop)?
    } else {
        record(Target::Lq, centre_crop);
        let translate = Transform::Translate { dy: -dy, dx: -dx };
        record(Target::Lq, translate);
        apply(&lq_frame, &translate)?
    };

    // final square patch
    let final_crop = Transform::Crop {
        top: centre_offset(side_h, p),
        left: centre_offset(side_w, p),
        height: p,
        width: p,
    };
    let lq = apply(&lq_aligned, &final_crop)?;
    let hq = apply(hq_raw, &final_crop)?;
    record(Target::Both, final_crop);

    let correlation = normalized_cross_correlation(&luminance(&lq), &luminance(&hq))?;
    if correlation < cfg.min_correlation {
        return Err(Error::Unalignable {
            id: id.to_string(),
            correlation,
            threshold: cfg.min_correlation,
        });
    }
    let sample = PairedSample {
        lq: lq.clamp(0.0, 1.0),
        hq: hq.clamp(0.0, 1.0),
        id: id.to_string(),
        transform_log: log,
    };
    let info = Alignment {
        angle_deg: theta,
        shift: (dy, dx),
        correlation,
    };
    Ok((sample, info))
}

/// Index pair with the highest correlation across the two z-stacks; ties
/// keep the first pair in row-major order.
pub fn select_best_z(stack_a: &[Tensor], stack_b: &[Tensor]) -> Result<(usize, usize)> {
    if stack_a.is_empty() || stack_b.is_empty() {
        return Err(Error::Empty("z-stack".into()));
    }
    let la: Vec<_> = stack_a.iter().map(luminance).collect();
    let lb: Vec<_> = stack_b.iter().map(luminance).collect();
    let mut best = ((0, 0), f64::NEG_INFINITY);
    for (i, a) in la.iter().enumerate() {
        for (j, b) in lb.iter().enumerate() {
            let score = match normalized_cross_correlation(a, b) {
                Ok(s) => s,
                Err(Error::Degenerate(_)) => f64::NEG_INFINITY,
                Err(e) => return Err(e),
            };
            if score > best.1 {
                best = ((i, j), score);
            }
        }
    }
    Ok(best.0)
}
