use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::Metric;

/// Five-number box summary with Tukey whiskers.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoxStats {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    /// Most extreme observations within `1.5·IQR` of the box.
    pub whisker_low: f64,
    pub whisker_high: f64,
    /// Values beyond the whiskers, ascending.
    pub outliers: Vec<f64>,
}

/// Values of one metric for one comparison class, with their summary.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricDistribution {
    pub metric: Metric,
    pub label: String,
    pub values: Vec<f64>,
    pub summary: BoxStats,
}

impl MetricDistribution {
    pub fn new(metric: Metric, label: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let summary = boxplot_stats(&values)?;
        Ok(MetricDistribution {
            metric,
            label: label.into(),
            values,
            summary,
        })
    }
}

/// Linear-interpolation quantile (type 7) of ascending `sorted`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if frac == 0.0 || lo + 1 >= sorted.len() {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

pub fn boxplot_stats(values: &[f64]) -> Result<BoxStats> {
    if values.is_empty() {
        return Err(Error::Empty("box plot values".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("box plot values".into()));
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&s, 0.25);
    let median = quantile_sorted(&s, 0.5);
    let q3 = quantile_sorted(&s, 0.75);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside = || s.iter().copied().filter(|&v| v >= lo_fence && v <= hi_fence);
    // The median always lies inside the fences, so `inside` is non-empty.
    let whisker_low = inside().next().unwrap_or(q1);
    let whisker_high = inside().last().unwrap_or(q3);
    let outliers = s.iter().copied().filter(|&v| v < lo_fence || v > hi_fence).collect();
    Ok(BoxStats {
        median,
        q1,
        q3,
        whisker_low,
        whisker_high,
        outliers,
    })
}
