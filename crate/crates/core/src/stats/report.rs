use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::boxplot::MetricDistribution;
use super::evaluate::{rows_to_csv, EvalRow};
use crate::error::{Error, Result};
use crate::metrics::{format_value, Metric};

pub const SUMMARY_HEADER: &str = "label,median,q1,q3,whisker_low,whisker_high,n_outliers";

const PLOT_HEIGHT: f64 = 320.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;
const SLOT: f64 = 110.0;
const BOX_WIDTH: f64 = 50.0;
const TICKS: usize = 5;

pub fn summary_csv(distributions: &[MetricDistribution]) -> String {
    let mut s = String::from(SUMMARY_HEADER);
    s.push('\n');
    for d in distributions {
        let b = &d.summary;
        write!(s, "{}:{}", d.metric.name(), d.label).expect("writing to a String");
        for v in [b.median, b.q1, b.q3, b.whisker_low, b.whisker_high] {
            write!(s, ",{}", format_value(v)).expect("writing to a String");
        }
        writeln!(s, ",{}", b.outliers.len()).expect("writing to a String");
    }
    s
}

fn escape(text: &str) -> String {
    let mut s = String::with_capacity(text.len());
    for ch in text.chars() {
        match ch {
            '&' => s.push_str("&amp;"),
            '<' => s.push_str("&lt;"),
            '>' => s.push_str("&gt;"),
            '"' => s.push_str("&quot;"),
            '\'' => s.push_str("&apos;"),
            c => s.push(c),
        }
    }
    s
}

/// Box plot of every distribution of one metric, one box per label.
pub fn render_svg(metric: Metric, distributions: &[&MetricDistribution]) -> String {
    let values = distributions.iter().flat_map(|d| d.values.iter().copied());
    let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        lo -= pad;
        hi += pad;
    }
    let pad = (hi - lo) * 0.05;
    let (lo, hi) = (lo - pad, hi + pad);
    let y = |v: f64| MARGIN_TOP + (hi - v) / (hi - lo) * PLOT_HEIGHT;

    let width = MARGIN_LEFT + SLOT * distributions.len().max(1) as f64 + 20.0;
    let height = MARGIN_TOP + PLOT_HEIGHT + MARGIN_BOTTOM;
    let axis_bottom = MARGIN_TOP + PLOT_HEIGHT;
    let mut s = String::new();
    let w = &mut s;
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(w, r#"<rect x="0" y="0" width="{width:.0}" height="{height:.0}" fill="white"/>"#);
    let _ = writeln!(
        w,
        r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        width / 2.0,
        metric.name().to_uppercase()
    );
    let _ = writeln!(
        w,
        r#"<line x1="{MARGIN_LEFT:.1}" y1="{MARGIN_TOP:.1}" x2="{MARGIN_LEFT:.1}" y2="{axis_bottom:.1}" stroke="black"/>"#
    );
    let _ = writeln!(
        w,
        r#"<line x1="{MARGIN_LEFT:.1}" y1="{axis_bottom:.1}" x2="{:.1}" y2="{axis_bottom:.1}" stroke="black"/>"#,
        width - 10.0
    );
    for i in 0..=TICKS {
        let v = lo + (hi - lo) * i as f64 / TICKS as f64;
        let ty = y(v);
        let _ = writeln!(
            w,
            r#"<line x1="{:.1}" y1="{ty:.1}" x2="{MARGIN_LEFT:.1}" y2="{ty:.1}" stroke="black"/>"#,
            MARGIN_LEFT - 5.0
        );
        let _ = writeln!(
            w,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            MARGIN_LEFT - 8.0,
            ty + 4.0,
            format_tick(v)
        );
    }
    for (k, d) in distributions.iter().enumerate() {
        let b = &d.summary;
        let cx = MARGIN_LEFT + SLOT * (k as f64 + 0.5);
        let (left, right) = (cx - BOX_WIDTH / 2.0, cx + BOX_WIDTH / 2.0);
        let _ = writeln!(w, r#"<g class="box" data-label="{}">"#, escape(&d.label));
        let _ = writeln!(
            w,
            r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="black"/>"#,
            y(b.whisker_high),
            y(b.q3)
        );
        let _ = writeln!(
            w,
            r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="black"/>"#,
            y(b.q1),
            y(b.whisker_low)
        );
        for v in [b.whisker_low, b.whisker_high] {
            let _ = writeln!(
                w,
                r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black"/>"#,
                cx - BOX_WIDTH / 4.0,
                y(v),
                cx + BOX_WIDTH / 4.0,
                y(v)
            );
        }
        let _ = writeln!(
            w,
            r#"<rect x="{left:.1}" y="{:.1}" width="{BOX_WIDTH:.1}" height="{:.1}" fill="lightsteelblue" stroke="black"/>"#,
            y(b.q3),
            y(b.q1) - y(b.q3)
        );
        let _ = writeln!(
            w,
            r#"<line x1="{left:.1}" y1="{:.1}" x2="{right:.1}" y2="{:.1}" stroke="black" stroke-width="2"/>"#,
            y(b.median),
            y(b.median)
        );
        for &o in &b.outliers {
            let _ = writeln!(
                w,
                r#"<circle cx="{cx:.1}" cy="{:.1}" r="3" fill="none" stroke="black"/>"#,
                y(o)
            );
        }
        let _ = writeln!(
            w,
            r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            axis_bottom + 20.0,
            escape(&d.label)
        );
        let _ = writeln!(w, "</g>");
    }
    s.push_str("</svg>\n");
    s
}

fn format_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn write(path: PathBuf, contents: &str) -> Result<PathBuf> {
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes `metrics.csv`, `summary.csv` and `<metric>.svg` for every metric
/// with at least one distribution. Returns the files written.
pub fn render_report(rows: &[EvalRow], distributions: &[MetricDistribution], out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = vec![
        write(dir.join("metrics.csv"), &rows_to_csv(rows))?,
        write(dir.join("summary.csv"), &summary_csv(distributions))?,
    ];
    for metric in Metric::ALL {
        let of_metric: Vec<&MetricDistribution> = distributions.iter().filter(|d| d.metric == metric).collect();
        if !of_metric.is_empty() {
            let name = format!("{}.svg", metric.name());
            written.push(write(dir.join(name), &render_svg(metric, &of_metric))?);
        }
    }
    Ok(written)
}
