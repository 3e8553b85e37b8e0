use std::fmt::{self, Write as _};
use std::path::Path;

use serde::Serialize;

use super::boxplot::MetricDistribution;
use super::rank::{dunn_test, kruskal_wallis, DunnTest, KruskalWallis};
use crate::dataset::{DatasetManifest, PairedSample, Split};
use crate::error::{Error, Result};
use crate::gan::Generator;
use crate::metrics::{compare, format_value, parse_value, Metric, MetricReport, SsimOptions};
use crate::psf::{deconvolve_channels, Psf};

pub const METRICS_HEADER: &str = "comparison,mse,nrmse,ssim,psnr";

/// What is compared against the HQ target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Comparison {
    LqVsHq,
    GenVsHq,
    DeconvVsHq,
}

impl Comparison {
    pub const ALL: [Comparison; 3] = [Comparison::LqVsHq, Comparison::GenVsHq, Comparison::DeconvVsHq];

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.label() == label)
    }

    /// Name of the image compared against HQ.
    pub fn test_name(self) -> &'static str {
        match self {
            Comparison::LqVsHq => "LQ",
            Comparison::GenVsHq => "GEN",
            Comparison::DeconvVsHq => "DECONV",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Comparison::LqVsHq => "LQ-vs-HQ",
            Comparison::GenVsHq => "GEN-vs-HQ",
            Comparison::DeconvVsHq => "DECONV-vs-HQ",
        }
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Richardson-Lucy baseline: one PSF per channel.
#[derive(Clone, Copy, Debug)]
pub struct Deconvolution<'a> {
    pub psfs: &'a [Psf],
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalRow {
    pub comparison: Comparison,
    pub id: String,
    pub report: MetricReport,
}

impl EvalRow {
    pub fn csv_line(&self) -> String {
        let r = &self.report;
        let mut s = format!("{}:{}", self.comparison, self.id);
        for v in [r.mse, r.nrmse, r.ssim, r.psnr] {
            write!(s, ",{}", format_value(v)).expect("writing to a String");
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalFailure {
    pub id: String,
    /// `None` when the pair itself could not be loaded.
    pub comparison: Option<Comparison>,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Evaluation {
    pub rows: Vec<EvalRow>,
    pub failures: Vec<EvalFailure>,
}

impl Evaluation {
    pub fn to_csv(&self) -> String {
        rows_to_csv(&self.rows)
    }

    pub fn comparisons(&self) -> Vec<Comparison> {
        let mut c: Vec<Comparison> = self.rows.iter().map(|r| r.comparison).collect();
        c.sort();
        c.dedup();
        c
    }

    pub fn values(&self, comparison: Comparison, metric: Metric) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.comparison == comparison)
            .map(|r| r.report.metric(metric))
            .collect()
    }

    /// Median of one metric over the rows of one comparison, infinities
    /// included; `None` without rows.
    pub fn median(&self, comparison: Comparison, metric: Metric) -> Option<f64> {
        let mut v = self.values(comparison, metric);
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let m = v.len() / 2;
        Some(if v.len() % 2 == 1 || v[m - 1] == v[m] {
            v[m]
        } else {
            (v[m - 1] + v[m]) / 2.0
        })
    }

    /// Box-plot distributions, metric-major then comparison. Non-finite
    /// values (the PSNR of identical images) are left out; a distribution
    /// with no finite value is omitted.
    pub fn distributions(&self) -> Result<Vec<MetricDistribution>> {
        let mut out = Vec::new();
        for metric in Metric::ALL {
            for c in self.comparisons() {
                let v: Vec<f64> = self.values(c, metric).into_iter().filter(|v| v.is_finite()).collect();
                if !v.is_empty() {
                    out.push(MetricDistribution::new(metric, c.label(), v)?);
                }
            }
        }
        Ok(out)
    }

    /// Kruskal-Wallis across the comparisons present, then Dunn's test.
    pub fn significance(&self, metric: Metric) -> Result<(KruskalWallis, DunnTest)> {
        let groups: Vec<Vec<f64>> = self
            .comparisons()
            .into_iter()
            .map(|c| self.values(c, metric).into_iter().filter(|v| v.is_finite()).collect())
            .collect();
        Ok((kruskal_wallis(&groups)?, dunn_test(&groups)?))
    }
}

/// Inverse of [`rows_to_csv`].
pub fn parse_metrics_csv(text: &str) -> Result<Vec<EvalRow>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(METRICS_HEADER) {
        return Err(Error::invalid(format!("metrics table must start with `{METRICS_HEADER}`")));
    }
    let bad = |n: usize, line: &str| Error::invalid(format!("metrics line {}: `{line}`", n + 2));
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        let (label, id) = fields[0].split_once(':').ok_or_else(|| bad(n, line))?;
        let comparison = Comparison::from_label(label).ok_or_else(|| bad(n, line))?;
        let values: Option<Vec<f64>> = fields[1..].iter().map(|f| parse_value(f)).collect();
        let v = values.filter(|v| v.len() == 4).ok_or_else(|| bad(n, line))?;
        rows.push(EvalRow {
            comparison,
            id: id.to_string(),
            report: MetricReport {
                name_a: "HQ".into(),
                name_b: comparison.test_name().into(),
                mse: v[0],
                nrmse: v[1],
                ssim: v[2],
                psnr: v[3],
            },
        });
    }
    Ok(rows)
}

pub fn rows_to_csv(rows: &[EvalRow]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv_line());
        s.push('\n');
    }
    s
}

fn evaluate_pair(
    sample: &PairedSample,
    generator: Option<&Generator>,
    deconv: Option<&Deconvolution<'_>>,
    opts: &SsimOptions,
    out: &mut Evaluation,
) {
    let mut emit = |comparison: Comparison, result: Result<MetricReport>| match result {
        Ok(report) => out.rows.push(EvalRow {
            comparison,
            id: sample.id.clone(),
            report,
        }),
        Err(e) => out.failures.push(EvalFailure {
            id: sample.id.clone(),
            comparison: Some(comparison),
            message: e.to_string(),
        }),
    };
    let hq = &sample.hq;
    emit(Comparison::LqVsHq, compare("HQ", hq, Comparison::LqVsHq.test_name(), &sample.lq, opts));
    if let Some(g) = generator {
        let r = g
            .forward(&sample.lq)
            .and_then(|gx| compare("HQ", hq, Comparison::GenVsHq.test_name(), &gx.clamp(0.0, 1.0), opts));
        emit(Comparison::GenVsHq, r);
    }
    if let Some(d) = deconv {
        let r = deconvolve_channels(&sample.lq, d.psfs, d.iterations)
            .and_then(|dx| compare("HQ", hq, Comparison::DeconvVsHq.test_name(), &dx.clamp(0.0, 1.0), opts));
        emit(Comparison::DeconvVsHq, r);
    }
}

/// Rows for every sample: LQ against HQ always, generated and deconvolved
/// outputs (clamped to `[0, 1]`) when requested. Failures are collected and
/// the run continues.
pub fn evaluate_samples(
    samples: &[PairedSample],
    generator: Option<&Generator>,
    deconv: Option<&Deconvolution<'_>>,
    opts: &SsimOptions,
) -> Evaluation {
    let mut out = Evaluation::default();
    for s in samples {
        evaluate_pair(s, generator, deconv, opts, &mut out);
    }
    out
}

/// Evaluates one split of a prepared dataset; unreadable pairs become
/// failures rather than aborting.
pub fn evaluate_dataset(
    manifest: &DatasetManifest,
    root: impl AsRef<Path>,
    split: Split,
    generator: Option<&Generator>,
    deconv: Option<&Deconvolution<'_>>,
    opts: &SsimOptions,
) -> Result<Evaluation> {
    let root = root.as_ref();
    if manifest.count(split) == 0 {
        return Err(Error::Empty(format!("{split} split")));
    }
    let mut out = Evaluation::default();
    for entry in manifest.entries_in(split) {
        match entry.load(root) {
            Ok(sample) => evaluate_pair(&sample, generator, deconv, opts, &mut out),
            Err(e) => out.failures.push(EvalFailure {
                id: entry.id.clone(),
                comparison: None,
                message: e.to_string(),
            }),
        }
    }
    Ok(out)
}
