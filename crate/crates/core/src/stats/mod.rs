//! Dataset evaluation, rank statistics and report rendering.

pub mod boxplot;
pub mod evaluate;
pub mod rank;
pub mod report;
pub mod special;

pub use boxplot::{boxplot_stats, BoxStats, MetricDistribution};
pub use evaluate::{evaluate_dataset, evaluate_samples, parse_metrics_csv, rows_to_csv, Comparison, Deconvolution, EvalFailure, EvalRow, Evaluation};
pub use rank::{dunn_test, kruskal_wallis, DunnPair, DunnTest, KruskalWallis};
pub use report::{render_report, render_svg, summary_csv};
