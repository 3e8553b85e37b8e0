use std::fmt::Write as _;

use crate::metrics::format_value;

pub const LOG_HEADER: &str = "iteration,d_loss,g_total,g_mse_part,g_ssim_part,g_bce_part,val_ssim,val_psnr";

/// One validation event of the training loop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRecord {
    pub iteration: u64,
    pub d_loss: f64,
    pub g_total: f64,
    pub g_mse_part: f64,
    pub g_ssim_part: f64,
    pub g_bce_part: f64,
    pub val_ssim: f64,
    pub val_psnr: f64,
}

impl LogRecord {
    /// Fields in header order; floats in shortest round-trip form.
    pub fn csv_line(&self) -> String {
        let mut s = self.iteration.to_string();
        for v in [
            self.d_loss,
            self.g_total,
            self.g_mse_part,
            self.g_ssim_part,
            self.g_bce_part,
            self.val_ssim,
            self.val_psnr,
        ] {
            write!(s, ",{}", format_value(v)).expect("writing to a String");
        }
        s
    }
}

pub fn to_csv(records: &[LogRecord]) -> String {
    let mut s = String::from(LOG_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&r.csv_line());
        s.push('\n');
    }
    s
}
