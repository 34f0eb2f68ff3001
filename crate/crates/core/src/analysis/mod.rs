//! Measurements of a translation: fuzz-thresholded difference images, MSE,
//! PSNR and SSIM, channel statistics of average images, and report tables.

mod channels;
mod diff;
mod metrics;
mod report;

use thiserror::Error;

pub use channels::{
    amplified_change_image, channel_stats, percent_difference, ChannelStats, DEFAULT_GAIN,
};
pub use diff::{change_proportion, color_distance, diff_image, DiffImage, DEFAULT_FUZZ};
pub use metrics::{
    batch_metrics, luma, mse, psnr, psnr_from_mse, ssim, Metrics, PSNR_CAP_DB, SSIM_C1, SSIM_C2,
    SSIM_SIGMA, SSIM_WINDOW,
};
pub use report::{
    display_round, parse_csv_report, render_report, write_metric_dump, ChannelStatsRow,
    MetricRow, ReportFormat, TranslationReport, UNDEFINED,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("image dimensions differ: {a:?} vs {b:?}")]
    Dimensions { a: (u32, u32), b: (u32, u32) },
    #[error("fuzz must lie in [0, 1], got {0}")]
    Fuzz(f64),
    #[error("gain must be positive, got {0}")]
    Gain(f64),
    #[error("{width}×{height} image is smaller than the {window}×{window} SSIM window")]
    TooSmall { width: u32, height: u32, window: u32 },
    #[error("no image pairs to measure")]
    Empty,
    #[error("report: {0}")]
    Report(String),
}

fn same_dims(a: (u32, u32), b: (u32, u32)) -> Result<(), AnalysisError> {
    if a == b {
        Ok(())
    } else {
        Err(AnalysisError::Dimensions { a, b })
    }
}

#[cfg(test)]
mod props;
