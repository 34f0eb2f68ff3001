use rayon::prelude::*;

use crate::dataset::ImageBuffer;

use super::diff::change_proportion;
use super::{same_dims, AnalysisError};

/// PSNR reported for identical images.
pub const PSNR_CAP_DB: f64 = 100.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
pub const SSIM_C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

/// Mean squared difference over all pixels and channels, 0–255 scale.
pub fn mse(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64, AnalysisError> {
    same_dims(a.dims(), b.dims())?;
    let sum: u64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| {
            let d = x.abs_diff(*y) as u64;
            d * d
        })
        .sum();
    Ok(sum as f64 / a.data().len().max(1) as f64)
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        PSNR_CAP_DB
    } else {
        10.0 * (255.0 * 255.0 / mse).log10()
    }
}

pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64, AnalysisError> {
    mse(a, b).map(psnr_from_mse)
}

/// Row-major luma plane, `0.299 R + 0.587 G + 0.114 B`.
pub fn luma(img: &ImageBuffer) -> Vec<f64> {
    img.pixels()
        .map(|[r, g, b]| 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64)
        .collect()
}

fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let c = (SSIM_WINDOW / 2) as f64;
    let mut taps = [0.0; SSIM_WINDOW];
    for (i, t) in taps.iter_mut().enumerate() {
        let d = i as f64 - c;
        *t = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = taps.iter().sum();
    taps.map(|t| t / sum)
}

/// Valid-mode separable filtering of a `w × h` plane.
fn filter(plane: &[f64], w: usize, h: usize, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        let line = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().zip(&line[x..]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * rows[(y + k) * ow + x])
                .sum();
        }
    }
    out
}

/// Mean SSIM over all valid 11×11 Gaussian windows of the luma planes.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64, AnalysisError> {
    same_dims(a.dims(), b.dims())?;
    let (w, h) = (a.width() as usize, a.height() as usize);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(AnalysisError::TooSmall {
            width: a.width(),
            height: a.height(),
            window: SSIM_WINDOW as u32,
        });
    }
    let (x, y) = (luma(a), luma(b));
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
    let taps = gaussian_taps();
    let [mx, my, sxx, syy, sxy] = [&x, &y, &xx, &yy, &xy].map(|p| filter(p, w, h, &taps));
    let n = mx.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cov = sxy[i] - ux * uy;
            ((2.0 * ux * uy + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((ux * ux + uy * uy + SSIM_C1) * (vx + vy + SSIM_C2))
        })
        .sum();
    Ok(total / n as f64)
}

/// Averages over a set of (original, translated) pairs. PSNR is computed per
/// pair and then averaged.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub change_proportion: f64,
    pub mse: f64,
    pub psnr: f64,
    pub ssim: f64,
}

pub fn batch_metrics(
    pairs: &[(ImageBuffer, ImageBuffer)],
    fuzz: f64,
) -> Result<Metrics, AnalysisError> {
    if pairs.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let per_pair = pairs
        .par_iter()
        .map(|(o, t)| {
            let m = mse(o, t)?;
            Ok([change_proportion(o, t, fuzz)?, m, psnr_from_mse(m), ssim(o, t)?])
        })
        .collect::<Result<Vec<[f64; 4]>, AnalysisError>>()?;
    let mut sum = [0.0; 4];
    for row in &per_pair {
        for (s, v) in sum.iter_mut().zip(row) {
            *s += v;
        }
    }
    let n = pairs.len() as f64;
    Ok(Metrics {
        change_proportion: sum[0] / n,
        mse: sum[1] / n,
        psnr: sum[2] / n,
        ssim: sum[3] / n,
    })
}
