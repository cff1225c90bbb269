//! Reconstruction quality metrics, error maps, learner weight summaries and
//! parameter-count reports.

mod counts;
mod report;

use serde::{Deserialize, Serialize};

pub use counts::{count_report, write_count_csv, CountRow, Scale};
pub use report::{learner_weight_summary, write_weight_csv, AnatomyMetrics, MetricReport, WeightRow};

use crate::error::{Error, Result};
use crate::kspace::ComplexImage;

/// PSNR reported for identical images.
pub const PSNR_CAP: f64 = 99.0;

fn check_pair(op: &'static str, recon: &[f64], target: &[f64]) -> Result<()> {
    if recon.len() != target.len() || target.is_empty() {
        return Err(Error::shape(op, format!("{} vs {} values", recon.len(), target.len())));
    }
    Ok(())
}

/// Maps both images by the target's min/max onto [0, 1] (target range).
pub fn rescale_pair(recon: &[f64], target: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let lo = target.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = target.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let f = |v: &f64| (v - lo) / span;
    (recon.iter().map(f).collect(), target.iter().map(f).collect())
}

/// PSNR in dB with a data range of 1 after [`rescale_pair`]. Identical
/// inputs give [`PSNR_CAP`].
pub fn psnr(recon: &[f64], target: &[f64]) -> Result<f64> {
    check_pair("psnr", recon, target)?;
    let (r, t) = rescale_pair(recon, target);
    let mse = r.iter().zip(&t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / t.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SsimWindow {
    Gaussian { size: usize, sigma: f64 },
    Uniform { size: usize },
}

impl Default for SsimWindow {
    fn default() -> Self {
        SsimWindow::Gaussian { size: 11, sigma: 1.5 }
    }
}

impl SsimWindow {
    pub fn size(&self) -> usize {
        match *self {
            SsimWindow::Gaussian { size, .. } | SsimWindow::Uniform { size } => size,
        }
    }

    /// Normalized 1-D taps; the 2-D window is their outer product.
    pub fn taps(&self) -> Vec<f64> {
        let w: Vec<f64> = match *self {
            SsimWindow::Gaussian { size, sigma } => {
                let c = (size as f64 - 1.0) / 2.0;
                (0..size)
                    .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
                    .collect()
            }
            SsimWindow::Uniform { size } => vec![1.0; size],
        };
        let s: f64 = w.iter().sum();
        w.into_iter().map(|v| v / s).collect()
    }
}

pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Valid-region separable filter.
fn filter(img: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for i in 0..h {
        for j in 0..ow {
            rows[i * ow + j] = taps.iter().enumerate().map(|(t, c)| c * img[i * w + j + t]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for i in 0..oh {
        for j in 0..ow {
            out[i * ow + j] = taps.iter().enumerate().map(|(t, c)| c * rows[(i + t) * ow + j]).sum();
        }
    }
    out
}

/// Mean structural similarity over every window fully inside the image,
/// on magnitudes rescaled by the target's range.
pub fn ssim(recon: &[f64], target: &[f64], height: usize, width: usize, window: SsimWindow) -> Result<f64> {
    check_pair("ssim", recon, target)?;
    if target.len() != height * width {
        return Err(Error::shape("ssim", format!("{} values for {height}x{width}", target.len())));
    }
    let k = window.size();
    if k == 0 || height < k || width < k {
        return Err(Error::shape("ssim", format!("{height}x{width} image is smaller than the {k}x{k} window")));
    }
    let (x, y) = rescale_pair(recon, target);
    let taps = window.taps();
    let prod = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).collect::<Vec<f64>>();
    let mx = filter(&x, height, width, &taps);
    let my = filter(&y, height, width, &taps);
    let exx = filter(&prod(&x, &x), height, width, &taps);
    let eyy = filter(&prod(&y, &y), height, width, &taps);
    let exy = filter(&prod(&x, &y), height, width, &taps);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let total: f64 = (0..mx.len())
        .map(|i| {
            let (a, b) = (mx[i], my[i]);
            let sxx = exx[i] - a * a;
            let syy = eyy[i] - b * b;
            let sxy = exy[i] - a * b;
            ((2.0 * a * b + c1) * (2.0 * sxy + c2)) / ((a * a + b * b + c1) * (sxx + syy + c2))
        })
        .sum();
    Ok(total / mx.len() as f64)
}

/// PSNR and SSIM of two complex images on their magnitudes.
pub fn image_metrics(recon: &ComplexImage, target: &ComplexImage, window: SsimWindow) -> Result<(f64, f64)> {
    if !recon.same_shape(target) {
        return Err(Error::shape("image_metrics", format!("{:?} vs {:?}", recon.dims(), target.dims())));
    }
    let (r, t) = (recon.magnitude(), target.magnitude());
    let (h, w) = target.dims();
    Ok((psnr(&r, &t)?, ssim(&r, &t, h, w, window)?))
}

/// `|recon - target|` after [`rescale_pair`], clipped at `clip`.
pub fn error_map(recon: &[f64], target: &[f64], clip: f64) -> Result<Vec<f64>> {
    check_pair("error_map", recon, target)?;
    let (r, t) = rescale_pair(recon, target);
    Ok(r.iter().zip(&t).map(|(a, b)| (a - b).abs().min(clip)).collect())
}

#[cfg(test)]
mod tests;
