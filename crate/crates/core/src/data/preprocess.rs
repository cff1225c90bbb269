use super::phantom::RawImage;
use crate::error::{Error, Result};
use crate::kspace::ComplexImage;

/// Clip bound applied after normalization.
pub const CLIP: f64 = 6.0;

/// Center crop or zero pad to `height` x `width`.
pub fn crop_or_pad(raw: &RawImage, height: usize, width: usize) -> RawImage {
    let mut out = vec![0.0; height * width];
    // offsets of the output window in source coordinates (may be negative)
    let oy = (raw.height as isize - height as isize) / 2;
    let ox = (raw.width as isize - width as isize) / 2;
    for i in 0..height {
        let si = i as isize + oy;
        if si < 0 || si >= raw.height as isize {
            continue;
        }
        for j in 0..width {
            let sj = j as isize + ox;
            if sj < 0 || sj >= raw.width as isize {
                continue;
            }
            out[i * width + j] = raw.data[si as usize * raw.width + sj as usize];
        }
    }
    RawImage {
        height,
        width,
        data: out,
    }
}

/// Crop/pad, z-score, clip to [-6, 6], zero phase. Already processed
/// slices pass through unchanged up to clip effects.
pub fn preprocess(raw: &RawImage, height: usize, width: usize) -> Result<ComplexImage> {
    if raw.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("slice holds non-finite values".into()));
    }
    let fitted = crop_or_pad(raw, height, width);
    let n = fitted.data.len() as f64;
    let mag = &fitted.data;
    let mean = mag.iter().sum::<f64>() / n;
    let var = mag.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std <= 1e-12 * mean.abs().max(1.0) {
        return Err(Error::Data("slice has zero intensity spread".into()));
    }
    let re = mag.iter().map(|v| ((v - mean) / std).clamp(-CLIP, CLIP)).collect();
    ComplexImage::from_real(height, width, re)
}
