//! Centered, orthonormal radix-2 2-D FFT.
//!
//! k-space is stored with DC at `(H/2, W/2)`. For even extents the forward and
//! inverse quadrant shifts coincide, so a single swap serves both.

use std::f64::consts::PI;

use super::image::{ComplexImage, Domain};
use crate::error::{Error, Result};

pub fn check_extent(n: usize) -> Result<()> {
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::Config(format!(
            "FFT extent {n} is not a power of two"
        )));
    }
    Ok(())
}

/// In-place iterative radix-2 transform of one line, unnormalised.
/// `inverse` selects the positive exponent.
fn fft_line(re: &mut [f64], im: &mut [f64], inverse: bool) {
    let n = re.len();
    let mut j = 0;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let ang = sign * 2.0 * PI / len as f64;
        let half = len / 2;
        // twiddles computed directly per index to avoid drift from recurrence
        let tw: Vec<(f64, f64)> = (0..half).map(|k| ((ang * k as f64).cos(), (ang * k as f64).sin())).collect();
        for start in (0..n).step_by(len) {
            for (k, &(wr, wi)) in tw.iter().enumerate() {
                let a = start + k;
                let b = a + half;
                let tr = re[b] * wr - im[b] * wi;
                let ti = re[b] * wi + im[b] * wr;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
            }
        }
        len <<= 1;
    }
}

fn shift(data: &mut [f64], h: usize, w: usize) {
    let (hh, hw) = (h / 2, w / 2);
    for y in 0..hh {
        for x in 0..w {
            let a = y * w + x;
            let b = (y + hh) * w + (x + hw) % w;
            data.swap(a, b);
        }
    }
}

fn transform(src: &ComplexImage, inverse: bool) -> Result<ComplexImage> {
    let (h, w) = src.dims();
    check_extent(h)?;
    check_extent(w)?;
    let mut re = src.re.clone();
    let mut im = src.im.clone();
    shift(&mut re, h, w);
    shift(&mut im, h, w);
    for y in 0..h {
        fft_line(&mut re[y * w..(y + 1) * w], &mut im[y * w..(y + 1) * w], inverse);
    }
    let (mut cr, mut ci) = (vec![0.0; h], vec![0.0; h]);
    for x in 0..w {
        for y in 0..h {
            cr[y] = re[y * w + x];
            ci[y] = im[y * w + x];
        }
        fft_line(&mut cr, &mut ci, inverse);
        for y in 0..h {
            re[y * w + x] = cr[y];
            im[y * w + x] = ci[y];
        }
    }
    shift(&mut re, h, w);
    shift(&mut im, h, w);
    let norm = 1.0 / ((h * w) as f64).sqrt();
    re.iter_mut().chain(im.iter_mut()).for_each(|v| *v *= norm);
    let domain = if inverse { Domain::Image } else { Domain::Kspace };
    ComplexImage::new(h, w, re, im, domain)
}

/// Image to centered k-space.
pub fn fft2(img: &ComplexImage) -> Result<ComplexImage> {
    transform(img, false)
}

/// Centered k-space to image.
pub fn ifft2(ks: &ComplexImage) -> Result<ComplexImage> {
    transform(ks, true)
}
