use std::f64::consts::PI;

use rand::Rng as _;

use super::*;
use crate::rng;

fn random_image(h: usize, w: usize, seed: u64) -> ComplexImage {
    let mut r = rng::stream(seed, &["test-image"]);
    let re = (0..h * w).map(|_| r.gen_range(-1.0..1.0)).collect();
    let im = (0..h * w).map(|_| r.gen_range(-1.0..1.0)).collect();
    ComplexImage::new(h, w, re, im, Domain::Image).unwrap()
}

/// Direct O(N^4) centered orthonormal DFT.
fn naive_dft(x: &ComplexImage) -> ComplexImage {
    let (h, w) = x.dims();
    let mut out = ComplexImage::zeros(h, w, Domain::Kspace);
    let norm = 1.0 / ((h * w) as f64).sqrt();
    for u in 0..h {
        for v in 0..w {
            let (mut sr, mut si) = (0.0, 0.0);
            for y in 0..h {
                for xx in 0..w {
                    let phase = -2.0
                        * PI
                        * ((u as f64 - (h / 2) as f64) * (y as f64 - (h / 2) as f64) / h as f64
                            + (v as f64 - (w / 2) as f64) * (xx as f64 - (w / 2) as f64) / w as f64);
                    let (c, s) = (phase.cos(), phase.sin());
                    let (a, b) = (x.re[y * w + xx], x.im[y * w + xx]);
                    sr += a * c - b * s;
                    si += a * s + b * c;
                }
            }
            out.re[u * w + v] = sr * norm;
            out.im[u * w + v] = si * norm;
        }
    }
    out
}

fn max_diff(a: &ComplexImage, b: &ComplexImage) -> f64 {
    a.re.iter()
        .zip(&b.re)
        .chain(a.im.iter().zip(&b.im))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn fft_roundtrip() {
    let x = random_image(32, 32, 1);
    let back = ifft2(&fft2(&x).unwrap()).unwrap();
    assert!(max_diff(&x, &back) <= 1e-10);
}

#[test]
fn centered_impulse_has_flat_spectrum() {
    let mut x = ComplexImage::zeros(16, 8, Domain::Image);
    x.re[8 * 8 + 4] = 1.0;
    let k = fft2(&x).unwrap();
    let expected = 1.0 / (128f64).sqrt();
    for m in k.magnitude() {
        assert!((m - expected).abs() < 1e-14);
    }
    // real, positive DC for a centered impulse
    assert!((k.re[8 * 8 + 4] - expected).abs() < 1e-14);
}

#[test]
fn fft_matches_naive_dft_and_parseval() {
    let x = random_image(8, 8, 2);
    let fast = fft2(&x).unwrap();
    let slow = naive_dft(&x);
    assert!(max_diff(&fast, &slow) <= 1e-10);
    let rel = (x.energy() - slow.energy()).abs() / x.energy();
    assert!(rel <= 1e-10);
    let rel_fast = (x.energy() - fast.energy()).abs() / x.energy();
    assert!(rel_fast <= 1e-10);
}

#[test]
fn non_power_of_two_is_rejected() {
    let x = ComplexImage::zeros(12, 16, Domain::Image);
    assert!(matches!(fft2(&x), Err(Error::Config(_))));
}

#[test]
fn undersample_respects_mask() {
    let x = random_image(16, 16, 3);
    let full = undersample(&x, &SamplingMask::full(16)).unwrap();
    assert_eq!(full, fft2(&x).unwrap());
    let none = undersample(&x, &SamplingMask::empty(16)).unwrap();
    assert!(none.re.iter().chain(&none.im).all(|&v| v == 0.0));
    let m = make_cartesian_mask(16, 4, 0.125, 9).unwrap();
    let s = undersample(&x, &m).unwrap();
    for (i, (&re, &im)) in s.re.iter().zip(&s.im).enumerate() {
        if !m.columns[i % 16] {
            assert_eq!((re, im), (0.0, 0.0));
        }
    }
    let ks = fft2(&x).unwrap();
    assert!(undersample(&ks, &m).is_err());
}

#[test]
fn hard_dc_replaces_exactly_sampled_columns() {
    let pred = fft2(&random_image(16, 16, 4)).unwrap();
    let truth = random_image(16, 16, 5);
    let m = make_cartesian_mask(16, 4, 0.125, 1).unwrap();
    let s = undersample(&truth, &m).unwrap();
    let out = data_consistency(&pred, &s, &m).unwrap();
    for i in 0..256 {
        let src = if m.columns[i % 16] { &s } else { &pred };
        assert_eq!(out.re[i].to_bits(), src.re[i].to_bits());
        assert_eq!(out.im[i].to_bits(), src.im[i].to_bits());
    }
    assert_eq!(data_consistency(&out, &s, &m).unwrap(), out);
    let full = SamplingMask::full(16);
    let s_full = undersample(&truth, &full).unwrap();
    assert_eq!(data_consistency(&pred, &s_full, &full).unwrap(), s_full);
    assert_eq!(data_consistency(&pred, &s, &SamplingMask::empty(16)).unwrap(), pred);
}

#[test]
fn network_packing_roundtrips() {
    let x = random_image(8, 16, 6);
    let t = x.to_network();
    assert_eq!(t.shape(), &[1, 2, 8, 16]);
    assert_eq!(ComplexImage::from_network(&t, 0).unwrap(), x);
    let mag_t: Vec<f64> = (0..128).map(|i| t.data()[i].hypot(t.data()[128 + i])).collect();
    for (a, b) in mag_t.iter().zip(x.magnitude()) {
        assert!((a - b).abs() < 1e-12);
    }
    let real = ComplexImage::from_real(4, 4, vec![1.0; 16]).unwrap();
    assert!(real.to_network().data()[16..].iter().all(|&v| v == 0.0));
    let three = Tensor::zeros(&[1, 3, 4, 4]);
    assert!(ComplexImage::from_network(&three, 0).is_err());
}

#[test]
fn dc_layer_matches_pointwise_projection() {
    let x = random_image(16, 16, 7);
    let truth = random_image(16, 16, 8);
    let m = make_cartesian_mask(16, 4, 0.125, 2).unwrap();
    let s = undersample(&truth, &m).unwrap();
    let mut g = Graph::new();
    let v = g.input(x.to_network());
    let out = dc_layer(&mut g, v, std::slice::from_ref(&s), std::slice::from_ref(&m), None).unwrap();
    let img = ComplexImage::from_network(g.value(out), 0).unwrap();
    let reference = ifft2(&data_consistency(&fft2(&x).unwrap(), &s, &m).unwrap()).unwrap();
    assert!(max_diff(&img, &reference) < 1e-14);
}
