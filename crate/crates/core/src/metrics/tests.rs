use proptest::prelude::*;
use rand::Rng as _;

use super::*;
use crate::data::{generate_phantoms, AnatomyProfile};
use crate::learners::{Parameterization, PnKind};
use crate::models::{build_model, DccnnConfig, ModelKind, ModelSpec, UnetConfig};
use crate::rng;

fn random(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, &["metric-test"]);
    (0..n).map(|_| r.gen_range(0.0..1.0)).collect()
}

/// Per-pixel sliding-window SSIM with explicit window sums.
fn brute_ssim(x: &[f64], y: &[f64], h: usize, w: usize, weights: &[Vec<f64>]) -> f64 {
    let k = weights.len();
    let c1 = (0.01f64).powi(2);
    let c2 = (0.03f64).powi(2);
    let mut total = 0.0;
    let mut count = 0;
    for i in 0..=h - k {
        for j in 0..=w - k {
            let (mut mx, mut my) = (0.0, 0.0);
            for a in 0..k {
                for b in 0..k {
                    mx += weights[a][b] * x[(i + a) * w + j + b];
                    my += weights[a][b] * y[(i + a) * w + j + b];
                }
            }
            let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
            for a in 0..k {
                for b in 0..k {
                    let dx = x[(i + a) * w + j + b] - mx;
                    let dy = y[(i + a) * w + j + b] - my;
                    vx += weights[a][b] * dx * dx;
                    vy += weights[a][b] * dy * dy;
                    cxy += weights[a][b] * dx * dy;
                }
            }
            total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    total / count as f64
}

fn rescaled(x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let lo = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (x.iter().map(|v| (v - lo) / (hi - lo)).collect(), y.iter().map(|v| (v - lo) / (hi - lo)).collect())
}

#[test]
fn psnr_of_uniform_offset_is_20_db() {
    let mut t = random(256, 1);
    t[0] = 0.0;
    t[1] = 1.0;
    let r: Vec<f64> = t.iter().map(|v| v + 0.1).collect();
    assert!((psnr(&r, &t).unwrap() - 20.0).abs() < 1e-9);
}

#[test]
fn psnr_of_identical_images_is_capped() {
    let t = random(64, 2);
    assert_eq!(psnr(&t, &t).unwrap(), PSNR_CAP);
    assert!(psnr(&t, &t[..10]).is_err());
}

#[test]
fn psnr_matches_direct_formula() {
    for seed in 0..10 {
        let t = random(400, seed);
        let r = random(400, seed + 100);
        let lo = t.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = t.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mse = r.iter().zip(&t).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 400.0;
        let direct = 10.0 * ((hi - lo).powi(2) / mse).log10();
        assert!((psnr(&r, &t).unwrap() - direct).abs() < 1e-9);
    }
}

proptest! {
    #[test]
    fn psnr_is_invariant_to_shared_affine_maps(seed in 0u64..500, scale in 0.01f64..100.0, shift in -50.0f64..50.0) {
        let t = random(100, seed);
        let r = random(100, seed + 1);
        let f = |v: &f64| v * scale + shift;
        let a = psnr(&r, &t).unwrap();
        let b = psnr(&r.iter().map(f).collect::<Vec<_>>(), &t.iter().map(f).collect::<Vec<_>>()).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn ssim_is_symmetric_and_self_exact(seed in 0u64..500) {
        let mut a = random(24 * 24, seed);
        let mut b = random(24 * 24, seed + 7);
        prop_assert_eq!(ssim(&a, &a, 24, 24, SsimWindow::default()).unwrap(), 1.0);
        // both span [0, 1] so the target-range rescaling is the identity
        // whichever image plays the target
        for v in [&mut a, &mut b] {
            v[0] = 0.0;
            v[1] = 1.0;
        }
        let s1 = ssim(&a, &b, 24, 24, SsimWindow::default()).unwrap();
        let s2 = ssim(&b, &a, 24, 24, SsimWindow::default()).unwrap();
        prop_assert!((s1 - s2).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&s1));
    }
}

#[test]
fn ssim_matches_brute_force_windows() {
    for seed in 0..4 {
        let t = random(256, seed);
        let r: Vec<f64> = random(256, seed + 50).iter().zip(&t).map(|(n, v)| v + 0.3 * (n - 0.5)).collect();
        let (x, y) = rescaled(&r, &t);
        let uniform = vec![vec![1.0 / 64.0; 8]; 8];
        let got = ssim(&r, &t, 16, 16, SsimWindow::Uniform { size: 8 }).unwrap();
        assert!((got - brute_ssim(&x, &y, 16, 16, &uniform)).abs() < 1e-9);
        let g: Vec<f64> = (0..11).map(|i| (-((i as f64 - 5.0).powi(2)) / 4.5).exp()).collect();
        let s: f64 = g.iter().sum::<f64>().powi(2);
        let gauss: Vec<Vec<f64>> = (0..11).map(|a| (0..11).map(|b| g[a] * g[b] / s).collect()).collect();
        let got = ssim(&r, &t, 16, 16, SsimWindow::default()).unwrap();
        assert!((got - brute_ssim(&x, &y, 16, 16, &gauss)).abs() < 1e-9);
    }
}

#[test]
fn ssim_of_inverted_phantoms_is_low() {
    for p in AnatomyProfile::defaults() {
        for raw in generate_phantoms(&p, 4, 64, 64, 3).unwrap() {
            let inv: Vec<f64> = raw.data.iter().map(|v| 1.0 - v).collect();
            let s = ssim(&inv, &raw.data, 64, 64, SsimWindow::default()).unwrap();
            assert!(s < 0.3, "{}: {s}", p.label);
        }
    }
}

#[test]
fn ssim_rejects_small_images() {
    let a = random(100, 1);
    assert!(ssim(&a, &a, 10, 10, SsimWindow::default()).is_err());
    assert!(ssim(&a, &a, 10, 10, SsimWindow::Uniform { size: 8 }).is_ok());
}

#[test]
fn error_map_examples() {
    let mut t = random(64, 3);
    t[0] = 0.0;
    t[1] = 1.0;
    assert!(error_map(&t, &t, 0.1).unwrap().iter().all(|&v| v == 0.0));
    let off: Vec<f64> = t.iter().map(|v| v + 0.2).collect();
    assert!(error_map(&off, &t, 0.1).unwrap().iter().all(|&v| v == 0.1));
    let r = random(64, 4);
    assert!(error_map(&r, &t, 0.1).unwrap().iter().all(|&v| (0.0..=0.1).contains(&v)));
}

fn small_spec(pn: PnKind, parameterization: Parameterization) -> ModelSpec {
    ModelSpec {
        kind: ModelKind::Dccnn,
        pn,
        parameterization,
        anatomies: ["knee", "brain", "cardiac"].map(String::from).to_vec(),
        dccnn: DccnnConfig::desk(),
        unet: UnetConfig::desk(),
    }
}

#[test]
fn weight_summary_of_fresh_models() {
    let pn0 = build_model(&small_spec(PnKind::Pn0, Parameterization::PerAnatomy), 1).unwrap();
    assert!(learner_weight_summary(&pn0).is_empty());
    let pn4 = build_model(&small_spec(PnKind::Pn4, Parameterization::PerAnatomy), 1).unwrap();
    let rows = learner_weight_summary(&pn4);
    // 2 cascades x 3 blocks x 3 anatomies x (gamma, beta, parallel)
    assert_eq!(rows.len(), 2 * 3 * 3 * 3);
    for r in &rows {
        let expect = if r.learner == "bn.gamma" { 1.0 } else { 0.0 };
        assert_eq!(r.mean, expect, "{r:?}");
        assert!(r.cascade.is_some());
    }
    let mut buf = Vec::new();
    write_weight_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("cascade,block,anatomy,learner,mean\n0,b0,knee,"));
}

#[test]
fn count_rows_are_additive() {
    let labels: Vec<String> = ["knee", "brain", "cardiac"].map(String::from).to_vec();
    let rows = count_report(Scale::Desk, &labels).unwrap();
    assert_eq!(rows.len(), 14);
    for r in &rows {
        assert_eq!(r.sum, r.networks * r.shared + 3 * r.specific);
    }
    let dccnn_oaon = &rows[0];
    let dccnn_maon = &rows[1];
    assert_eq!(dccnn_oaon.sum, 3 * dccnn_maon.shared);
    let mut buf = Vec::new();
    write_count_csv(&rows, &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 15);
}

#[test]
fn delta_against_itself_is_zero() {
    let report = MetricReport {
        run: "a".into(),
        anatomies: vec![
            AnatomyMetrics::from_samples("knee", &[(30.0, 0.8), (32.0, 0.9)]),
            AnatomyMetrics::from_samples("brain", &[(28.0, 0.7)]),
        ],
    };
    assert_eq!(report.anatomies[0].psnr_mean, 31.0);
    assert_eq!(report.anatomies[0].psnr_std, 1.0);
    for (_, dp, ds) in report.delta(&report) {
        assert_eq!((dp, ds), (0.0, 0.0));
    }
    assert_eq!(report.mean_psnr(), 29.5);
}
