use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::ParamRole;
use crate::models::Network;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnatomyMetrics {
    pub label: String,
    pub slices: usize,
    pub psnr_mean: f64,
    pub psnr_std: f64,
    pub ssim_mean: f64,
    pub ssim_std: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, var.sqrt())
}

impl AnatomyMetrics {
    /// Summarizes per-slice (PSNR, SSIM) pairs.
    pub fn from_samples(label: impl Into<String>, samples: &[(f64, f64)]) -> Self {
        let p: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let s: Vec<f64> = samples.iter().map(|s| s.1).collect();
        let (psnr_mean, psnr_std) = mean_std(&p);
        let (ssim_mean, ssim_std) = mean_std(&s);
        Self {
            label: label.into(),
            slices: samples.len(),
            psnr_mean,
            psnr_std,
            ssim_mean,
            ssim_std,
        }
    }
}

/// Per-anatomy validation metrics of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub run: String,
    pub anatomies: Vec<AnatomyMetrics>,
}

impl MetricReport {
    pub fn mean_psnr(&self) -> f64 {
        self.anatomies.iter().map(|a| a.psnr_mean).sum::<f64>() / self.anatomies.len() as f64
    }

    pub fn mean_ssim(&self) -> f64 {
        self.anatomies.iter().map(|a| a.ssim_mean).sum::<f64>() / self.anatomies.len() as f64
    }

    pub fn get(&self, label: &str) -> Option<&AnatomyMetrics> {
        self.anatomies.iter().find(|a| a.label == label)
    }

    /// (label, ΔPSNR, ΔSSIM) against `baseline` for every anatomy both
    /// reports cover.
    pub fn delta(&self, baseline: &MetricReport) -> Vec<(String, f64, f64)> {
        self.anatomies
            .iter()
            .filter_map(|a| {
                baseline
                    .get(&a.label)
                    .map(|b| (a.label.clone(), a.psnr_mean - b.psnr_mean, a.ssim_mean - b.ssim_mean))
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightRow {
    pub cascade: Option<usize>,
    pub block: String,
    pub anatomy: String,
    pub learner: String,
    pub mean: f64,
}

fn split_prefix(name: &str) -> (String, String) {
    // `c{c}.b{b}.bn.gamma` -> ("c{c}.b{b}", "bn.gamma"); U-Net names have
    // two-part prefixes as well (`down0.b1`)
    let mut parts = name.splitn(3, '.');
    let a = parts.next().unwrap_or_default();
    let b = parts.next().unwrap_or_default();
    let rest = parts.next().unwrap_or_default();
    (format!("{a}.{b}"), rest.to_string())
}

/// Mean value of every anatomy-specific BN affine and learner tensor, per
/// block and anatomy. Empty when the model has no specific parameters.
pub fn learner_weight_summary(net: &Network) -> Vec<WeightRow> {
    let mut rows = Vec::new();
    for (i, label) in net.registry.labels().iter().enumerate() {
        for (name, entry) in net.registry.specific(i) {
            if !matches!(
                entry.role,
                ParamRole::BnAffine | ParamRole::Attention | ParamRole::Series | ParamRole::Parallel
            ) {
                continue;
            }
            let (block, learner) = split_prefix(name);
            let learner = learner.trim_end_matches(".weight").to_string();
            let cascade = block
                .strip_prefix('c')
                .and_then(|s| s.split('.').next())
                .and_then(|s| s.parse().ok());
            let block_id = match cascade {
                Some(_) => block.split('.').nth(1).unwrap_or_default().to_string(),
                None => block.clone(),
            };
            rows.push(WeightRow {
                cascade,
                block: block_id,
                anatomy: label.clone(),
                learner,
                mean: entry.value.mean(),
            });
        }
    }
    rows
}

pub fn write_weight_csv(rows: &[WeightRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["cascade", "block", "anatomy", "learner", "mean"])
        .map_err(|e| Error::Data(e.to_string()))?;
    for r in rows {
        let cascade = r.cascade.map(|c| c.to_string()).unwrap_or_default();
        w.write_record([cascade, r.block.clone(), r.anatomy.clone(), r.learner.clone(), format!("{:.9e}", r.mean)])
            .map_err(|e| Error::Data(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Data(e.to_string()))
}
