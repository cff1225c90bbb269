use std::path::{Path, PathBuf};

use clap::Args;
use mapn::config::{ExperimentConfig, RegimeKind};
use mapn::metrics::MetricReport;
use mapn::training::{EvalSummary, RunInfo, CONFIG_FILE};
use mapn::{Error, Result};

#[derive(Args)]
pub struct TableArgs {
    /// Evaluated run directories.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Run the deltas are taken against.
    #[arg(long)]
    baseline: PathBuf,
    /// Output CSV (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Run {
    dir: PathBuf,
    config: ExperimentConfig,
    info: RunInfo,
    eval: EvalSummary,
}

impl Run {
    fn load(dir: &Path) -> Result<Self> {
        Ok(Self {
            dir: dir.to_path_buf(),
            config: ExperimentConfig::load(&dir.join(CONFIG_FILE))?,
            info: RunInfo::load(dir)?,
            eval: EvalSummary::load(dir)?,
        })
    }

    /// `knee` for an expert, `K+B+C` for a multi-anatomy run.
    fn trained_on(&self) -> String {
        match self.info.regime {
            RegimeKind::Oaon => self.config.oaon_anatomy.clone(),
            _ => self
                .info
                .anatomies
                .iter()
                .map(|a| a.chars().next().unwrap_or('?').to_ascii_uppercase().to_string())
                .collect::<Vec<_>>()
                .join("+"),
        }
    }
}

fn short(h: &str) -> &str {
    &h[..h.len().min(12)]
}

/// Lists every anatomy whose validation images or masks differ from the
/// baseline's.
fn mismatches(run: &Run, base: &Run) -> Vec<String> {
    let mut out = Vec::new();
    for label in &run.info.anatomies {
        for (what, a, b) in [
            ("images", &run.info.val_fingerprints, &base.info.val_fingerprints),
            ("masks", &run.info.mask_fingerprints, &base.info.mask_fingerprints),
        ] {
            match (a.get(label), b.get(label)) {
                (Some(x), Some(y)) if x != y => out.push(format!(
                    "{}: {label} validation {what} {} differ from baseline {}",
                    run.dir.display(),
                    short(x),
                    short(y)
                )),
                _ => {}
            }
        }
    }
    out
}

pub fn build(runs: &[PathBuf], baseline: &Path) -> Result<Vec<Vec<String>>> {
    let base = Run::load(baseline)?;
    let runs = runs.iter().map(|d| Run::load(d)).collect::<Result<Vec<_>>>()?;
    let problems: Vec<String> = runs.iter().flat_map(|r| mismatches(r, &base)).collect();
    if !problems.is_empty() {
        return Err(Error::Data(format!(
            "runs were not evaluated on the same data:\n  {}",
            problems.join("\n  ")
        )));
    }
    let labels = base.info.anatomies.clone();
    let mut header = ["regime", "model", "pn", "trained_on", "run"].map(String::from).to_vec();
    for l in &labels {
        for col in ["psnr", "ssim", "dpsnr", "dssim"] {
            header.push(format!("{l}_{col}"));
        }
    }
    let mut rows = vec![header];
    let base_report: &MetricReport = &base.eval.last;
    for run in &runs {
        let report = &run.eval.last;
        let mut row = vec![
            run.info.regime.to_string().to_uppercase(),
            run.config.model.kind.to_string(),
            run.config.model.pn.to_string(),
            run.trained_on(),
            run.info.run_id.clone(),
        ];
        for l in &labels {
            match (report.get(l), base_report.get(l)) {
                (Some(a), Some(b)) => row.extend([
                    format!("{:.4}", a.psnr_mean),
                    format!("{:.5}", a.ssim_mean),
                    format!("{:+.4}", a.psnr_mean - b.psnr_mean),
                    format!("{:+.5}", a.ssim_mean - b.ssim_mean),
                ]),
                _ => row.extend(std::iter::repeat_n(String::new(), 4)),
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn run(args: &TableArgs) -> Result<()> {
    let rows = build(&args.runs, &args.baseline)?;
    let text: String = rows.iter().map(|r| r.join(",") + "\n").collect();
    match &args.out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::Data(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
