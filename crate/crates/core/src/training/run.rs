use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::trainer::{build_dataset, EpochLog, Trainer};
use super::warm::warm_start;
use crate::config::{ExperimentConfig, RegimeKind};
use crate::data::{sha256_hex, Split};
use crate::error::{Error, Result};
use crate::metrics::MetricReport;
use crate::models::Checkpoint;

pub const CONFIG_FILE: &str = "config.toml";
pub const RUN_FILE: &str = "run.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const EVAL_FILE: &str = "eval.json";
pub const LAST_CKPT: &str = "checkpoints/last.ckpt";
pub const BEST_CKPT: &str = "checkpoints/best.ckpt";

const METRICS_HEADER: &str = "epoch,anatomy,split,loss,psnr,ssim";

/// Directory name of a run: name, regime, model, PN kind and seed.
pub fn run_id(config: &ExperimentConfig) -> String {
    let regime = match config.regime {
        RegimeKind::Oaon => format!("oaon-{}", config.oaon_anatomy),
        r => r.to_string(),
    };
    format!("{}_{}_{}_{}_s{}", config.name, regime, config.model.kind, config.model.pn, config.seed)
}

pub fn run_dir(config: &ExperimentConfig) -> PathBuf {
    config.output_dir.join(run_id(config))
}

/// Identity of a run, written at its start.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub run_id: String,
    pub config_hash: String,
    pub regime: RegimeKind,
    pub seed: u64,
    pub data_seed: u64,
    pub anatomies: Vec<String>,
    /// Digest of each anatomy's validation images.
    pub val_fingerprints: BTreeMap<String, String>,
    /// Digest of each anatomy's validation masks.
    pub mask_fingerprints: BTreeMap<String, String>,
    pub warm_start: Option<PathBuf>,
}

/// Final evaluation of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub run_id: String,
    pub config_hash: String,
    pub epochs: usize,
    pub best_epoch: Option<usize>,
    /// Model after the last epoch.
    pub last: MetricReport,
    /// Best epoch by mean validation PSNR.
    pub best: Option<MetricReport>,
    pub zero_filled: MetricReport,
}

impl EvalSummary {
    pub fn load(dir: &Path) -> Result<Self> {
        read_json(&dir.join(EVAL_FILE))
    }
}

impl RunInfo {
    pub fn load(dir: &Path) -> Result<Self> {
        read_json(&dir.join(RUN_FILE))
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Continue from `checkpoints/last.ckpt` of an existing run.
    pub resume: bool,
    /// Stop after this many completed epochs (the run can be resumed).
    pub stop_after: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub eval: EvalSummary,
    /// False when stopped early by [`RunOptions::stop_after`].
    pub complete: bool,
}

fn metric_rows(log: &EpochLog) -> Vec<String> {
    let mut rows = Vec::new();
    for (label, loss) in &log.train_loss {
        rows.push(format!("{},{label},train,{loss:.9e},,", log.epoch));
    }
    for (a, (label, loss)) in log.val.anatomies.iter().zip(&log.val_loss) {
        rows.push(format!(
            "{},{label},val,{loss:.9e},{:.6},{:.6}",
            log.epoch, a.psnr_mean, a.ssim_mean
        ));
    }
    rows
}

/// Keeps the header and the rows of the first `epochs` epochs.
fn truncate_metrics(path: &Path, epochs: usize) -> Result<()> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut kept = vec![METRICS_HEADER.to_string()];
    for line in text.lines().skip(1) {
        let epoch: usize = line
            .split(',')
            .next()
            .and_then(|e| e.parse().ok())
            .ok_or_else(|| Error::Data(format!("{}: bad row {line:?}", path.display())))?;
        if epoch < epochs {
            kept.push(line.to_string());
        }
    }
    fs::write(path, kept.join("\n") + "\n").map_err(|e| Error::io(path, e))
}

fn write_masks(dir: &Path, trainer: &Trainer) -> Result<BTreeMap<String, String>> {
    let masks_dir = dir.join("masks");
    fs::create_dir_all(&masks_dir).map_err(|e| Error::io(&masks_dir, e))?;
    let mut prints = BTreeMap::new();
    for (split, sets) in [(Split::Train, &trainer.train), (Split::Val, &trainer.val)] {
        for p in sets {
            let mut text = String::from("# index acceleration center_fraction seed columns\n");
            for (i, m) in p.masks.iter().enumerate() {
                let cols: String = m.columns.iter().map(|&c| if c { '1' } else { '0' }).collect();
                text += &format!("{i} {} {} {} {cols}\n", m.acceleration, m.center_fraction, m.seed);
            }
            if split == Split::Val {
                prints.insert(p.anatomy.label.clone(), sha256_hex(text.as_bytes()));
            }
            let path = masks_dir.join(format!("{}_{split}.txt", p.anatomy.label));
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(prints)
}

/// Checkpoint a MAPN run starts from: the configured one, else the last
/// checkpoint of the matching MAON run. `None` for other regimes and cold
/// starts.
pub fn warm_start_path(config: &ExperimentConfig) -> Result<Option<PathBuf>> {
    if config.regime != RegimeKind::Mapn || config.cold_start {
        return Ok(None);
    }
    let path = match &config.warm_start {
        Some(p) => p.clone(),
        None => {
            let mut maon = config.clone();
            maon.regime = RegimeKind::Maon;
            maon.model.pn = crate::learners::PnKind::Pn0;
            run_dir(&maon).join(LAST_CKPT)
        }
    };
    if !path.exists() {
        return Err(Error::Config(format!(
            "warm_start: MAON checkpoint {} not found (train MAON first, pass a warm start, or cold start)",
            path.display()
        )));
    }
    Ok(Some(path))
}

/// Trains one regime end to end and writes the run directory.
///
/// `on_epoch` sees every finished epoch.
pub fn run_regime(
    config: &ExperimentConfig,
    options: &RunOptions,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<RunSummary> {
    config.validate()?;
    let warm = if options.resume { None } else { warm_start_path(config)? };
    let dir = run_dir(config);
    let last_path = dir.join(LAST_CKPT);
    if !options.resume && last_path.exists() {
        return Err(Error::Config(format!(
            "{} already holds a run; resume it or choose another name/output directory",
            dir.display()
        )));
    }
    if options.resume && !last_path.exists() {
        return Err(Error::Config(format!("nothing to resume in {}", dir.display())));
    }
    let dataset = build_dataset(config)?;
    let mut trainer = Trainer::new(config, &dataset)?;
    fs::create_dir_all(dir.join("checkpoints")).map_err(|e| Error::io(&dir, e))?;
    let metrics_path = dir.join(METRICS_FILE);

    if options.resume {
        trainer.restore(&Checkpoint::load(&last_path)?)?;
        truncate_metrics(&metrics_path, trainer.state.epoch)?;
    } else {
        if let Some(path) = &warm {
            warm_start(&mut trainer.network, &Checkpoint::load(path)?)?;
        }
        let cfg_path = dir.join(CONFIG_FILE);
        fs::write(&cfg_path, config.to_toml()).map_err(|e| Error::io(&cfg_path, e))?;
        let info = RunInfo {
            run_id: run_id(config),
            config_hash: config.hash(),
            regime: config.regime,
            seed: config.seed,
            data_seed: config.data.seed,
            anatomies: dataset.labels(),
            val_fingerprints: dataset.val_fingerprints(),
            mask_fingerprints: write_masks(&dir, &trainer)?,
            warm_start: warm.clone(),
        };
        write_json(&dir.join(RUN_FILE), &info)?;
        fs::write(&metrics_path, format!("{METRICS_HEADER}\n")).map_err(|e| Error::io(&metrics_path, e))?;
    }

    let total = trainer.epochs();
    let stop = options.stop_after.unwrap_or(total).min(total);
    while trainer.state.epoch < stop {
        let log = trainer.run_epoch()?;
        let mut f = fs::OpenOptions::new()
            .append(true)
            .open(&metrics_path)
            .map_err(|e| Error::io(&metrics_path, e))?;
        for row in metric_rows(&log) {
            writeln!(f, "{row}").map_err(|e| Error::io(&metrics_path, e))?;
        }
        let ckpt = trainer.checkpoint();
        if log.improved {
            ckpt.save(&dir.join(BEST_CKPT))?;
        }
        ckpt.save(&last_path)?;
        on_epoch(&log);
    }

    let (last, _) = trainer.evaluate()?;
    let eval = EvalSummary {
        run_id: run_id(config),
        config_hash: config.hash(),
        epochs: trainer.state.epoch,
        best_epoch: trainer.state.best_epoch,
        last,
        best: trainer.state.best.clone(),
        zero_filled: trainer.zero_filled_report()?,
    };
    let complete = trainer.state.epoch == total;
    if complete {
        write_json(&dir.join(EVAL_FILE), &eval)?;
    }
    Ok(RunSummary { dir, eval, complete })
}
