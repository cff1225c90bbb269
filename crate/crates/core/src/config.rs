//! Experiment configuration: a TOML document where every field has a
//! default, plus the `desk` and `paper` presets.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::learners::PnKind;
use crate::metrics::SsimWindow;
use crate::models::{DccnnConfig, ModelKind, UnetConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegimeKind {
    Oaon,
    Maon,
    Mapn,
}

impl fmt::Display for RegimeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegimeKind::Oaon => "oaon",
            RegimeKind::Maon => "maon",
            RegimeKind::Mapn => "mapn",
        })
    }
}

impl FromStr for RegimeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "oaon" => Ok(RegimeKind::Oaon),
            "maon" => Ok(RegimeKind::Maon),
            "mapn" => Ok(RegimeKind::Mapn),
            _ => Err(Error::Config(format!("unknown regime {s:?} (oaon|maon|mapn)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Phantom,
    Corpus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub pn: PnKind,
    pub dccnn: DccnnConfig,
    pub unet: UnetConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Dccnn,
            pn: PnKind::Pn4,
            dccnn: DccnnConfig::desk(),
            unet: UnetConfig::desk(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    /// Corpus directory when `source = "corpus"`.
    pub corpus_dir: Option<PathBuf>,
    pub anatomies: Vec<String>,
    pub height: usize,
    pub width: usize,
    pub train_per_anatomy: usize,
    pub val_per_anatomy: usize,
    /// Seed of the phantom corpus, kept apart from the training seed so
    /// runs with different seeds see the same data.
    pub seed: u64,
    /// Cut every anatomy to the smallest training set instead of failing.
    pub truncate: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Phantom,
            corpus_dir: None,
            anatomies: ["knee", "brain", "cardiac"].map(String::from).to_vec(),
            height: 64,
            width: 64,
            train_per_anatomy: 12,
            val_per_anatomy: 8,
            seed: 2023,
            truncate: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub acceleration: u32,
    /// Fully sampled center band; the acceleration-dependent default when
    /// absent.
    pub center_fraction: Option<f64>,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            acceleration: 4,
            center_fraction: None,
        }
    }
}

impl SamplingConfig {
    pub fn center_fraction(&self) -> f64 {
        self.center_fraction
            .unwrap_or_else(|| crate::kspace::default_center_fraction(self.acceleration))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub oaon_epochs: usize,
    pub maon_epochs: usize,
    pub mapn_epochs: usize,
    /// Leading MAPN epochs with the shared 3x3 convolutions frozen.
    pub warmup_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Clear Adam moments of the shared convolutions when warm-up ends.
    pub reset_adam_after_warmup: bool,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            oaon_epochs: 10,
            maon_epochs: 30,
            mapn_epochs: 30,
            warmup_epochs: 10,
            batch_size: 4,
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            reset_adam_after_warmup: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub regime: RegimeKind,
    /// Training anatomy of an OAON run.
    pub oaon_anatomy: String,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// MAON checkpoint that seeds a MAPN run.
    pub warm_start: Option<PathBuf>,
    /// Allow MAPN without a warm start.
    pub cold_start: bool,
    pub model: ModelConfig,
    pub data: DataConfig,
    pub sampling: SamplingConfig,
    pub schedule: ScheduleConfig,
    pub ssim_window: SsimWindow,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "desk".into(),
            regime: RegimeKind::Maon,
            oaon_anatomy: "knee".into(),
            seed: 0,
            output_dir: PathBuf::from("runs"),
            warm_start: None,
            cold_start: false,
            model: ModelConfig::default(),
            data: DataConfig::default(),
            sampling: SamplingConfig::default(),
            schedule: ScheduleConfig::default(),
            ssim_window: SsimWindow::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::default()),
            "paper" => {
                let mut c = Self {
                    name: "paper".into(),
                    ..Self::default()
                };
                c.model.dccnn = DccnnConfig::paper();
                c.model.unet = UnetConfig::paper();
                c.data.height = 320;
                c.data.width = 320;
                c.schedule.oaon_epochs = 50;
                c.schedule.maon_epochs = 150;
                c.schedule.mapn_epochs = 150;
                c.schedule.warmup_epochs = 30;
                Ok(c)
            }
            _ => Err(Error::Config(format!("unknown preset {name:?} (desk|paper)"))),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical TOML form, output directory excluded so
    /// relocated runs keep their identity.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        hex::encode(Sha256::digest(c.to_toml().as_bytes()))
    }

    pub fn epochs(&self) -> usize {
        match self.regime {
            RegimeKind::Oaon => self.schedule.oaon_epochs,
            RegimeKind::Maon => self.schedule.maon_epochs,
            RegimeKind::Mapn => self.schedule.mapn_epochs,
        }
    }

    /// Anatomies the model carries parameters for.
    pub fn model_anatomies(&self) -> Vec<String> {
        match self.regime {
            RegimeKind::Oaon => vec![self.oaon_anatomy.clone()],
            _ => self.data.anatomies.clone(),
        }
    }

    /// Checks cross-field constraints.
    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, msg: String| Err(Error::Config(format!("{field}: {msg}")));
        if self.data.anatomies.is_empty() {
            return fail("data.anatomies", "at least one anatomy is required".into());
        }
        let mut sorted = self.data.anatomies.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.data.anatomies.len() {
            return fail("data.anatomies", "labels must be distinct".into());
        }
        if self.regime == RegimeKind::Oaon && !self.data.anatomies.contains(&self.oaon_anatomy) {
            return fail("oaon_anatomy", format!("{:?} is not among data.anatomies", self.oaon_anatomy));
        }
        for (field, v) in [("data.height", self.data.height), ("data.width", self.data.width)] {
            if v == 0 {
                return fail(field, "must be positive".into());
            }
        }
        if self.data.train_per_anatomy == 0 {
            return fail("data.train_per_anatomy", "must be positive".into());
        }
        if self.data.source == DataSource::Corpus && self.data.corpus_dir.is_none() {
            return fail("data.corpus_dir", "required when data.source = \"corpus\"".into());
        }
        if self.sampling.acceleration == 0 {
            return fail("sampling.acceleration", "must be positive".into());
        }
        if let Some(cf) = self.sampling.center_fraction {
            if !(cf > 0.0 && cf <= 1.0) {
                return fail("sampling.center_fraction", format!("{cf} is outside (0, 1]"));
            }
        }
        if self.schedule.batch_size == 0 {
            return fail("schedule.batch_size", "must be positive".into());
        }
        if !(self.schedule.learning_rate > 0.0) {
            return fail("schedule.learning_rate", "must be positive".into());
        }
        if self.regime == RegimeKind::Mapn && self.schedule.warmup_epochs >= self.schedule.mapn_epochs {
            return fail(
                "schedule.warmup_epochs",
                format!(
                    "{} must be below schedule.mapn_epochs ({})",
                    self.schedule.warmup_epochs, self.schedule.mapn_epochs
                ),
            );
        }
        let min_extent = self.data.height.min(self.data.width);
        if min_extent < self.ssim_window.size() {
            return fail("ssim_window", format!("window is larger than the {min_extent}-pixel extent"));
        }
        Ok(())
    }
}
