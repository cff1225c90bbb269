use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{DataSource, ExperimentConfig, RegimeKind};
use crate::data::{make_epoch_plan, AnatomyProfile, Dataset, PlanBatch, Split};
use crate::error::{Error, Result};
use crate::kspace::{self, make_cartesian_mask, undersample, ComplexImage, SamplingMask};
use crate::learners::{AnatomyId, Mode, Parameterization, ParamRole};
use crate::metrics::{image_metrics, AnatomyMetrics, MetricReport};
use crate::models::{build_model, Batch, Checkpoint, ModelSpec, Network, Record};
use crate::numerics::{Adam, AdamConfig, AdamMoments, Tensor, Update};
use crate::rng;

/// Loads the configured data and keeps the anatomies the model trains on.
pub fn build_dataset(config: &ExperimentConfig) -> Result<Dataset> {
    let d = &config.data;
    let full = match d.source {
        DataSource::Phantom => {
            let profiles = d
                .anatomies
                .iter()
                .map(|l| AnatomyProfile::by_label(l))
                .collect::<Result<Vec<_>>>()?;
            Dataset::synthetic(&profiles, d.train_per_anatomy, d.val_per_anatomy, d.height, d.width, d.seed)?
        }
        DataSource::Corpus => {
            let dir = d.corpus_dir.as_ref().expect("validated");
            let ds = Dataset::from_corpus(dir, &d.anatomies)?;
            if (ds.height, ds.width) != (d.height, d.width) {
                return Err(Error::Data(format!(
                    "corpus {} holds {}x{} slices, config expects {}x{}",
                    dir.display(),
                    ds.height,
                    ds.width,
                    d.height,
                    d.width
                )));
            }
            ds
        }
    };
    full.select(&config.model_anatomies())
}

/// Sampling mask of one slice; fixed by the data seed so every run sees the
/// same measurements.
pub fn slice_mask(config: &ExperimentConfig, label: &str, split: Split, index: usize) -> Result<SamplingMask> {
    let s = &config.sampling;
    let seed = rng::derive_seed(
        config.data.seed,
        &["mask", label, &split.to_string(), &index.to_string(), &s.acceleration.to_string()],
    );
    make_cartesian_mask(config.data.width, s.acceleration, s.center_fraction(), seed)
}

/// Measurements and targets of one anatomy split.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub anatomy: AnatomyId,
    pub targets: Vec<ComplexImage>,
    pub measured: Vec<ComplexImage>,
    pub masks: Vec<SamplingMask>,
}

impl Prepared {
    pub fn new(config: &ExperimentConfig, dataset: &Dataset, anatomy: usize, split: Split) -> Result<Self> {
        let a = &dataset.anatomies[anatomy];
        let mut out = Self {
            anatomy: a.anatomy.clone(),
            targets: Vec::new(),
            measured: Vec::new(),
            masks: Vec::new(),
        };
        for s in a.split(split) {
            let mask = slice_mask(config, &a.anatomy.label, split, s.index)?;
            out.measured.push(undersample(&s.image, &mask)?);
            out.targets.push(s.image.clone());
            out.masks.push(mask);
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    fn gather(&self, indices: &[usize]) -> (Vec<ComplexImage>, Vec<SamplingMask>, Vec<&ComplexImage>) {
        (
            indices.iter().map(|&i| self.measured[i].clone()).collect(),
            indices.iter().map(|&i| self.masks[i].clone()).collect(),
            indices.iter().map(|&i| &self.targets[i]).collect(),
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    /// Completed epochs.
    pub epoch: usize,
    pub step: u64,
    pub best_epoch: Option<usize>,
    pub best_psnr: Option<f64>,
    /// Validation report of the best epoch.
    pub best: Option<MetricReport>,
}

/// Per-epoch outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean training loss per anatomy.
    pub train_loss: Vec<(String, f64)>,
    pub val: MetricReport,
    pub val_loss: Vec<(String, f64)>,
    pub improved: bool,
}

pub struct Trainer {
    pub config: ExperimentConfig,
    pub network: Network,
    pub adam: Adam,
    pub state: TrainState,
    pub train: Vec<Prepared>,
    pub val: Vec<Prepared>,
}

pub fn model_spec(config: &ExperimentConfig) -> ModelSpec {
    ModelSpec {
        kind: config.model.kind,
        pn: config.model.pn,
        parameterization: match config.regime {
            RegimeKind::Mapn => Parameterization::PerAnatomy,
            _ => Parameterization::Shared,
        },
        anatomies: config.model_anatomies(),
        dccnn: config.model.dccnn.clone(),
        unet: config.model.unet.clone(),
    }
}

fn mean_abs_diff(out: &ComplexImage, target: &ComplexImage) -> f64 {
    let n = 2 * target.re.len();
    out.re
        .iter()
        .chain(&out.im)
        .zip(target.re.iter().chain(&target.im))
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / n as f64
}

impl Trainer {
    /// Fresh model and optimizer for `config` over an already selected
    /// dataset.
    pub fn new(config: &ExperimentConfig, dataset: &Dataset) -> Result<Self> {
        config.validate()?;
        kspace::check_extent(config.data.height)?;
        kspace::check_extent(config.data.width)?;
        let labels = config.model_anatomies();
        if dataset.labels() != labels {
            return Err(Error::Data(format!(
                "dataset anatomies {:?} do not match the model's {:?}",
                dataset.labels(),
                labels
            )));
        }
        let network = build_model(&model_spec(config), config.seed)?;
        let s = &config.schedule;
        let adam = Adam::new(AdamConfig {
            lr: s.learning_rate,
            beta1: s.beta1,
            beta2: s.beta2,
            eps: s.adam_eps,
        });
        let prepare = |split| {
            (0..dataset.anatomies.len())
                .map(|a| Prepared::new(config, dataset, a, split))
                .collect::<Result<Vec<_>>>()
        };
        Ok(Self {
            config: config.clone(),
            network,
            adam,
            state: TrainState::default(),
            train: prepare(Split::Train)?,
            val: prepare(Split::Val)?,
        })
    }

    pub fn epochs(&self) -> usize {
        self.config.epochs()
    }

    pub fn in_warmup(&self) -> bool {
        self.config.regime == RegimeKind::Mapn && self.state.epoch < self.config.schedule.warmup_epochs
    }

    pub fn frozen_roles(&self) -> Vec<ParamRole> {
        if self.in_warmup() {
            vec![ParamRole::Conv3x3]
        } else {
            Vec::new()
        }
    }

    /// Batches of the current epoch.
    pub fn epoch_plan(&self) -> Result<Vec<PlanBatch>> {
        let sizes: Vec<(usize, usize)> = self.train.iter().enumerate().map(|(a, p)| (a, p.len())).collect();
        let plan = make_epoch_plan(
            &sizes,
            self.config.schedule.batch_size,
            self.config.seed,
            self.state.epoch,
            self.config.data.truncate,
        )?;
        Ok(plan.batches)
    }

    /// One optimizer step on an anatomy-pure batch: L1 loss, then Adam on
    /// the shared tensors (unless frozen) and the batch anatomy's specific
    /// tensors.
    pub fn train_step(&mut self, batch: &PlanBatch) -> Result<f64> {
        let data = self
            .train
            .get(batch.anatomy)
            .ok_or_else(|| Error::Data(format!("batch names unknown anatomy {}", batch.anatomy)))?;
        if data.anatomy.index != batch.anatomy || batch.indices.iter().any(|&i| i >= data.len()) {
            return Err(Error::Data(format!("batch {:?} is not drawn from one anatomy's slices", batch)));
        }
        let (measured, masks, targets) = data.gather(&batch.indices);
        let target = kspace::batch_to_network(&targets)?;
        let label = data.anatomy.label.clone();
        let frozen = self.frozen_roles();
        self.network.switch_anatomy(batch.anatomy)?;
        let inputs = Batch::new(&measured, &masks)?;
        let mut pass = self.network.forward(&inputs, Mode::Train, &frozen)?;
        let t = pass.graph.input(target);
        let loss_var = pass.graph.l1_loss(pass.output, t)?;
        let loss = pass.graph.value(loss_var).data()[0];
        if !loss.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss at epoch {} step {}: anatomy {label}, slices {:?}",
                self.state.epoch, self.state.step, batch.indices
            )));
        }
        let grads = pass.graph.backward(loss_var)?.into_named();
        let updates: Vec<Update<'_>> = self
            .network
            .registry
            .entries_mut()
            .filter_map(|(key, entry)| {
                grads.get(&key).map(|g| Update {
                    key,
                    param: &mut entry.value,
                    grad: g,
                })
            })
            .collect();
        self.adam.step(updates).map_err(|e| match e {
            Error::Numeric(msg) => Error::Numeric(format!(
                "{msg} at epoch {} step {}: anatomy {label}, slices {:?}",
                self.state.epoch, self.state.step, batch.indices
            )),
            other => other,
        })?;
        self.state.step += 1;
        Ok(loss)
    }

    fn shared_keys(&self) -> Vec<String> {
        self.network.registry.shared().keys().map(|n| format!("shared/{n}")).collect()
    }

    /// Trains one epoch; returns the mean loss per anatomy.
    pub fn train_epoch(&mut self) -> Result<Vec<(String, f64)>> {
        let s = &self.config.schedule;
        if self.config.regime == RegimeKind::Mapn
            && s.reset_adam_after_warmup
            && s.warmup_epochs > 0
            && self.state.epoch == s.warmup_epochs
        {
            let keys = self.shared_keys();
            self.adam.reset(keys);
        }
        let plan = self.epoch_plan()?;
        let mut sums = vec![(0.0, 0usize); self.train.len()];
        for batch in &plan {
            let loss = self.train_step(batch)?;
            sums[batch.anatomy].0 += loss;
            sums[batch.anatomy].1 += 1;
        }
        self.state.epoch += 1;
        Ok(self
            .train
            .iter()
            .zip(sums)
            .map(|(p, (s, n))| (p.anatomy.label.clone(), if n > 0 { s / n as f64 } else { f64::NAN }))
            .collect())
    }

    /// Reconstructions of a prepared split in eval mode.
    pub fn reconstruct(&mut self, anatomy: usize, split: Split) -> Result<Vec<ComplexImage>> {
        let data = match split {
            Split::Train => &self.train[anatomy],
            Split::Val => &self.val[anatomy],
        };
        let bs = self.config.schedule.batch_size;
        let mut out = Vec::with_capacity(data.len());
        let idx: Vec<usize> = (0..data.len()).collect();
        for chunk in idx.chunks(bs) {
            let (measured, masks, _) = data.gather(chunk);
            out.extend(self.network.reconstruct(anatomy, &measured, &masks, Mode::Eval)?);
        }
        Ok(out)
    }

    /// Validation PSNR/SSIM and L1 per anatomy.
    pub fn evaluate(&mut self) -> Result<(MetricReport, Vec<(String, f64)>)> {
        let mut anatomies = Vec::new();
        let mut losses = Vec::new();
        for a in 0..self.val.len() {
            let recon = self.reconstruct(a, Split::Val)?;
            let data = &self.val[a];
            let mut samples = Vec::with_capacity(recon.len());
            let mut loss = 0.0;
            for (r, t) in recon.iter().zip(&data.targets) {
                samples.push(image_metrics(r, t, self.config.ssim_window)?);
                loss += mean_abs_diff(r, t);
            }
            let label = data.anatomy.label.clone();
            losses.push((label.clone(), loss / recon.len().max(1) as f64));
            anatomies.push(AnatomyMetrics::from_samples(label, &samples));
        }
        Ok((
            MetricReport {
                run: self.config.name.clone(),
                anatomies,
            },
            losses,
        ))
    }

    /// Metrics of the zero-filled reconstructions of the validation split.
    pub fn zero_filled_report(&self) -> Result<MetricReport> {
        let anatomies = self
            .val
            .iter()
            .map(|data| {
                let samples = data
                    .measured
                    .iter()
                    .zip(&data.targets)
                    .map(|(s, t)| image_metrics(&kspace::zero_filled(s)?, t, self.config.ssim_window))
                    .collect::<Result<Vec<_>>>()?;
                Ok(AnatomyMetrics::from_samples(data.anatomy.label.clone(), &samples))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MetricReport {
            run: "zero-filled".into(),
            anatomies,
        })
    }

    /// Trains one epoch, evaluates and tracks the best mean validation PSNR.
    pub fn run_epoch(&mut self) -> Result<EpochLog> {
        let epoch = self.state.epoch;
        let train_loss = self.train_epoch()?;
        let (val, val_loss) = self.evaluate()?;
        let mean = val.mean_psnr();
        let improved = self.state.best_psnr.is_none_or(|b| mean > b);
        if improved {
            self.state.best_psnr = Some(mean);
            self.state.best_epoch = Some(epoch);
            self.state.best = Some(val.clone());
        }
        Ok(EpochLog {
            epoch,
            train_loss,
            val,
            val_loss,
            improved,
        })
    }

    /// Model, optimizer and loop state.
    pub fn checkpoint(&self) -> Checkpoint {
        let mut records = self.network.records();
        let mut steps = serde_json::Map::new();
        for (key, m) in &self.adam.moments {
            steps.insert(key.clone(), json!(m.step));
            for (tag, t) in [("adam_m", &m.m), ("adam_v", &m.v)] {
                records.push(Record {
                    name: key.clone(),
                    tag: tag.into(),
                    shape: t.shape().to_vec(),
                    data: t.data().to_vec(),
                });
            }
        }
        Checkpoint {
            meta: json!({
                "config_hash": self.config.hash(),
                "config": self.config.to_toml(),
                "regime": self.config.regime,
                "model": self.network.spec,
                "state": self.state,
                "adam_steps": steps,
            }),
            records,
        }
    }

    /// Restores model, optimizer and loop state from a checkpoint written by
    /// [`Trainer::checkpoint`] under the same configuration.
    pub fn restore(&mut self, ckpt: &Checkpoint) -> Result<()> {
        let hash = ckpt.meta.get("config_hash").and_then(|h| h.as_str());
        if hash != Some(self.config.hash().as_str()) {
            return Err(Error::Checkpoint(format!(
                "checkpoint config hash {:?} differs from this run's {}",
                hash,
                self.config.hash()
            )));
        }
        self.network.load_records(&ckpt.records)?;
        let state: TrainState = serde_json::from_value(ckpt.meta["state"].clone())
            .map_err(|e| Error::Checkpoint(format!("bad loop state: {e}")))?;
        let steps = ckpt.meta["adam_steps"]
            .as_object()
            .ok_or_else(|| Error::Checkpoint("missing optimizer steps".into()))?;
        let mut moments = std::collections::BTreeMap::new();
        for (key, step) in steps {
            let find = |tag: &str| {
                ckpt.with_tag(tag)
                    .find(|r| &r.name == key)
                    .ok_or_else(|| Error::Checkpoint(format!("missing {tag} for {key}")))
                    .and_then(|r| Tensor::new(r.shape.clone(), r.data.clone()))
            };
            moments.insert(
                key.clone(),
                AdamMoments {
                    step: step.as_u64().ok_or_else(|| Error::Checkpoint(format!("bad step for {key}")))?,
                    m: find("adam_m")?,
                    v: find("adam_v")?,
                },
            );
        }
        self.adam.moments = moments;
        self.state = state;
        Ok(())
    }
}
