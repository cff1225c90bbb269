//! Synthetic multi-anatomy phantoms, preprocessing, corpora on disk and
//! round-robin batch planning.

mod io;
mod phantom;
mod plan;
mod preprocess;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use io::{ingest_external, read_grayscale, sha256_hex, write_grayscale, Corpus, CorpusEntry, IngestReport, Manifest};
pub use phantom::{generate_phantoms, AnatomyProfile, Intensity, RawImage};
pub use plan::{make_epoch_plan, BatchPlan, PlanBatch};
pub use preprocess::{crop_or_pad, preprocess, CLIP};

use crate::error::{Error, Result};
use crate::kspace::ComplexImage;
use crate::learners::AnatomyId;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
        })
    }
}

/// One preprocessed, zero-phase ground-truth image.
#[derive(Clone, Debug, PartialEq)]
pub struct Slice {
    pub image: ComplexImage,
    pub anatomy: AnatomyId,
    pub split: Split,
    pub index: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnatomyData {
    pub anatomy: AnatomyId,
    pub train: Vec<Slice>,
    pub val: Vec<Slice>,
}

impl AnatomyData {
    pub fn split(&self, split: Split) -> &[Slice] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
        }
    }
}

/// Train and validation slices for every anatomy, in anatomy index order.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub height: usize,
    pub width: usize,
    pub anatomies: Vec<AnatomyData>,
}

fn slices(images: Vec<ComplexImage>, anatomy: &AnatomyId, split: Split) -> Vec<Slice> {
    images
        .into_iter()
        .enumerate()
        .map(|(index, image)| Slice {
            image,
            anatomy: anatomy.clone(),
            split,
            index,
        })
        .collect()
}

impl Dataset {
    /// Generates phantoms for each profile. Profiles become anatomies in
    /// the given order.
    pub fn synthetic(profiles: &[AnatomyProfile], train: usize, val: usize, height: usize, width: usize, seed: u64) -> Result<Self> {
        let anatomies = profiles
            .iter()
            .enumerate()
            .map(|(index, profile)| {
                let id = AnatomyId {
                    index,
                    label: profile.label.clone(),
                };
                let mut sets = [Vec::new(), Vec::new()];
                for (k, (split, count)) in [(Split::Train, train), (Split::Val, val)].into_iter().enumerate() {
                    let split_seed = rng::derive_seed(seed, &["data", &split.to_string()]);
                    let images = generate_phantoms(profile, count, height, width, split_seed)?
                        .iter()
                        .map(|raw| preprocess(raw, height, width))
                        .collect::<Result<Vec<_>>>()?;
                    sets[k] = slices(images, &id, split);
                }
                let [train, val] = sets;
                Ok(AnatomyData { anatomy: id, train, val })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            height,
            width,
            anatomies,
        })
    }

    /// Loads the listed labels from a corpus directory.
    pub fn from_corpus(dir: &Path, labels: &[String]) -> Result<Self> {
        let corpus = Corpus::open(dir)?;
        let anatomies = labels
            .iter()
            .enumerate()
            .map(|(index, label)| {
                let id = AnatomyId {
                    index,
                    label: label.clone(),
                };
                let train = slices(corpus.load(label, Split::Train)?, &id, Split::Train);
                let val = slices(corpus.load(label, Split::Val)?, &id, Split::Val);
                if train.is_empty() {
                    return Err(Error::Data(format!("corpus {} has no training slices for {label}", dir.display())));
                }
                Ok(AnatomyData { anatomy: id, train, val })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            height: corpus.manifest.height,
            width: corpus.manifest.width,
            anatomies,
        })
    }

    /// Writes every slice into a corpus directory.
    pub fn save_corpus(&self, dir: &Path, seed: Option<u64>) -> Result<Corpus> {
        let mut corpus = Corpus::open_or_create(dir, self.height, self.width)?;
        for a in &self.anatomies {
            for s in a.train.iter().chain(&a.val) {
                corpus.add(&s.image, &a.anatomy.label, s.split, s.index, seed, None)?;
            }
        }
        corpus.save_manifest()?;
        Ok(corpus)
    }

    pub fn labels(&self) -> Vec<String> {
        self.anatomies.iter().map(|a| a.anatomy.label.clone()).collect()
    }

    /// Keeps only the anatomies with these labels, re-indexed in order.
    pub fn select(&self, labels: &[String]) -> Result<Self> {
        let anatomies = labels
            .iter()
            .enumerate()
            .map(|(index, label)| {
                let a = self
                    .anatomies
                    .iter()
                    .find(|a| &a.anatomy.label == label)
                    .ok_or_else(|| Error::Data(format!("dataset has no anatomy {label:?}")))?;
                let id = AnatomyId {
                    index,
                    label: label.clone(),
                };
                let relabel = |s: &Slice| Slice {
                    anatomy: id.clone(),
                    ..s.clone()
                };
                Ok(AnatomyData {
                    anatomy: id.clone(),
                    train: a.train.iter().map(relabel).collect(),
                    val: a.val.iter().map(relabel).collect(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            height: self.height,
            width: self.width,
            anatomies,
        })
    }

    /// Per-anatomy digest of the validation images, used to check that runs
    /// were evaluated on the same data.
    pub fn val_fingerprints(&self) -> BTreeMap<String, String> {
        self.anatomies
            .iter()
            .map(|a| {
                let mut bytes = Vec::new();
                for s in &a.val {
                    for v in &s.image.re {
                        bytes.extend_from_slice(&v.to_le_bytes());
                    }
                }
                (a.anatomy.label.clone(), sha256_hex(&bytes))
            })
            .collect()
    }
}
