use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// What a stored tensor does inside a block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamRole {
    /// Shared 3x3 convolution weights.
    Conv3x3,
    BnAffine,
    /// Running mean and variance; updated by forward passes, never by Adam.
    BnStat,
    Attention,
    Series,
    Parallel,
    Upsample,
    Head,
    DcWeight,
}

impl ParamRole {
    pub fn trainable(self) -> bool {
        self != ParamRole::BnStat
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamEntry {
    pub value: Tensor,
    pub role: ParamRole,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AnatomyId {
    pub index: usize,
    pub label: String,
}

/// Which partition a tensor lives in.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Partition {
    Shared,
    Specific(usize),
}

/// Named parameter store split into one anatomy-shared set and one
/// anatomy-specific set per anatomy.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamRegistry {
    labels: Vec<String>,
    shared: BTreeMap<String, ParamEntry>,
    specific: Vec<BTreeMap<String, ParamEntry>>,
    active: usize,
}

/// Parameter counts by partition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionCounts {
    pub shared: usize,
    pub specific_per_anatomy: usize,
    pub anatomies: usize,
}

impl PartitionCounts {
    /// Total stored for all anatomies: `shared + N * specific`.
    pub fn total(&self) -> usize {
        self.shared + self.anatomies * self.specific_per_anatomy
    }

    /// Parameters seen by one anatomy's forward pass.
    pub fn per_anatomy_model(&self) -> usize {
        self.shared + self.specific_per_anatomy
    }
}

impl ParamRegistry {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Config("at least one anatomy is required".into()));
        }
        let unique: BTreeSet<&String> = labels.iter().collect();
        if unique.len() != labels.len() {
            return Err(Error::Config(format!("duplicate anatomy labels in {labels:?}")));
        }
        let specific = vec![BTreeMap::new(); labels.len()];
        Ok(Self {
            labels,
            shared: BTreeMap::new(),
            specific,
            active: 0,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn anatomy_count(&self) -> usize {
        self.labels.len()
    }

    pub fn anatomy(&self, label: &str) -> Result<AnatomyId> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|index| AnatomyId {
                index,
                label: label.to_string(),
            })
            .ok_or_else(|| Error::Config(format!("unknown anatomy {label:?}; known {:?}", self.labels)))
    }

    fn contains(&self, name: &str) -> bool {
        self.shared.contains_key(name) || self.specific[0].contains_key(name)
    }

    pub fn add_shared(&mut self, name: impl Into<String>, value: Tensor, role: ParamRole) -> Result<()> {
        let name = name.into();
        if self.contains(&name) {
            return Err(Error::Config(format!("parameter {name} registered twice")));
        }
        self.shared.insert(name, ParamEntry { value, role });
        Ok(())
    }

    /// Registers `name` in every anatomy's specific set with the same initial value.
    pub fn add_specific(&mut self, name: impl Into<String>, value: Tensor, role: ParamRole) -> Result<()> {
        let name = name.into();
        if self.contains(&name) {
            return Err(Error::Config(format!("parameter {name} registered twice")));
        }
        for set in &mut self.specific {
            set.insert(
                name.clone(),
                ParamEntry {
                    value: value.clone(),
                    role,
                },
            );
        }
        Ok(())
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor, role: ParamRole, specific: bool) -> Result<()> {
        if specific {
            self.add_specific(name, value, role)
        } else {
            self.add_shared(name, value, role)
        }
    }

    /// Selects which specific set subsequent lookups read.
    pub fn switch_anatomy(&mut self, index: usize) -> Result<()> {
        if index >= self.labels.len() {
            return Err(Error::Config(format!(
                "anatomy index {index} out of range for {} anatomies",
                self.labels.len()
            )));
        }
        self.active = index;
        Ok(())
    }

    pub fn active(&self) -> AnatomyId {
        AnatomyId {
            index: self.active,
            label: self.labels[self.active].clone(),
        }
    }

    pub fn partition_of(&self, name: &str) -> Option<Partition> {
        if self.shared.contains_key(name) {
            Some(Partition::Shared)
        } else if self.specific[0].contains_key(name) {
            Some(Partition::Specific(self.active))
        } else {
            None
        }
    }

    /// Resolves `name` against the shared set, then the active specific set.
    pub fn get(&self, name: &str) -> Result<&ParamEntry> {
        self.shared
            .get(name)
            .or_else(|| self.specific[self.active].get(name))
            .ok_or_else(|| Error::Config(format!("no parameter named {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut ParamEntry> {
        if self.shared.contains_key(name) {
            return Ok(self.shared.get_mut(name).expect("checked"));
        }
        self.specific[self.active]
            .get_mut(name)
            .ok_or_else(|| Error::Config(format!("no parameter named {name}")))
    }

    /// Fully qualified key: `shared/<name>` or `specific:<label>/<name>`.
    pub fn key(&self, name: &str) -> Result<String> {
        match self.partition_of(name) {
            Some(Partition::Shared) => Ok(format!("shared/{name}")),
            Some(Partition::Specific(i)) => Ok(format!("specific:{}/{name}", self.labels[i])),
            None => Err(Error::Config(format!("no parameter named {name}"))),
        }
    }

    /// Looks up an entry by qualified key regardless of the active anatomy.
    pub fn by_key_mut(&mut self, key: &str) -> Result<&mut ParamEntry> {
        let missing = || Error::Config(format!("no parameter with key {key}"));
        let (tag, name) = key.split_once('/').ok_or_else(missing)?;
        if tag == "shared" {
            return self.shared.get_mut(name).ok_or_else(missing);
        }
        let label = tag.strip_prefix("specific:").ok_or_else(missing)?;
        let idx = self.labels.iter().position(|l| l == label).ok_or_else(missing)?;
        self.specific[idx].get_mut(name).ok_or_else(missing)
    }

    pub fn by_key(&self, key: &str) -> Option<&ParamEntry> {
        let (tag, name) = key.split_once('/')?;
        if tag == "shared" {
            return self.shared.get(name);
        }
        let label = tag.strip_prefix("specific:")?;
        let idx = self.labels.iter().position(|l| l == label)?;
        self.specific[idx].get(name)
    }

    pub fn shared(&self) -> &BTreeMap<String, ParamEntry> {
        &self.shared
    }

    pub fn specific(&self, index: usize) -> &BTreeMap<String, ParamEntry> {
        &self.specific[index]
    }

    /// Every stored tensor as `(partition tag, name, entry)`, shared first.
    pub fn records(&self) -> impl Iterator<Item = (String, &str, &ParamEntry)> {
        let shared = self.shared.iter().map(|(n, e)| ("shared".to_string(), n.as_str(), e));
        let specific = self.specific.iter().enumerate().flat_map(move |(i, set)| {
            set.iter()
                .map(move |(n, e)| (format!("specific:{}", self.labels[i]), n.as_str(), e))
        });
        shared.chain(specific)
    }

    /// Mutable access to every tensor with its qualified key.
    pub fn entries_mut(&mut self) -> impl Iterator<Item = (String, &mut ParamEntry)> {
        let labels = &self.labels;
        let shared = self.shared.iter_mut().map(|(n, e)| (format!("shared/{n}"), e));
        let specific = self.specific.iter_mut().enumerate().flat_map(move |(i, set)| {
            set.iter_mut()
                .map(move |(n, e)| (format!("specific:{}/{n}", labels[i]), e))
        });
        shared.chain(specific)
    }

    pub fn counts(&self) -> PartitionCounts {
        let count = |m: &BTreeMap<String, ParamEntry>| m.values().map(|e| e.value.numel()).sum();
        PartitionCounts {
            shared: count(&self.shared),
            specific_per_anatomy: count(&self.specific[0]),
            anatomies: self.labels.len(),
        }
    }

    /// Checks the partition invariants: disjoint names and identical specific
    /// name/shape sets across anatomies.
    pub fn census(&self) -> Result<()> {
        let first = &self.specific[0];
        for name in first.keys() {
            if self.shared.contains_key(name) {
                return Err(Error::Config(format!("{name} is both shared and specific")));
            }
        }
        for (i, set) in self.specific.iter().enumerate().skip(1) {
            if set.len() != first.len() {
                return Err(Error::Config(format!(
                    "anatomy {} has {} specific tensors, expected {}",
                    self.labels[i],
                    set.len(),
                    first.len()
                )));
            }
            for (name, entry) in set {
                match first.get(name) {
                    Some(e) if e.value.shape() == entry.value.shape() && e.role == entry.role => {}
                    _ => {
                        return Err(Error::Config(format!(
                            "specific tensor {name} of {} does not match anatomy {}",
                            self.labels[i], self.labels[0]
                        )))
                    }
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for PartitionCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "shared {} + {} x specific {} = {}",
            self.shared,
            self.anatomies,
            self.specific_per_anatomy,
            self.total()
        )
    }
}
