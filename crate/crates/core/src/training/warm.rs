use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::models::{Checkpoint, Network, Record};
use crate::numerics::Tensor;

/// What a warm start copied.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WarmStartReport {
    /// Shared tensors copied by name.
    pub shared: usize,
    /// Anatomy-specific tensors seeded from a shared checkpoint tensor.
    pub seeded: usize,
    /// Anatomy-specific tensors left at their initial values.
    pub fresh: usize,
    /// Checkpoint tensors with no counterpart in the model.
    pub unused: Vec<String>,
}

/// Initializes `net` from a single-network checkpoint. Shared tensors are
/// copied by name; every anatomy's copy of a specific tensor that exists as
/// a shared tensor in the checkpoint (the normalization layers) is seeded
/// from it. All shape mismatches and missing shared tensors are reported
/// together.
pub fn warm_start(net: &mut Network, ckpt: &Checkpoint) -> Result<WarmStartReport> {
    let source: BTreeMap<&str, &Record> = ckpt.with_tag("shared").map(|r| (r.name.as_str(), r)).collect();
    let mut used = std::collections::BTreeSet::new();
    let mut problems = Vec::new();
    let mut report = WarmStartReport::default();
    let mut copies = Vec::new();
    for (key, entry) in net.registry.entries_mut() {
        let (tag, name) = key.split_once('/').expect("qualified key");
        match source.get(name) {
            Some(r) if r.shape != entry.value.shape() => problems.push(format!(
                "{key}: checkpoint shape {:?}, model shape {:?}",
                r.shape,
                entry.value.shape()
            )),
            Some(r) => {
                used.insert(name.to_string());
                if tag == "shared" {
                    report.shared += 1;
                } else {
                    report.seeded += 1;
                }
                copies.push((key.clone(), r));
            }
            None if tag == "shared" => problems.push(format!("{key}: absent from the checkpoint")),
            None => report.fresh += 1,
        }
    }
    if !problems.is_empty() {
        return Err(Error::Checkpoint(format!(
            "warm start is incompatible with this model:\n  {}",
            problems.join("\n  ")
        )));
    }
    for (key, r) in copies {
        net.registry.by_key_mut(&key)?.value = Tensor::new(r.shape.clone(), r.data.clone())?;
    }
    report.unused = source.keys().filter(|n| !used.contains(**n)).map(|n| n.to_string()).collect();
    Ok(report)
}
