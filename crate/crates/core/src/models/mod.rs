//! Reconstruction networks assembled from PN blocks: a data-driven U-Net and
//! a model-driven DCCNN with data-consistency layers.

mod checkpoint;
mod dccnn;
mod unet;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use checkpoint::{Checkpoint, Record, CHECKPOINT_VERSION};
pub use dccnn::{DcMode, Dccnn, DccnnConfig};
pub use unet::{Unet, UnetConfig};

use crate::error::{Error, Result};
use crate::kspace::{ComplexImage, SamplingMask};
use crate::learners::{Forward, Mode, Parameterization, ParamRegistry, ParamRole, PnKind};
use crate::numerics::{Graph, Tensor, Var};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Unet,
    Dccnn,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Unet => "unet",
            ModelKind::Dccnn => "dccnn",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "unet" | "u-net" => Ok(ModelKind::Unet),
            "dccnn" => Ok(ModelKind::Dccnn),
            _ => Err(Error::Config(format!("unknown model {s:?} (unet|dccnn)"))),
        }
    }
}

/// Everything needed to rebuild a network's structure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub pn: PnKind,
    pub parameterization: Parameterization,
    pub anatomies: Vec<String>,
    #[serde(default)]
    pub dccnn: DccnnConfig,
    #[serde(default)]
    pub unet: UnetConfig,
}

/// Network inputs for one anatomy-pure mini-batch.
pub struct Batch<'a> {
    /// `[B, 2, H, W]` zero-filled reconstructions.
    pub zero_filled: Tensor,
    pub measured: &'a [ComplexImage],
    pub masks: &'a [SamplingMask],
}

impl<'a> Batch<'a> {
    pub fn new(measured: &'a [ComplexImage], masks: &'a [SamplingMask]) -> Result<Self> {
        let images = measured
            .iter()
            .map(crate::kspace::zero_filled)
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&ComplexImage> = images.iter().collect();
        Ok(Self {
            zero_filled: crate::kspace::batch_to_network(&refs)?,
            measured,
            masks,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Architecture {
    Unet(Unet),
    Dccnn(Dccnn),
}

/// A built model together with its parameter registry.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub spec: ModelSpec,
    arch: Architecture,
    pub registry: ParamRegistry,
}

/// Output of one forward pass: the graph and the reconstructed image node.
pub struct ForwardPass {
    pub graph: Graph,
    pub output: Var,
}

/// Builds a network with deterministic initialisation under `seed`.
pub fn build_model(spec: &ModelSpec, seed: u64) -> Result<Network> {
    let mut registry = ParamRegistry::new(spec.anatomies.clone())?;
    let mut init = rng::stream(seed, &["init"]);
    let arch = match spec.kind {
        ModelKind::Unet => Architecture::Unet(Unet::build(&spec.unet, spec.pn, spec.parameterization, &mut registry, &mut init)?),
        ModelKind::Dccnn => {
            Architecture::Dccnn(Dccnn::build(&spec.dccnn, spec.pn, spec.parameterization, &mut registry, &mut init)?)
        }
    };
    registry.census()?;
    Ok(Network {
        spec: spec.clone(),
        arch,
        registry,
    })
}

impl Network {
    pub fn switch_anatomy(&mut self, index: usize) -> Result<()> {
        self.registry.switch_anatomy(index)
    }

    /// Runs the network on `batch` for the active anatomy. Shared tensors
    /// whose role is in `frozen` enter as constants.
    pub fn forward(&mut self, batch: &Batch<'_>, mode: Mode, frozen: &[ParamRole]) -> Result<ForwardPass> {
        let mut fw = Forward::new(&mut self.registry, mode).freeze_shared(frozen);
        let output = match &self.arch {
            Architecture::Unet(u) => u.forward(&mut fw, batch)?,
            Architecture::Dccnn(d) => d.forward(&mut fw, batch)?,
        };
        Ok(ForwardPass {
            graph: fw.into_graph(),
            output,
        })
    }

    /// Reconstructs a batch for anatomy `index` and unpacks the images.
    pub fn reconstruct(
        &mut self,
        index: usize,
        measured: &[ComplexImage],
        masks: &[SamplingMask],
        mode: Mode,
    ) -> Result<Vec<ComplexImage>> {
        self.switch_anatomy(index)?;
        let batch = Batch::new(measured, masks)?;
        let pass = self.forward(&batch, mode, &[])?;
        let out = pass.graph.value(pass.output);
        (0..measured.len()).map(|b| ComplexImage::from_network(out, b)).collect()
    }

    /// Tensor records tagged by partition, shared first.
    pub fn records(&self) -> Vec<Record> {
        self.registry
            .records()
            .map(|(tag, name, entry)| Record {
                name: name.to_string(),
                tag,
                shape: entry.value.shape().to_vec(),
                data: entry.value.data().to_vec(),
            })
            .collect()
    }

    /// Restores every registry tensor from `records`; all must be present
    /// with matching shapes.
    pub fn load_records(&mut self, records: &[Record]) -> Result<()> {
        let mut seen = 0;
        for r in records.iter().filter(|r| r.tag == "shared" || r.tag.starts_with("specific:")) {
            let key = format!("{}/{}", r.tag, r.name);
            let entry = self
                .registry
                .by_key_mut(&key)
                .map_err(|_| Error::Checkpoint(format!("checkpoint tensor {key} does not exist in this model")))?;
            if entry.value.shape() != r.shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "{key}: checkpoint shape {:?}, model shape {:?}",
                    r.shape,
                    entry.value.shape()
                )));
            }
            entry.value = Tensor::new(r.shape.clone(), r.data.clone())?;
            seen += 1;
        }
        let expected = self.registry.records().count();
        if seen != expected {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds {seen} model tensors, model has {expected}"
            )));
        }
        Ok(())
    }
}
