use serde::{Deserialize, Serialize};

use super::Batch;
use crate::error::{Error, Result};
use crate::kspace::dc_layer;
use crate::learners::{Forward, Parameterization, ParamRegistry, ParamRole, PnBlock, PnKind};
use crate::numerics::{Tensor, Var};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DcMode {
    /// Measured samples replace predictions (the infinite-weight limit).
    Hard,
    /// `(k + lambda s) / (1 + lambda)` with a learned lambda per cascade.
    Soft,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DccnnConfig {
    pub cascades: usize,
    pub blocks: usize,
    pub channels: usize,
    /// Global residual `x + f(x)` inside every sub-CNN.
    pub residual: bool,
    pub dc: DcMode,
}

impl Default for DccnnConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl DccnnConfig {
    /// Five cascades of five 64-channel blocks.
    pub fn paper() -> Self {
        Self {
            cascades: 5,
            blocks: 5,
            channels: 64,
            residual: true,
            dc: DcMode::Hard,
        }
    }

    /// Two cascades of three 16-channel blocks.
    pub fn desk() -> Self {
        Self {
            cascades: 2,
            blocks: 3,
            channels: 16,
            residual: true,
            dc: DcMode::Hard,
        }
    }
}

/// Deep cascade of sub-CNNs, each followed by a data-consistency layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Dccnn {
    pub config: DccnnConfig,
    pub cascades: Vec<Vec<PnBlock>>,
}

impl Dccnn {
    pub fn build(
        config: &DccnnConfig,
        kind: PnKind,
        parameterization: Parameterization,
        registry: &mut ParamRegistry,
        rng: &mut Rng,
    ) -> Result<Self> {
        if config.cascades == 0 || config.blocks < 2 || config.channels == 0 {
            return Err(Error::Config(format!(
                "DCCNN needs >= 1 cascade, >= 2 blocks and > 0 channels, got {config:?}"
            )));
        }
        let n = registry.anatomy_count();
        let mut cascades = Vec::with_capacity(config.cascades);
        for c in 0..config.cascades {
            let mut blocks = Vec::with_capacity(config.blocks);
            for b in 0..config.blocks {
                let cin = if b == 0 { 2 } else { config.channels };
                let last = b + 1 == config.blocks;
                let cout = if last { 2 } else { config.channels };
                let mut block = PnBlock::new(format!("c{c}.b{b}"), kind, cin, cout, parameterization, n);
                if last {
                    block = block.without_activation();
                }
                block.register(registry, rng)?;
                blocks.push(block);
            }
            if config.dc == DcMode::Soft {
                registry.add_shared(format!("c{c}.dc.lambda"), Tensor::scalar(1.0), ParamRole::DcWeight)?;
            }
            cascades.push(blocks);
        }
        Ok(Self {
            config: config.clone(),
            cascades,
        })
    }

    pub fn forward(&self, fw: &mut Forward<'_>, batch: &Batch<'_>) -> Result<Var> {
        let mut x = fw.input(batch.zero_filled.clone());
        for (c, blocks) in self.cascades.iter().enumerate() {
            let mut h = x;
            for block in blocks {
                h = block.forward(fw, h)?;
            }
            let y = if self.config.residual { fw.graph.add(x, h)? } else { h };
            let lambda = match self.config.dc {
                DcMode::Hard => None,
                DcMode::Soft => Some(fw.param(&format!("c{c}.dc.lambda"))?),
            };
            x = dc_layer(&mut fw.graph, y, batch.measured, batch.masks, lambda)?;
        }
        Ok(x)
    }
}
