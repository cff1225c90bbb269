use serde::{Deserialize, Serialize};

use super::Batch;
use crate::error::{Error, Result};
use crate::learners::{Forward, Parameterization, ParamRegistry, ParamRole, PnBlock, PnKind};
use crate::numerics::init::{bias_uniform, kaiming_uniform};
use crate::numerics::{Var, LEAKY_SLOPE};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UnetConfig {
    pub levels: usize,
    pub base_channels: usize,
}

impl Default for UnetConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl UnetConfig {
    pub fn paper() -> Self {
        Self {
            levels: 4,
            base_channels: 32,
        }
    }

    pub fn desk() -> Self {
        Self {
            levels: 4,
            base_channels: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Level {
    blocks: [PnBlock; 2],
}

/// Encoder-decoder with skip concatenations. Every 3x3 convolution is a PN
/// block; transposed convolutions and the 1x1 output head are shared.
#[derive(Clone, Debug, PartialEq)]
pub struct Unet {
    pub config: UnetConfig,
    down: Vec<Level>,
    bottleneck: Level,
    up: Vec<(String, Level)>,
}

impl Unet {
    pub fn build(
        config: &UnetConfig,
        kind: PnKind,
        parameterization: Parameterization,
        registry: &mut ParamRegistry,
        rng: &mut Rng,
    ) -> Result<Self> {
        if config.levels == 0 || config.base_channels == 0 {
            return Err(Error::Config(format!("invalid U-Net configuration {config:?}")));
        }
        let n = registry.anatomy_count();
        let mut make_level = |prefix: &str, cin: usize, cout: usize| -> Result<Level> {
            let a = PnBlock::new(format!("{prefix}.b0"), kind, cin, cout, parameterization, n);
            let b = PnBlock::new(format!("{prefix}.b1"), kind, cout, cout, parameterization, n);
            a.register(registry, rng)?;
            b.register(registry, rng)?;
            Ok(Level { blocks: [a, b] })
        };
        let width = |l: usize| config.base_channels << l;
        let mut down = Vec::with_capacity(config.levels);
        let mut cin = 2;
        for l in 0..config.levels {
            down.push(make_level(&format!("down{l}"), cin, width(l))?);
            cin = width(l);
        }
        let deepest = width(config.levels - 1);
        let bottleneck = make_level("mid", deepest, 2 * deepest)?;
        let mut up = Vec::with_capacity(config.levels);
        for l in (0..config.levels).rev() {
            let prefix = format!("up{l}");
            // input comes from the level below with twice this level's width
            up.push((prefix.clone(), make_level(&prefix, 2 * width(l), width(l))?));
        }
        for l in (0..config.levels).rev() {
            let (cin, cout) = (2 * width(l), width(l));
            registry.add_shared(
                format!("up{l}.tconv.weight"),
                kaiming_uniform(rng, &[cin, cout, 2, 2], cin * 4, LEAKY_SLOPE),
                ParamRole::Upsample,
            )?;
            registry.add_shared(format!("up{l}.tconv.bias"), bias_uniform(rng, cout, cin * 4), ParamRole::Upsample)?;
        }
        let c0 = width(0);
        registry.add_shared("head.weight", kaiming_uniform(rng, &[2, c0, 1, 1], c0, 1.0), ParamRole::Head)?;
        registry.add_shared("head.bias", bias_uniform(rng, 2, c0), ParamRole::Head)?;
        Ok(Self {
            config: config.clone(),
            down,
            bottleneck,
            up,
        })
    }

    pub fn check_extent(&self, h: usize, w: usize) -> Result<()> {
        let f = 1 << self.config.levels;
        if h % f != 0 || w % f != 0 {
            return Err(Error::Config(format!(
                "U-Net with {} levels needs extents divisible by {f}, got {h}x{w}",
                self.config.levels
            )));
        }
        Ok(())
    }

    fn level(fw: &mut Forward<'_>, level: &Level, x: Var) -> Result<Var> {
        let h = level.blocks[0].forward(fw, x)?;
        level.blocks[1].forward(fw, h)
    }

    pub fn forward(&self, fw: &mut Forward<'_>, batch: &Batch<'_>) -> Result<Var> {
        let (_, _, h, w) = batch.zero_filled.dims4()?;
        self.check_extent(h, w)?;
        let mut x = fw.input(batch.zero_filled.clone());
        let mut skips = Vec::with_capacity(self.down.len());
        for level in &self.down {
            let s = Self::level(fw, level, x)?;
            skips.push(s);
            x = fw.graph.max_pool2(s)?;
        }
        x = Self::level(fw, &self.bottleneck, x)?;
        for (prefix, level) in &self.up {
            let tw = fw.param(&format!("{prefix}.tconv.weight"))?;
            let tb = fw.param(&format!("{prefix}.tconv.bias"))?;
            let upsampled = fw.graph.conv_transpose2d(x, tw, Some(tb), 2)?;
            let skip = skips.pop().expect("one skip per level");
            let joined = fw.graph.concat(upsampled, skip)?;
            x = Self::level(fw, level, joined)?;
        }
        let hw = fw.param("head.weight")?;
        let hb = fw.param("head.bias")?;
        fw.graph.conv2d(x, hw, Some(hb), 1, 0)
    }
}
