use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::forward::Forward;
use super::registry::{ParamRegistry, ParamRole};
use crate::error::{Error, Result};
use crate::numerics::init::kaiming_uniform;
use crate::numerics::{Tensor, Var, LEAKY_SLOPE};
use crate::rng::Rng;

/// Block variant.
///
/// * `Pn0`: conv3x3 - BN - LeakyReLU, everything shared.
/// * `Pn1`: BN per anatomy.
/// * `Pn2`: BN plus a squeeze-and-excitation gate per anatomy.
/// * `Pn3`: BN plus a series 1x1 adapter on the conv output per anatomy.
/// * `Pn4`: BN plus a parallel 1x1 branch on the block input per anatomy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PnKind {
    Pn0,
    Pn1,
    Pn2,
    Pn3,
    Pn4,
}

impl PnKind {
    pub const ALL: [PnKind; 5] = [PnKind::Pn0, PnKind::Pn1, PnKind::Pn2, PnKind::Pn3, PnKind::Pn4];
}

impl fmt::Display for PnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PnKind::Pn0 => "pn0",
            PnKind::Pn1 => "pn1",
            PnKind::Pn2 => "pn2",
            PnKind::Pn3 => "pn3",
            PnKind::Pn4 => "pn4",
        };
        f.write_str(s)
    }
}

impl FromStr for PnKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        PnKind::ALL
            .into_iter()
            .find(|k| k.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown PN kind {s:?} (pn0..pn4)")))
    }
}

/// Where the block's additive learners live.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameterization {
    /// One copy of every learner, trained on all anatomies. For PN4 the
    /// parallel branch is replicated once per anatomy and summed, with a
    /// shared BN (the parameter-matched ablation).
    Shared,
    /// BN and additive learners are kept per anatomy.
    PerAnatomy,
}

/// Squeeze-and-excitation reduction ratio.
pub const SE_REDUCTION: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PnBlock {
    pub prefix: String,
    pub kind: PnKind,
    pub cin: usize,
    pub cout: usize,
    /// Apply the trailing LeakyReLU.
    pub activation: bool,
    pub parameterization: Parameterization,
    /// Number of summed parallel 1x1 branches (PN4 only).
    pub parallel_branches: usize,
}

impl PnBlock {
    pub fn new(
        prefix: impl Into<String>,
        kind: PnKind,
        cin: usize,
        cout: usize,
        parameterization: Parameterization,
        anatomies: usize,
    ) -> Self {
        let parallel_branches = match (kind, parameterization) {
            (PnKind::Pn4, Parameterization::Shared) => anatomies,
            (PnKind::Pn4, Parameterization::PerAnatomy) => 1,
            _ => 0,
        };
        Self {
            prefix: prefix.into(),
            kind,
            cin,
            cout,
            activation: true,
            parameterization,
            parallel_branches,
        }
    }

    pub fn without_activation(mut self) -> Self {
        self.activation = false;
        self
    }

    pub fn se_hidden(&self) -> usize {
        (self.cout / SE_REDUCTION).max(1)
    }

    fn learners_specific(&self) -> bool {
        self.kind != PnKind::Pn0 && self.parameterization == Parameterization::PerAnatomy
    }

    fn name(&self, suffix: &str) -> String {
        format!("{}.{suffix}", self.prefix)
    }

    fn parallel_name(&self, branch: usize) -> String {
        if self.parallel_branches > 1 {
            self.name(&format!("parallel{branch}.weight"))
        } else {
            self.name("parallel.weight")
        }
    }

    /// Adds this block's tensors to `registry`.
    pub fn register(&self, registry: &mut ParamRegistry, rng: &mut Rng) -> Result<()> {
        let (cin, cout) = (self.cin, self.cout);
        if cin == 0 || cout == 0 {
            return Err(Error::Config(format!("{}: zero channel count", self.prefix)));
        }
        let specific = self.learners_specific();
        registry.add_shared(
            self.name("conv.weight"),
            kaiming_uniform(rng, &[cout, cin, 3, 3], cin * 9, LEAKY_SLOPE),
            ParamRole::Conv3x3,
        )?;
        registry.add(self.name("bn.gamma"), Tensor::ones(&[cout]), ParamRole::BnAffine, specific)?;
        registry.add(self.name("bn.beta"), Tensor::zeros(&[cout]), ParamRole::BnAffine, specific)?;
        registry.add(self.name("bn.running_mean"), Tensor::zeros(&[cout]), ParamRole::BnStat, specific)?;
        registry.add(self.name("bn.running_var"), Tensor::ones(&[cout]), ParamRole::BnStat, specific)?;
        match self.kind {
            PnKind::Pn0 | PnKind::Pn1 => {}
            PnKind::Pn2 => {
                let hidden = self.se_hidden();
                registry.add(
                    self.name("se.fc1.weight"),
                    kaiming_uniform(rng, &[hidden, cout], cout, LEAKY_SLOPE),
                    ParamRole::Attention,
                    specific,
                )?;
                registry.add(
                    self.name("se.fc2.weight"),
                    kaiming_uniform(rng, &[cout, hidden], hidden, 1.0),
                    ParamRole::Attention,
                    specific,
                )?;
            }
            PnKind::Pn3 => {
                registry.add(self.name("series.weight"), Tensor::zeros(&[cout, cout, 1, 1]), ParamRole::Series, specific)?;
                registry.add(self.name("series.scale"), Tensor::ones(&[cout]), ParamRole::Series, specific)?;
                registry.add(self.name("series.shift"), Tensor::zeros(&[cout]), ParamRole::Series, specific)?;
            }
            PnKind::Pn4 => {
                for k in 0..self.parallel_branches {
                    registry.add(
                        self.parallel_name(k),
                        Tensor::zeros(&[cout, cin, 1, 1]),
                        ParamRole::Parallel,
                        specific,
                    )?;
                }
            }
        }
        Ok(())
    }

    pub fn forward(&self, fw: &mut Forward<'_>, x: Var) -> Result<Var> {
        let cin = fw.graph.value(x).dims4()?.1;
        if cin != self.cin {
            return Err(Error::Config(format!(
                "{}: expects {} input channels, got {cin}",
                self.prefix, self.cin
            )));
        }
        let w = fw.param(&self.name("conv.weight"))?;
        let h = fw.graph.conv2d(x, w, None, 1, 1)?;
        let pre = match self.kind {
            PnKind::Pn0 | PnKind::Pn1 | PnKind::Pn2 => h,
            PnKind::Pn3 => {
                let c1 = fw.param(&self.name("series.weight"))?;
                let scale = fw.param(&self.name("series.scale"))?;
                let shift = fw.param(&self.name("series.shift"))?;
                let a = fw.graph.conv2d(h, c1, None, 1, 0)?;
                let a = fw.graph.channel_affine(a, scale, shift)?;
                fw.graph.add(h, a)?
            }
            PnKind::Pn4 => {
                let mut acc = h;
                for k in 0..self.parallel_branches {
                    let c1 = fw.param(&self.parallel_name(k))?;
                    let p = fw.graph.conv2d(x, c1, None, 1, 0)?;
                    acc = fw.graph.add(acc, p)?;
                }
                acc
            }
        };
        let mut y = fw.batchnorm(&self.name("bn"), pre)?;
        if self.kind == PnKind::Pn2 {
            let fc1 = fw.param(&self.name("se.fc1.weight"))?;
            let fc2 = fw.param(&self.name("se.fc2.weight"))?;
            let squeezed = fw.graph.global_avg_pool(y)?;
            let z = fw.graph.dense(squeezed, fc1, None)?;
            let z = fw.graph.leaky_relu(z, LEAKY_SLOPE);
            let z = fw.graph.dense(z, fc2, None)?;
            let gate = fw.graph.sigmoid(z);
            y = fw.graph.channel_gate(y, gate)?;
        }
        if self.activation {
            y = fw.graph.leaky_relu(y, LEAKY_SLOPE);
        }
        Ok(y)
    }
}
