use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::registry::{ParamRegistry, ParamRole};
use crate::error::Result;
use crate::numerics::{Graph, Tensor, Var, BN_EPS, BN_MOMENTUM};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

/// One forward pass: a fresh graph bound to the registry's active anatomy.
///
/// Parameters enter the graph as leaves named by their qualified registry
/// key. Leaves are trainable only in train mode and when their role is not
/// frozen, so frozen or inactive tensors never receive gradients.
pub struct Forward<'a> {
    pub graph: Graph,
    registry: &'a mut ParamRegistry,
    mode: Mode,
    frozen: Vec<ParamRole>,
    leaves: BTreeMap<String, Var>,
}

impl<'a> Forward<'a> {
    pub fn new(registry: &'a mut ParamRegistry, mode: Mode) -> Self {
        Self {
            graph: Graph::new(),
            registry,
            mode,
            frozen: Vec::new(),
            leaves: BTreeMap::new(),
        }
    }

    /// Shared tensors with these roles enter as constants.
    pub fn freeze_shared(mut self, roles: &[ParamRole]) -> Self {
        self.frozen = roles.to_vec();
        self
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn registry(&self) -> &ParamRegistry {
        self.registry
    }

    pub fn param(&mut self, name: &str) -> Result<Var> {
        if let Some(v) = self.leaves.get(name) {
            return Ok(*v);
        }
        let key = self.registry.key(name)?;
        let entry = self.registry.get(name)?;
        let frozen = key.starts_with("shared/") && self.frozen.contains(&entry.role);
        let trainable = self.mode == Mode::Train && entry.role.trainable() && !frozen;
        let value = entry.value.clone();
        let v = if trainable {
            self.graph.param(key, value)
        } else {
            self.graph.input(value)
        };
        self.leaves.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn input(&mut self, t: Tensor) -> Var {
        self.graph.input(t)
    }

    /// Batch norm over `x` with parameters under `prefix`. Train mode uses
    /// batch statistics and folds them into the running estimates.
    pub fn batchnorm(&mut self, prefix: &str, x: Var) -> Result<Var> {
        let gamma = self.param(&format!("{prefix}.gamma"))?;
        let beta = self.param(&format!("{prefix}.beta"))?;
        let mean_name = format!("{prefix}.running_mean");
        let var_name = format!("{prefix}.running_var");
        match self.mode {
            Mode::Eval => {
                let mean = self.registry.get(&mean_name)?.value.data().to_vec();
                let var = self.registry.get(&var_name)?.value.data().to_vec();
                let (out, _) = self.graph.batchnorm(x, gamma, beta, Some((&mean, &var)), BN_EPS)?;
                Ok(out)
            }
            Mode::Train => {
                let (out, stats) = self.graph.batchnorm(x, gamma, beta, None, BN_EPS)?;
                let stats = stats.expect("train mode reports batch statistics");
                let n = stats.count as f64;
                let unbiased = n / (n - 1.0);
                let rm = self.registry.get_mut(&mean_name)?.value.data_mut();
                for (r, m) in rm.iter_mut().zip(&stats.mean) {
                    *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * m;
                }
                let rv = self.registry.get_mut(&var_name)?.value.data_mut();
                for (r, v) in rv.iter_mut().zip(&stats.var) {
                    *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * v * unbiased;
                }
                Ok(out)
            }
        }
    }

    pub fn into_graph(self) -> Graph {
        self.graph
    }
}
