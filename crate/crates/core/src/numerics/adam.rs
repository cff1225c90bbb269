use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moments of one parameter. `step` counts the updates this parameter has
/// received, which differs between shared and anatomy-specific tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamMoments {
    pub step: u64,
    pub m: Tensor,
    pub v: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub moments: BTreeMap<String, AdamMoments>,
}

/// One parameter update request: state key, parameter, gradient.
pub struct Update<'a> {
    pub key: String,
    pub param: &'a mut Tensor,
    pub grad: &'a Tensor,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            moments: BTreeMap::new(),
        }
    }

    /// Applies one bias-corrected Adam update to every entry. All gradients
    /// are validated first; on a non-finite gradient nothing is modified.
    pub fn step(&mut self, updates: Vec<Update<'_>>) -> Result<()> {
        for u in &updates {
            if u.param.shape() != u.grad.shape() {
                return Err(Error::shape(
                    "adam_step",
                    format!("{}: param {:?} grad {:?}", u.key, u.param.shape(), u.grad.shape()),
                ));
            }
            if !u.grad.is_finite() {
                return Err(Error::Numeric(format!("non-finite gradient for {}", u.key)));
            }
        }
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        for u in updates {
            let state = self.moments.entry(u.key).or_insert_with(|| AdamMoments {
                step: 0,
                m: Tensor::zeros(u.param.shape()),
                v: Tensor::zeros(u.param.shape()),
            });
            state.step += 1;
            let t = state.step as i32;
            let c1 = 1.0 - beta1.powi(t);
            let c2 = 1.0 - beta2.powi(t);
            let m = state.m.data_mut();
            let v = state.v.data_mut();
            for (((p, g), m), v) in u.param.data_mut().iter_mut().zip(u.grad.data()).zip(m).zip(v) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let mhat = *m / c1;
                let vhat = *v / c2;
                *p -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }

    /// Drops the moments of the given keys (used when a warm-up phase ends
    /// and moments are configured to restart).
    pub fn reset(&mut self, keys: impl IntoIterator<Item = String>) {
        for k in keys {
            self.moments.remove(&k);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_step(adam: &mut Adam, w: &mut Tensor, g: f64) -> Result<()> {
        let grad = Tensor::scalar(g);
        adam.step(vec![Update {
            key: "w".into(),
            param: w,
            grad: &grad,
        }])
    }

    #[test]
    fn zero_gradient_leaves_parameter() {
        let mut adam = Adam::new(AdamConfig::default());
        let mut w = Tensor::scalar(1.25);
        scalar_step(&mut adam, &mut w, 0.0).unwrap();
        assert_eq!(w.data()[0], 1.25);
        assert_eq!(adam.moments["w"].step, 1);
    }

    #[test]
    fn first_step_matches_closed_form() {
        let cfg = AdamConfig::default();
        let mut adam = Adam::new(cfg);
        let mut w = Tensor::scalar(0.0);
        scalar_step(&mut adam, &mut w, 1.0).unwrap();
        // m = 0.1, v = 0.001; corrected both to 1 → step lr / (1 + eps)
        let expected = -cfg.lr * 1.0 / (1.0 + cfg.eps);
        assert!((w.data()[0] - expected).abs() < 1e-9);
        assert!((w.data()[0].abs() - cfg.lr).abs() < 1e-9);
    }

    #[test]
    fn quadratic_descent_converges_monotonically_after_warm_in() {
        let mut adam = Adam::new(AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        });
        let mut w = Tensor::scalar(0.0);
        let mut dist = Vec::new();
        for _ in 0..50 {
            let g = 2.0 * (w.data()[0] - 3.0);
            scalar_step(&mut adam, &mut w, g).unwrap();
            dist.push((w.data()[0] - 3.0).abs());
        }
        // from w=0 with lr 0.1 the iterate approaches 3 from below for the
        // first 25 steps, each one closer than the last
        for pair in dist[..25].windows(2) {
            assert!(pair[1] < pair[0], "{dist:?}");
        }
        assert!(dist[49] < dist[0]);
    }

    #[test]
    fn nan_gradient_aborts_without_update() {
        let mut adam = Adam::new(AdamConfig::default());
        let mut a = Tensor::scalar(1.0);
        let mut b = Tensor::scalar(2.0);
        let (ga, gb) = (Tensor::scalar(1.0), Tensor::scalar(f64::NAN));
        let err = adam
            .step(vec![
                Update { key: "a".into(), param: &mut a, grad: &ga },
                Update { key: "b".into(), param: &mut b, grad: &gb },
            ])
            .unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
        assert_eq!(a.data()[0], 1.0);
        assert!(adam.moments.is_empty());
    }
}
