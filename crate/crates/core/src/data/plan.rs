use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// One anatomy-pure mini-batch: slice indices into that anatomy's set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanBatch {
    pub anatomy: usize,
    pub indices: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchPlan {
    pub batches: Vec<PlanBatch>,
}

impl BatchPlan {
    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }

    pub fn anatomy_sequence(&self) -> Vec<usize> {
        self.batches.iter().map(|b| b.anatomy).collect()
    }
}

/// Plans one epoch over `sizes`, a list of (anatomy index, slice count).
///
/// Each anatomy's slices are shuffled under (seed, epoch, anatomy) and cut
/// into batches; batches then alternate between anatomies in list order.
/// Unequal counts are an error unless `truncate` cuts every anatomy to the
/// smallest count.
pub fn make_epoch_plan(sizes: &[(usize, usize)], batch_size: usize, seed: u64, epoch: usize, truncate: bool) -> Result<BatchPlan> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let Some(min) = sizes.iter().map(|s| s.1).min() else {
        return Ok(BatchPlan::default());
    };
    if !truncate && sizes.iter().any(|s| s.1 != min) {
        let counts: Vec<String> = sizes.iter().map(|(a, n)| format!("anatomy {a}: {n}")).collect();
        return Err(Error::Data(format!(
            "anatomies need equal slice counts ({}); enable truncation to cut to {min}",
            counts.join(", ")
        )));
    }
    let per_anatomy: Vec<Vec<PlanBatch>> = sizes
        .iter()
        .map(|&(anatomy, count)| {
            let mut order: Vec<usize> = (0..count).collect();
            let mut r = rng::stream(seed, &["plan", &epoch.to_string(), &anatomy.to_string()]);
            order.shuffle(&mut r);
            order.truncate(min);
            order
                .chunks(batch_size)
                .map(|c| PlanBatch {
                    anatomy,
                    indices: c.to_vec(),
                })
                .collect()
        })
        .collect();
    let rounds = per_anatomy.iter().map(Vec::len).max().unwrap_or(0);
    let mut batches = Vec::with_capacity(rounds * sizes.len());
    for round in 0..rounds {
        for set in &per_anatomy {
            if let Some(b) = set.get(round) {
                batches.push(b.clone());
            }
        }
    }
    Ok(BatchPlan { batches })
}
