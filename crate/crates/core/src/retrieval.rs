//! Per-inference-sample demonstration selection from an annotated pool.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::Sample;
use crate::embedding::{EmbeddingStore, Neighbor};
use crate::error::{Error, Result};
use crate::poolselect::Pool;

pub const DEFAULT_N_DEMOS: usize = 5;

/// Demonstrations in prompt order: ascending similarity, so the most similar
/// one sits right before the inference sample. The order is exactly the
/// reverse of the nearest-neighbor ranking (similarity descending, id
/// ascending).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemonstrationSet {
    pub inference_id: String,
    pub demos: Vec<Neighbor>,
}

impl DemonstrationSet {
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.demos.iter().map(|d| d.id.as_str())
    }

    pub fn len(&self) -> usize {
        self.demos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demos.is_empty()
    }
}

pub fn select_demonstrations(
    pool: &Pool,
    store: &EmbeddingStore,
    inference: &Sample,
    n: usize,
) -> Result<DemonstrationSet> {
    demonstrations_from_ids(&pool.ids, store, &inference.id, n)
}

/// The `min(n, |pool|)` pool members most similar to `inference_id`,
/// excluding the inference sample itself.
pub fn demonstrations_from_ids(
    pool_ids: &[String],
    store: &EmbeddingStore,
    inference_id: &str,
    n: usize,
) -> Result<DemonstrationSet> {
    if n == 0 {
        return Err(Error::Argument("demonstration count must be at least 1".into()));
    }
    if pool_ids.is_empty() {
        return Err(Error::Argument("demonstration pool is empty".into()));
    }
    let query = store.get(inference_id)?;
    if pool_ids.iter().all(|id| id == inference_id) {
        return Ok(DemonstrationSet { inference_id: inference_id.to_string(), demos: Vec::new() });
    }
    let mut demos = store.nearest_among(query, pool_ids, n, Some(inference_id))?;
    demos.reverse();
    Ok(DemonstrationSet { inference_id: inference_id.to_string(), demos })
}

/// Number of distinct train samples that appear among the `n` nearest train
/// neighbors of any test sample.
pub fn compute_max_pool_size(train: &[Sample], test: &[Sample], store: &EmbeddingStore, n: usize) -> Result<usize> {
    Ok(max_pool_members(train, test, store, n)?.len())
}

/// The union itself, sorted by id.
pub fn max_pool_members(
    train: &[Sample],
    test: &[Sample],
    store: &EmbeddingStore,
    n: usize,
) -> Result<BTreeSet<String>> {
    use rayon::prelude::*;

    let train_ids: Vec<String> = train.iter().map(|s| s.id.clone()).collect();
    for id in &train_ids {
        store.get(id)?;
    }
    if train_ids.is_empty() {
        return Ok(BTreeSet::new());
    }
    let per_test: Vec<Vec<Neighbor>> = test
        .par_iter()
        .map(|t| {
            let query = store.get(&t.id)?;
            if train_ids.iter().all(|id| *id == t.id) {
                return Ok(Vec::new());
            }
            store.nearest_among(query, &train_ids, n, Some(&t.id))
        })
        .collect::<Result<_>>()?;
    Ok(per_test.into_iter().flatten().map(|nb| nb.id).collect())
}
