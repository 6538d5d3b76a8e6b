//! Pool selection strategies: pick `k` of the raw train samples to annotate.
//!
//! Every strategy returns exactly `k` distinct ids drawn from its input and
//! is a pure function of (embeddings, ids, k, parameters, seed, and for
//! vote-k the confidence transcript). Inputs are sorted by id first, so
//! results do not depend on the order ids are supplied in and all ties go
//! to the lexicographically smaller id.

mod kmeans;
mod votek;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::TaskAnnotation;
use crate::embedding::{squared_euclidean, EmbeddingStore};
use crate::error::{Error, Result};

pub use kmeans::{kmeans, kmeans_from, kmeans_plus_plus, KMeansParams, KMeansResult};
pub use votek::{
    build_vote_graph, select_vote_k, stage1_greedy, vote_scores, ConfidenceScorer, VoteGraph, VoteKParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Central,
    Cluster,
    Votek,
    Random,
    /// The whole train split; used for oracle runs.
    Oracle,
}

impl Strategy {
    pub const BUDGETED: [Strategy; 4] = [Strategy::Central, Strategy::Cluster, Strategy::Votek, Strategy::Random];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Central => "central",
            Strategy::Cluster => "cluster",
            Strategy::Votek => "votek",
            Strategy::Random => "random",
            Strategy::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "").as_str() {
            "central" => Ok(Strategy::Central),
            "cluster" => Ok(Strategy::Cluster),
            "votek" => Ok(Strategy::Votek),
            "random" => Ok(Strategy::Random),
            "oracle" => Ok(Strategy::Oracle),
            other => Err(Error::Argument(format!("unknown strategy {other:?}"))),
        }
    }
}

/// Vector space the geometric strategies work in.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    /// Unit-length vectors, so Euclidean and cosine orderings agree.
    #[default]
    Normalized,
    Raw,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PoolParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<Geometry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kmeans: Option<KMeansParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub votek: Option<VoteKParams>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Strategy label, e.g. `votek-stage1-only` when no confidence was available.
    pub method: String,
    pub source_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage1_ids: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence_provider: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kmeans_inertia: Option<f64>,
}

/// The samples chosen for annotation. Persisted as JSON so annotation can be
/// done out of band; `annotations` holds labels once they exist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pool {
    pub strategy: Strategy,
    pub k: usize,
    pub seed: u64,
    pub params: PoolParams,
    pub ids: Vec<String>,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub annotations: BTreeMap<String, TaskAnnotation>,
}

impl Pool {
    /// Checks `|ids| = k`, distinctness and membership in `train_ids`.
    pub fn validate(&self, train_ids: &[String]) -> Result<()> {
        if self.ids.len() != self.k {
            return Err(Error::Argument(format!("pool has {} ids but k = {}", self.ids.len(), self.k)));
        }
        let mut seen = HashSet::new();
        let train: HashSet<&str> = train_ids.iter().map(String::as_str).collect();
        for id in &self.ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::Argument(format!("pool repeats id {id}")));
            }
            if !train.contains(id.as_str()) {
                return Err(Error::Argument(format!("pool id {id} is not in the train split")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub(crate) fn check_budget(train_ids: &[String], k: usize) -> Result<Vec<String>> {
    if k == 0 {
        return Err(Error::Argument("annotation budget k must be at least 1".into()));
    }
    if k > train_ids.len() {
        return Err(Error::Argument(format!("budget k = {k} exceeds {} train samples", train_ids.len())));
    }
    let mut ids = train_ids.to_vec();
    ids.sort();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Argument("train ids are not unique".into()));
    }
    Ok(ids)
}

pub(crate) fn points(store: &EmbeddingStore, ids: &[String], geometry: Geometry) -> Result<Vec<Vec<f64>>> {
    ids.iter()
        .map(|id| {
            let v = store.get(id)?;
            Ok(match geometry {
                Geometry::Normalized => v.normalized(),
                Geometry::Raw => v.values().to_vec(),
            })
        })
        .collect()
}

pub(crate) fn mean(points: &[Vec<f64>]) -> Vec<f64> {
    let dim = points.first().map_or(0, Vec::len);
    let mut m = vec![0.0; dim];
    for p in points {
        for (a, b) in m.iter_mut().zip(p) {
            *a += b;
        }
    }
    let n = points.len().max(1) as f64;
    m.iter_mut().for_each(|a| *a /= n);
    m
}

/// The `k` samples closest (Euclidean) to the mean of all train vectors.
pub fn select_central(store: &EmbeddingStore, train_ids: &[String], k: usize, geometry: Geometry) -> Result<Pool> {
    let ids = check_budget(train_ids, k)?;
    let pts = points(store, &ids, geometry)?;
    let center = mean(&pts);
    let mut order: Vec<(f64, usize)> =
        pts.iter().enumerate().map(|(i, p)| (squared_euclidean(p, &center), i)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(Pool {
        strategy: Strategy::Central,
        k,
        seed: 0,
        params: PoolParams { geometry: Some(geometry), ..Default::default() },
        ids: order.into_iter().take(k).map(|(_, i)| ids[i].clone()).collect(),
        provenance: Provenance { method: "central".into(), source_size: ids.len(), ..Default::default() },
        annotations: BTreeMap::new(),
    })
}

/// Clusters the train vectors into `k` groups and, for each centroid in
/// order, takes the nearest sample not already chosen.
pub fn select_cluster(
    store: &EmbeddingStore,
    train_ids: &[String],
    k: usize,
    seed: u64,
    params: &KMeansParams,
    geometry: Geometry,
) -> Result<Pool> {
    let ids = check_budget(train_ids, k)?;
    let pts = points(store, &ids, geometry)?;
    let result = kmeans(&pts, k, seed, params)?;
    let mut taken = vec![false; ids.len()];
    let mut chosen = Vec::with_capacity(k);
    for c in &result.centroids {
        let best = (0..pts.len())
            .filter(|&i| !taken[i])
            .map(|i| (squared_euclidean(&pts[i], c), i))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .expect("k <= |D| leaves a candidate");
        taken[best.1] = true;
        chosen.push(ids[best.1].clone());
    }
    Ok(Pool {
        strategy: Strategy::Cluster,
        k,
        seed,
        params: PoolParams { geometry: Some(geometry), kmeans: Some(*params), ..Default::default() },
        ids: chosen,
        provenance: Provenance {
            method: "cluster".into(),
            source_size: ids.len(),
            kmeans_inertia: Some(result.inertia),
            ..Default::default()
        },
        annotations: BTreeMap::new(),
    })
}

/// Uniform sample without replacement: a partial Fisher-Yates shuffle of
/// the id-sorted train list driven by `ChaCha8Rng::seed_from_u64(seed)`.
pub fn select_random(train_ids: &[String], k: usize, seed: u64) -> Result<Pool> {
    let mut ids = check_budget(train_ids, k)?;
    let n = ids.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..k {
        let j = rng.random_range(i..n);
        ids.swap(i, j);
    }
    ids.truncate(k);
    Ok(Pool {
        strategy: Strategy::Random,
        k,
        seed,
        params: PoolParams::default(),
        ids,
        provenance: Provenance { method: "random".into(), source_size: n, ..Default::default() },
        annotations: BTreeMap::new(),
    })
}

/// The full train split as a pool.
pub fn select_all(train_ids: &[String]) -> Result<Pool> {
    let ids = check_budget(train_ids, train_ids.len().max(1))?;
    Ok(Pool {
        strategy: Strategy::Oracle,
        k: ids.len(),
        seed: 0,
        params: PoolParams::default(),
        provenance: Provenance { method: "oracle".into(), source_size: ids.len(), ..Default::default() },
        ids,
        annotations: BTreeMap::new(),
    })
}
