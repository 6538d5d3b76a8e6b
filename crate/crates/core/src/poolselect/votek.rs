//! Two-stage vote-k selection.
//!
//! Stage 1 builds a directed kNN graph (edge `v -> u` when `u` is among the
//! `graph_degree` cosine-nearest neighbors of `v`) and greedily picks the
//! unselected `u` maximizing
//!
//! ```text
//! score(u) = sum over unselected voters v with v -> u of rho^(-|N_out(v) ∩ selected|)
//! ```
//!
//! Stage 2 scores every remaining sample with a model-confidence hook
//! (prompting with the stage-1 pool as demonstrations), sorts by confidence
//! descending, splits the ranking into `k - |stage 1|` contiguous buckets
//! (sizes differ by at most one, larger buckets first) and takes the
//! highest-scoring sample of each bucket, scored against the final stage-1
//! selection.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_budget, Pool, PoolParams, Provenance, Strategy};
use crate::embedding::EmbeddingStore;
use crate::error::{Error, Result};
use crate::llmclient::ProviderError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VoteKParams {
    /// Out-edges per node in the kNN graph; must be below |D|.
    pub graph_degree: usize,
    /// Discount base for voters that already have selected neighbors; > 1.
    pub rho: f64,
    /// Share of the budget picked by stage 1 when confidence is available.
    pub stage1_fraction: f64,
}

impl Default for VoteKParams {
    fn default() -> Self {
        VoteKParams { graph_degree: 150, rho: 10.0, stage1_fraction: 0.1 }
    }
}

impl VoteKParams {
    /// Caps the graph degree at `pool_size - 1`.
    pub fn capped(mut self, pool_size: usize) -> Self {
        self.graph_degree = self.graph_degree.min(pool_size.saturating_sub(1));
        self
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.graph_degree >= n {
            return Err(Error::Argument(format!(
                "graph degree {} must be below the {n} candidate samples",
                self.graph_degree
            )));
        }
        if self.rho.is_nan() || self.rho <= 1.0 {
            return Err(Error::Argument(format!("rho must exceed 1, got {}", self.rho)));
        }
        if !(self.stage1_fraction > 0.0 && self.stage1_fraction <= 1.0) {
            return Err(Error::Argument(format!("stage1_fraction {} not in (0, 1]", self.stage1_fraction)));
        }
        Ok(())
    }
}

/// Stage-2 hook: confidence of the model on `sample_id` when prompted with
/// demonstrations drawn from `pool_ids`. Higher means more confident.
pub trait ConfidenceScorer: Sync {
    fn confidence(&self, sample_id: &str, pool_ids: &[String]) -> Result<f64>;
}

impl<F> ConfidenceScorer for F
where
    F: Fn(&str, &[String]) -> Result<f64> + Sync,
{
    fn confidence(&self, sample_id: &str, pool_ids: &[String]) -> Result<f64> {
        self(sample_id, pool_ids)
    }
}

/// kNN graph over id-sorted samples.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteGraph {
    pub ids: Vec<String>,
    pub out_edges: Vec<Vec<usize>>,
    pub in_edges: Vec<Vec<usize>>,
}

pub fn build_vote_graph(store: &EmbeddingStore, sorted_ids: &[String], degree: usize) -> Result<VoteGraph> {
    let position: BTreeMap<&str, usize> = sorted_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let out_edges: Vec<Vec<usize>> = sorted_ids
        .par_iter()
        .map(|id| {
            if degree == 0 {
                return Ok(Vec::new());
            }
            let nn = store.nearest_among(store.get(id)?, sorted_ids, degree, Some(id))?;
            Ok(nn.iter().map(|n| position[n.id.as_str()]).collect())
        })
        .collect::<Result<_>>()?;
    let mut in_edges = vec![Vec::new(); sorted_ids.len()];
    for (v, outs) in out_edges.iter().enumerate() {
        for &u in outs {
            in_edges[u].push(v);
        }
    }
    Ok(VoteGraph { ids: sorted_ids.to_vec(), out_edges, in_edges })
}

/// Current vote score of every node; selected nodes score `-inf`.
pub fn vote_scores(graph: &VoteGraph, selected: &[bool], rho: f64) -> Vec<f64> {
    let hits: Vec<i32> =
        graph.out_edges.iter().map(|outs| outs.iter().filter(|&&u| selected[u]).count() as i32).collect();
    (0..graph.ids.len())
        .into_par_iter()
        .map(|u| {
            if selected[u] {
                return f64::NEG_INFINITY;
            }
            graph.in_edges[u].iter().filter(|&&v| !selected[v]).map(|&v| rho.powi(-hits[v])).sum()
        })
        .collect()
}

/// Scores within a relative 1e-12 count as tied; ties go to the lower index
/// (lexicographically smaller id).
fn argmax(scores: &[f64], eligible: impl Iterator<Item = usize>) -> Option<usize> {
    let mut best: Option<usize> = None;
    for i in eligible {
        match best {
            None => best = Some(i),
            Some(b) => {
                let (a, s) = (scores[i], scores[b]);
                if a - s > 1e-12 * a.abs().max(s.abs()).max(1.0) {
                    best = Some(i);
                }
            }
        }
    }
    best
}

/// Greedy stage 1: returns the picked node indices in order and the scores
/// against the final selection.
pub fn stage1_greedy(graph: &VoteGraph, m: usize, rho: f64) -> (Vec<usize>, Vec<f64>) {
    let n = graph.ids.len();
    let mut selected = vec![false; n];
    let mut order = Vec::with_capacity(m);
    for _ in 0..m.min(n) {
        let scores = vote_scores(graph, &selected, rho);
        let pick = argmax(&scores, (0..n).filter(|&i| !selected[i])).expect("unselected node remains");
        selected[pick] = true;
        order.push(pick);
    }
    let scores = vote_scores(graph, &selected, rho);
    (order, scores)
}

pub fn select_vote_k(
    store: &EmbeddingStore,
    train_ids: &[String],
    k: usize,
    params: &VoteKParams,
    confidence: Option<&dyn ConfidenceScorer>,
    seed: u64,
) -> Result<Pool> {
    let ids = check_budget(train_ids, k)?;
    params.validate(ids.len())?;
    let graph = build_vote_graph(store, &ids, params.graph_degree)?;

    let stage1_size = match confidence {
        Some(_) => ((params.stage1_fraction * k as f64).ceil() as usize).clamp(1, k),
        None => k,
    };
    let (stage1, scores) = stage1_greedy(&graph, stage1_size, params.rho);
    let mut chosen: Vec<usize> = stage1.clone();
    let stage1_ids: Vec<String> = stage1.iter().map(|&i| ids[i].clone()).collect();

    if let Some(scorer) = confidence.filter(|_| stage1_size < k) {
        let mut in_stage1 = vec![false; ids.len()];
        stage1.iter().for_each(|&i| in_stage1[i] = true);
        let remaining: Vec<usize> = (0..ids.len()).filter(|&i| !in_stage1[i]).collect();
        let conf: Result<Vec<f64>> =
            remaining.par_iter().map(|&i| scorer.confidence(&ids[i], &stage1_ids)).collect::<Result<_>>();
        let conf = match conf {
            Ok(c) => c,
            // No log-probabilities: fall back to stage 1 for the whole budget.
            Err(Error::Provider { source: ProviderError::Capability(_), .. }) => {
                return select_vote_k(store, &ids, k, params, None, seed);
            }
            Err(Error::Provider { source, .. }) => return Err(Error::provider("vote-k stage 2", source)),
            Err(e) => return Err(e),
        };
        let mut ranked: Vec<(f64, usize)> = conf.into_iter().zip(remaining).collect();
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

        let buckets = k - stage1_size;
        let (base, extra) = (ranked.len() / buckets, ranked.len() % buckets);
        let mut start = 0;
        for b in 0..buckets {
            let len = base + usize::from(b < extra);
            let mut members: Vec<usize> = ranked[start..start + len].iter().map(|&(_, i)| i).collect();
            members.sort_unstable();
            chosen.push(argmax(&scores, members.into_iter()).expect("buckets are non-empty"));
            start += len;
        }
    }

    let method = if confidence.is_some() { "votek" } else { "votek-stage1-only" };
    Ok(Pool {
        strategy: Strategy::Votek,
        k,
        seed,
        params: PoolParams { votek: Some(*params), ..Default::default() },
        ids: chosen.into_iter().map(|i| ids[i].clone()).collect(),
        provenance: Provenance {
            method: method.into(),
            source_size: ids.len(),
            stage1_ids: Some(stage1_ids),
            ..Default::default()
        },
        annotations: Default::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::EmbeddingVector;

    fn circle(n: usize) -> (EmbeddingStore, Vec<String>) {
        let mut s = EmbeddingStore::new("t");
        let mut ids = Vec::new();
        for i in 0..n {
            let a = i as f64 * 0.37 + (i * i) as f64 * 0.011;
            let id = format!("p{i:02}");
            s.insert(&id, EmbeddingVector::new(vec![a.cos(), a.sin(), 0.2 * (i % 3) as f64])).unwrap();
            ids.push(id);
        }
        (s, ids)
    }

    #[test]
    fn k1_takes_the_top_initial_score() {
        let (s, ids) = circle(12);
        let params = VoteKParams { graph_degree: 3, ..Default::default() };
        let pool = select_vote_k(&s, &ids, 1, &params, None, 0).unwrap();
        let graph = build_vote_graph(&s, &ids, 3).unwrap();
        let scores = vote_scores(&graph, &[false; 12], 10.0);
        let best = (0..12).max_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(b.cmp(&a))).unwrap();
        assert_eq!(pool.ids, vec![ids[best].clone()]);
        assert_eq!(pool.provenance.method, "votek-stage1-only");
    }

    #[test]
    fn initial_scores_are_in_degrees() {
        let (s, ids) = circle(10);
        let graph = build_vote_graph(&s, &ids, 4).unwrap();
        let scores = vote_scores(&graph, &[false; 10], 10.0);
        for (s, ins) in scores.iter().zip(&graph.in_edges) {
            assert_eq!(*s, ins.len() as f64);
        }
    }

    #[test]
    fn rejects_degenerate_parameters() {
        let (s, ids) = circle(5);
        let deg = VoteKParams { graph_degree: 5, ..Default::default() };
        assert!(matches!(select_vote_k(&s, &ids, 2, &deg, None, 0), Err(Error::Argument(_))));
        let rho = VoteKParams { graph_degree: 2, rho: 1.0, ..Default::default() };
        assert!(select_vote_k(&s, &ids, 2, &rho, None, 0).is_err());
    }

    #[test]
    fn stage2_uses_confidence_buckets() {
        let (s, ids) = circle(20);
        let params = VoteKParams { graph_degree: 4, rho: 10.0, stage1_fraction: 0.25 };
        let scorer = |id: &str, _pool: &[String]| -> Result<f64> { Ok(id[1..].parse::<f64>().unwrap()) };
        let pool = select_vote_k(&s, &ids, 4, &params, Some(&scorer), 0).unwrap();
        assert_eq!(pool.ids.len(), 4);
        assert_eq!(pool.provenance.stage1_ids.as_ref().unwrap().len(), 1);
        assert_eq!(pool.provenance.method, "votek");
        pool.validate(&ids).unwrap();
    }

    #[test]
    fn stage2_failure_names_the_stage() {
        let (s, ids) = circle(10);
        let params = VoteKParams { graph_degree: 3, rho: 10.0, stage1_fraction: 0.5 };
        let scorer = |_: &str, _: &[String]| -> Result<f64> {
            Err(Error::provider("confidence", ProviderError::Fatal("bad key".into())))
        };
        let err = select_vote_k(&s, &ids, 4, &params, Some(&scorer), 0).unwrap_err();
        assert!(err.to_string().contains("stage 2"), "{err}");
    }

    #[test]
    fn missing_logprobs_falls_back_to_stage1() {
        let (s, ids) = circle(10);
        let params = VoteKParams { graph_degree: 3, rho: 10.0, stage1_fraction: 0.5 };
        let scorer = |_: &str, _: &[String]| -> Result<f64> {
            Err(Error::provider("confidence", ProviderError::Capability("no logprobs".into())))
        };
        let pool = select_vote_k(&s, &ids, 4, &params, Some(&scorer), 0).unwrap();
        let plain = select_vote_k(&s, &ids, 4, &params, None, 0).unwrap();
        assert_eq!(pool.ids, plain.ids);
        assert_eq!(pool.provenance.method, "votek-stage1-only");
    }
}
