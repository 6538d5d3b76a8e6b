//! Sample embeddings, cosine similarity, and exhaustive nearest-neighbor search.

mod providers;

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Sample;
use crate::error::{Error, Result};
use crate::llmclient::{ProviderError, RetryPolicy};

pub use providers::{FileEmbeddings, HashEmbedder, HttpEmbedder};

/// A real vector with its Euclidean norm cached at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector {
    values: Vec<f64>,
    norm: f64,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Self {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        EmbeddingVector { values, norm }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Unit-length copy; zero vectors are returned unchanged.
    pub fn normalized(&self) -> Vec<f64> {
        if self.norm == 0.0 {
            return self.values.clone();
        }
        self.values.iter().map(|v| v / self.norm).collect()
    }
}

impl From<Vec<f64>> for EmbeddingVector {
    fn from(values: Vec<f64>) -> Self {
        EmbeddingVector::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.values
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `dot(a, b) / (|a| |b|)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Domain(format!("dimension mismatch: {} vs {}", a.dim(), b.dim())));
    }
    if a.norm == 0.0 || b.norm == 0.0 {
        return Err(Error::Domain("cosine similarity of a zero-norm vector".into()));
    }
    Ok((dot(&a.values, &b.values) / (a.norm * b.norm)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: String,
    pub similarity: f64,
}

/// Descending similarity, ties by ascending id.
pub fn rank_order(a: &Neighbor, b: &Neighbor) -> Ordering {
    b.similarity.total_cmp(&a.similarity).then_with(|| a.id.cmp(&b.id))
}

/// The `min(n, |candidates|)` most similar candidates, most similar first.
pub fn nearest_neighbors<'a>(
    query: &EmbeddingVector,
    candidates: impl IntoIterator<Item = (&'a str, &'a EmbeddingVector)>,
    n: usize,
) -> Result<Vec<Neighbor>> {
    if n == 0 {
        return Err(Error::Argument("neighbor count must be at least 1".into()));
    }
    let mut scored = candidates
        .into_iter()
        .map(|(id, v)| Ok(Neighbor { id: id.to_string(), similarity: cosine_similarity(query, v)? }))
        .collect::<Result<Vec<_>>>()?;
    if scored.is_empty() {
        return Err(Error::Argument("no candidates to search".into()));
    }
    if n < scored.len() {
        scored.select_nth_unstable_by(n - 1, rank_order);
        scored.truncate(n);
    }
    scored.sort_by(rank_order);
    Ok(scored)
}

/// Embeddings for one dataset, keyed by sample id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingStore {
    pub provider_tag: String,
    vectors: BTreeMap<String, EmbeddingVector>,
}

impl EmbeddingStore {
    pub fn new(provider_tag: impl Into<String>) -> Self {
        EmbeddingStore { provider_tag: provider_tag.into(), vectors: BTreeMap::new() }
    }

    pub fn dim(&self) -> Option<usize> {
        self.vectors.values().next().map(EmbeddingVector::dim)
    }

    pub fn insert(&mut self, id: impl Into<String>, v: EmbeddingVector) -> Result<()> {
        if let Some(d) = self.dim() {
            if d != v.dim() {
                return Err(Error::Config(format!("embedding dimension {} differs from store dimension {d}", v.dim())));
            }
        }
        self.vectors.insert(id.into(), v);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<&EmbeddingVector> {
        self.vectors.get(id).ok_or_else(|| Error::Config(format!("no embedding for sample {id}")))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.vectors.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &EmbeddingVector)> {
        self.vectors.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Nearest neighbors of `query` among `ids`, skipping `exclude`.
    pub fn nearest_among(
        &self,
        query: &EmbeddingVector,
        ids: &[String],
        n: usize,
        exclude: Option<&str>,
    ) -> Result<Vec<Neighbor>> {
        let candidates = ids
            .iter()
            .filter(|id| Some(id.as_str()) != exclude)
            .map(|id| Ok((id.as_str(), self.get(id)?)))
            .collect::<Result<Vec<_>>>()?;
        nearest_neighbors(query, candidates, n)
    }
}

/// One text to embed; `id` lets id-keyed providers look vectors up.
#[derive(Debug, Clone, Copy)]
pub struct EmbedInput<'a> {
    pub id: &'a str,
    pub text: &'a str,
}

pub trait EmbeddingProvider: Send + Sync {
    /// Identifies provider and model version.
    fn tag(&self) -> String;

    /// One vector per input, in input order.
    fn embed(&self, inputs: &[EmbedInput<'_>]) -> Result<Vec<Vec<f64>>, ProviderError>;

    /// Cache key for an input; content hash of the text by default.
    fn cache_key(&self, input: &EmbedInput<'_>) -> String {
        content_hash(input.text)
    }
}

pub fn content_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Vectors keyed by provider cache key. Reads are concurrent; writes are
/// serialized.
#[derive(Debug, Default)]
pub struct EmbeddingCache {
    inner: RwLock<HashMap<String, Vec<f64>>>,
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    key: String,
    vector: Vec<f64>,
}

impl EmbeddingCache {
    pub fn get(&self, key: &str) -> Option<Vec<f64>> {
        self.inner.read().expect("cache poisoned").get(key).cloned()
    }

    pub fn insert(&self, key: String, vector: Vec<f64>) {
        self.inner.write().expect("cache poisoned").insert(key, vector);
    }

    pub fn len(&self) -> usize {
        self.inner.read().expect("cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cache = EmbeddingCache::default();
        if !path.exists() {
            return Ok(cache);
        }
        for (i, line) in std::fs::read_to_string(path)?.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let l: CacheLine =
                serde_json::from_str(line).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
            cache.insert(l.key, l.vector);
        }
        Ok(cache)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let map = self.inner.read().expect("cache poisoned");
        let mut keys: Vec<&String> = map.keys().collect();
        keys.sort();
        let mut out = String::new();
        for k in keys {
            out.push_str(&serde_json::to_string(&CacheLine { key: k.clone(), vector: map[k].clone() })?);
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedOptions {
    pub batch_size: usize,
    /// Maximum concurrent provider requests.
    pub in_flight: usize,
    pub retry: RetryPolicy,
}

impl Default for EmbedOptions {
    fn default() -> Self {
        EmbedOptions { batch_size: 64, in_flight: 4, retry: RetryPolicy::default() }
    }
}

/// Embeds `inputs`, serving repeats from `cache` and sending the rest to the
/// provider in batches with at most `in_flight` concurrent requests.
pub fn embed_batch(
    inputs: &[EmbedInput<'_>],
    provider: &dyn EmbeddingProvider,
    cache: &EmbeddingCache,
    opts: &EmbedOptions,
) -> Result<Vec<EmbeddingVector>> {
    let keys: Vec<String> = inputs.iter().map(|i| provider.cache_key(i)).collect();
    let mut missing: Vec<usize> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, k) in keys.iter().enumerate() {
        if cache.get(k).is_none() && seen.insert(k.as_str()) {
            missing.push(i);
        }
    }

    let batches: Vec<&[usize]> = missing.chunks(opts.batch_size.max(1)).collect();
    for wave in batches.chunks(opts.in_flight.max(1)) {
        let results: Vec<Result<Vec<Vec<f64>>>> = std::thread::scope(|scope| {
            let handles: Vec<_> = wave
                .iter()
                .map(|batch| {
                    let batch_inputs: Vec<EmbedInput<'_>> = batch.iter().map(|&i| inputs[i]).collect();
                    scope.spawn(move || {
                        let (vectors, _) = opts
                            .retry
                            .run(|| provider.embed(&batch_inputs))
                            .map_err(|e| Error::provider("embedding", e))?;
                        if vectors.len() != batch_inputs.len() {
                            return Err(Error::provider(
                                "embedding",
                                ProviderError::Protocol(format!(
                                    "{} vectors for {} texts",
                                    vectors.len(),
                                    batch_inputs.len()
                                )),
                            ));
                        }
                        Ok(vectors)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("embedding worker panicked")).collect()
        });
        for (batch, vectors) in wave.iter().zip(results) {
            for (&i, v) in batch.iter().zip(vectors?) {
                cache.insert(keys[i].clone(), v);
            }
        }
    }

    let out: Vec<EmbeddingVector> =
        keys.iter().map(|k| EmbeddingVector::new(cache.get(k).expect("filled above"))).collect();
    if let Some(first) = out.first() {
        if let Some(bad) = out.iter().find(|v| v.dim() != first.dim()) {
            return Err(Error::Config(format!("embedding dimension mismatch: {} vs {}", first.dim(), bad.dim())));
        }
    }
    Ok(out)
}

/// Embeds every sample's text into a new store keyed by sample id.
pub fn embed_samples<'a>(
    samples: impl IntoIterator<Item = &'a Sample>,
    provider: &dyn EmbeddingProvider,
    cache: &EmbeddingCache,
    opts: &EmbedOptions,
) -> Result<EmbeddingStore> {
    let samples: Vec<&Sample> = samples.into_iter().collect();
    let inputs: Vec<EmbedInput<'_>> = samples.iter().map(|s| EmbedInput { id: &s.id, text: &s.text }).collect();
    let vectors = embed_batch(&inputs, provider, cache, opts)?;
    let mut store = EmbeddingStore::new(provider.tag());
    for (s, v) in samples.iter().zip(vectors) {
        store.insert(s.id.clone(), v)?;
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};

    fn v(x: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(x.to_vec())
    }

    #[test]
    fn cosine_examples() {
        let a = v(&[0.3, -1.2, 4.0]);
        assert!((cosine_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine_similarity(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        let c = cosine_similarity(&v(&[1.0, 1.0]), &v(&[1.0, 0.0])).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
    }

    #[test]
    fn cosine_rejects_zero_norm_and_dim_mismatch() {
        assert!(matches!(cosine_similarity(&v(&[0.0, 0.0]), &v(&[1.0, 0.0])), Err(Error::Domain(_))));
        assert!(cosine_similarity(&v(&[1.0]), &v(&[1.0, 0.0])).is_err());
    }

    #[test]
    fn norm_is_cached() {
        let x = v(&[3.0, 4.0]);
        assert!((x.norm() - 5.0).abs() < 1e-9);
    }

    #[test]
    fn neighbors_sorted_with_id_ties() {
        let q = v(&[1.0, 0.0]);
        let a = v(&[1.0, 1.0]);
        let b = v(&[1.0, 1.0]);
        let c = v(&[1.0, 0.0]);
        let out = nearest_neighbors(&q, [("b", &b), ("a", &a), ("c", &c)], 3).unwrap();
        let ids: Vec<&str> = out.iter().map(|n| n.id.as_str()).collect();
        assert_eq!(ids, vec!["c", "a", "b"]);
        assert_eq!(out[0].similarity, 1.0);
        assert_eq!(nearest_neighbors(&q, [("b", &b), ("a", &a), ("c", &c)], 10).unwrap().len(), 3);
        assert!(nearest_neighbors(&q, [("a", &a)], 0).is_err());
    }

    #[test]
    fn store_rejects_mixed_dimensions() {
        let mut s = EmbeddingStore::new("t");
        s.insert("a", v(&[1.0, 2.0])).unwrap();
        assert!(matches!(s.insert("b", v(&[1.0])), Err(Error::Config(_))));
        assert!(s.get("zzz").unwrap_err().to_string().contains("zzz"));
    }

    struct Counting {
        calls: AtomicUsize,
        dims: Vec<usize>,
    }

    impl EmbeddingProvider for Counting {
        fn tag(&self) -> String {
            "counting".into()
        }
        fn embed(&self, inputs: &[EmbedInput<'_>]) -> Result<Vec<Vec<f64>>, ProviderError> {
            let call = self.calls.fetch_add(1, AtomicOrdering::SeqCst);
            let dim = self.dims[call.min(self.dims.len() - 1)];
            Ok(inputs.iter().map(|i| vec![i.text.len() as f64 + 1.0; dim]).collect())
        }
    }

    #[test]
    fn cache_serves_repeats() {
        let p = Counting { calls: AtomicUsize::new(0), dims: vec![2] };
        let cache = EmbeddingCache::default();
        let inputs = [EmbedInput { id: "a", text: "x" }, EmbedInput { id: "b", text: "x" }];
        let first = embed_batch(&inputs, &p, &cache, &EmbedOptions::default()).unwrap();
        assert_eq!(first[0], first[1]);
        let again = embed_batch(&inputs, &p, &cache, &EmbedOptions::default()).unwrap();
        assert_eq!(first, again);
        assert_eq!(p.calls.load(AtomicOrdering::SeqCst), 1);
        assert!(embed_batch(&[], &p, &cache, &EmbedOptions::default()).unwrap().is_empty());
    }

    #[test]
    fn dimension_mismatch_across_batches_is_fatal() {
        let p = Counting { calls: AtomicUsize::new(0), dims: vec![2, 3] };
        let cache = EmbeddingCache::default();
        let inputs = [EmbedInput { id: "a", text: "x" }, EmbedInput { id: "b", text: "yy" }];
        let opts = EmbedOptions { batch_size: 1, in_flight: 1, ..Default::default() };
        assert!(matches!(embed_batch(&inputs, &p, &cache, &opts), Err(Error::Config(_))));
    }

    #[test]
    fn cache_file_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let cache = EmbeddingCache::default();
        let vals = vec![0.1 + 0.2, -1.0 / 3.0, 1e-300, 123456.789];
        cache.insert("k".into(), vals.clone());
        cache.save(&path).unwrap();
        let loaded = EmbeddingCache::load(&path).unwrap();
        let got = loaded.get("k").unwrap();
        assert_eq!(
            got.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            vals.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }
}
