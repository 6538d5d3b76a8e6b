use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::{EmbedInput, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::llmclient::{post_json, HttpEndpoint, ProviderError};

/// Seeded pseudo-embedder for tests and offline runs: each whitespace token
/// maps to a fixed random vector and a text embeds to the sum of its token
/// vectors plus a small whole-text component. Texts sharing tokens are
/// therefore more similar than unrelated texts.
#[derive(Debug, Clone, Copy)]
pub struct HashEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        HashEmbedder { dim, seed }
    }

    fn unit_noise(&self, domain: &[u8], key: &str) -> Vec<f64> {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(domain);
        h.update(key.as_bytes());
        let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
        (0..self.dim).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    pub fn embed_text(&self, text: &str) -> Vec<f64> {
        let mut out = self.unit_noise(b"text", text);
        for x in &mut out {
            *x *= 0.25;
        }
        for tok in text.split_whitespace() {
            for (o, t) in out.iter_mut().zip(self.unit_noise(b"tok", &tok.to_lowercase())) {
                *o += t;
            }
        }
        out
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn tag(&self) -> String {
        format!("hash(dim={},seed={})", self.dim, self.seed)
    }

    fn embed(&self, inputs: &[EmbedInput<'_>]) -> Result<Vec<Vec<f64>>, ProviderError> {
        if self.dim == 0 {
            return Err(ProviderError::Fatal("embedding dimension must be positive".into()));
        }
        Ok(inputs.iter().map(|i| self.embed_text(i.text)).collect())
    }
}

/// Precomputed vectors from JSONL lines `{"id": ..., "vector": [...]}`.
#[derive(Debug, Clone)]
pub struct FileEmbeddings {
    source: String,
    vectors: HashMap<String, Vec<f64>>,
}

#[derive(Deserialize)]
struct VectorLine {
    id: String,
    vector: Vec<f64>,
}

impl FileEmbeddings {
    pub fn parse(text: &str, source: impl Into<String>) -> Result<Self> {
        let mut vectors = HashMap::new();
        let mut dim = None;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let l: VectorLine =
                serde_json::from_str(line).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
            match dim {
                None => dim = Some(l.vector.len()),
                Some(d) if d != l.vector.len() => {
                    return Err(Error::Config(format!(
                        "line {}: vector dimension {} differs from {d}",
                        i + 1,
                        l.vector.len()
                    )))
                }
                _ => {}
            }
            if vectors.insert(l.id.clone(), l.vector).is_some() {
                return Err(Error::Parse { line: i + 1, message: format!("duplicate id {}", l.id) });
            }
        }
        Ok(FileEmbeddings { source: source.into(), vectors })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, path.display().to_string())
    }
}

impl EmbeddingProvider for FileEmbeddings {
    fn tag(&self) -> String {
        format!("file:{}", self.source)
    }

    fn embed(&self, inputs: &[EmbedInput<'_>]) -> Result<Vec<Vec<f64>>, ProviderError> {
        inputs
            .iter()
            .map(|i| {
                self.vectors
                    .get(i.id)
                    .cloned()
                    .ok_or_else(|| ProviderError::Fatal(format!("no precomputed vector for {}", i.id)))
            })
            .collect()
    }

    fn cache_key(&self, input: &EmbedInput<'_>) -> String {
        format!("id:{}", input.id)
    }
}

/// Embedding service: `{"texts": [...]}` is answered with `{"vectors": [[...], ...]}`.
#[derive(Debug, Clone)]
pub struct HttpEmbedder {
    pub endpoint: HttpEndpoint,
    pub model: Option<String>,
}

impl EmbeddingProvider for HttpEmbedder {
    fn tag(&self) -> String {
        match &self.model {
            Some(m) => format!("http:{}#{m}", self.endpoint.url),
            None => format!("http:{}", self.endpoint.url),
        }
    }

    fn embed(&self, inputs: &[EmbedInput<'_>]) -> Result<Vec<Vec<f64>>, ProviderError> {
        let texts: Vec<&str> = inputs.iter().map(|i| i.text).collect();
        let mut body = json!({ "texts": texts });
        if let Some(m) = &self.model {
            body["model"] = Value::String(m.clone());
        }
        let resp = post_json(&self.endpoint, &body)?;
        let vectors: Vec<Vec<f64>> = resp
            .get("vectors")
            .cloned()
            .ok_or_else(|| ProviderError::Protocol("response lacks `vectors`".into()))
            .and_then(|v| serde_json::from_value(v).map_err(|e| ProviderError::Protocol(e.to_string())))?;
        Ok(vectors)
    }
}
