//! Completion and confidence providers, with retries, rate limiting and
//! transcript capture.
//!
//! Live providers speak a small HTTP chat contract (see [`HttpChatProvider`]).
//! Offline runs use the mocks in [`mock`]: gold echo, a seeded corruptor, and
//! transcript replay.

mod http;
pub mod mock;
mod ratelimit;
mod transcript;

use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{Sample, SampleIndex, TaskKind};
use crate::embedding::EmbeddingStore;
use crate::poolselect::ConfidenceScorer;
use crate::promptcodec::{build_prompt, PromptInstance, PromptMode};
use crate::retrieval::{demonstrations_from_ids, DemonstrationSet};

pub use http::{post_json, HttpChatProvider, HttpEndpoint};
pub use ratelimit::RateLimiter;
pub use transcript::{Transcript, TranscriptRecord};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ProviderError {
    /// Worth retrying: timeouts, connection failures, 429 and 5xx.
    #[error("transient provider failure (status {status:?}, attempt {attempts}): {message}")]
    Transient { status: Option<u16>, message: String, attempts: u32 },

    #[error("provider failed after {attempts} attempts; last error: {last}")]
    Exhausted { attempts: u32, last: String },

    #[error("malformed provider response: {0}")]
    Protocol(String),

    #[error("provider lacks capability: {0}")]
    Capability(String),

    #[error("provider error: {0}")]
    Fatal(String),
}

impl ProviderError {
    pub fn is_transient(&self) -> bool {
        matches!(self, ProviderError::Transient { .. })
    }

    pub fn transient(status: Option<u16>, message: impl Into<String>) -> Self {
        ProviderError::Transient { status, message: message.into(), attempts: 1 }
    }
}

/// Exponential backoff: the delay before retry `i` (1-based) is
/// `base_delay_ms * 2^(i-1)`, capped at `max_delay_ms`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 5, base_delay_ms: 500, max_delay_ms: 30_000 }
    }
}

impl RetryPolicy {
    pub fn delay_before(&self, retry: u32) -> Duration {
        let exp = retry.saturating_sub(1).min(32);
        let ms = self.base_delay_ms.saturating_mul(1u64 << exp).min(self.max_delay_ms);
        Duration::from_millis(ms)
    }

    /// Runs `op` until it succeeds, fails non-transiently, or attempts run
    /// out. Returns the value and the number of attempts used.
    pub fn run<T>(&self, mut op: impl FnMut() -> Result<T, ProviderError>) -> Result<(T, u32), ProviderError> {
        let max = self.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            match op() {
                Ok(v) => return Ok((v, attempt)),
                Err(e) if e.is_transient() => {
                    if attempt >= max {
                        return Err(ProviderError::Exhausted { attempts: attempt, last: e.to_string() });
                    }
                    std::thread::sleep(self.delay_before(attempt));
                }
                Err(e) => return Err(e),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    /// Inference sample the prompt was built for.
    pub sample_id: String,
    pub prompt: PromptInstance,
    pub model_tag: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub demo_ids: Vec<String>,
}

impl CompletionRequest {
    pub fn new(sample_id: impl Into<String>, prompt: PromptInstance, model_tag: impl Into<String>) -> Self {
        CompletionRequest {
            sample_id: sample_id.into(),
            prompt,
            model_tag: model_tag.into(),
            temperature: 0.0,
            max_output_tokens: 1024,
            demo_ids: Vec::new(),
        }
    }

    /// SHA-256 over the canonical JSON encoding of the request.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("request serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

pub trait CompletionProvider: Send + Sync {
    /// Provider and model identity, recorded in run manifests.
    fn tag(&self) -> String;

    fn complete(&self, req: &CompletionRequest) -> Result<String, ProviderError>;
}

/// Scores how confident a model is on a prompt; higher is more confident.
pub trait ConfidenceProvider: Send + Sync {
    fn tag(&self) -> String;

    fn confidence(&self, req: &CompletionRequest) -> Result<f64, ProviderError>;
}

/// Completion dispatch with retry, rate limiting and transcript capture.
pub struct LlmClient {
    provider: Arc<dyn CompletionProvider>,
    retry: RetryPolicy,
    limiter: RateLimiter,
}

impl LlmClient {
    pub fn new(provider: Arc<dyn CompletionProvider>, retry: RetryPolicy, limiter: RateLimiter) -> Self {
        LlmClient { provider, retry, limiter }
    }

    pub fn provider_tag(&self) -> String {
        self.provider.tag()
    }

    pub fn complete(&self, req: &CompletionRequest, transcript: &Transcript) -> Result<String, ProviderError> {
        complete_with(req, self.provider.as_ref(), &self.retry, &self.limiter, transcript)
    }
}

/// Sends one request, retrying transient failures, and appends the final
/// response to `transcript`.
pub fn complete_with(
    req: &CompletionRequest,
    provider: &dyn CompletionProvider,
    retry: &RetryPolicy,
    limiter: &RateLimiter,
    transcript: &Transcript,
) -> Result<String, ProviderError> {
    if req.temperature < 0.0 {
        return Err(ProviderError::Fatal("temperature must be non-negative".into()));
    }
    let started = Instant::now();
    let (text, attempts) = retry.run(|| {
        limiter.acquire();
        provider.complete(req)
    })?;
    transcript.append(TranscriptRecord {
        sample_id: req.sample_id.clone(),
        request_digest: req.digest(),
        response: text.clone(),
        latency_ms: started.elapsed().as_millis() as u64,
        attempts,
        demo_ids: req.demo_ids.clone(),
    });
    Ok(text)
}

/// The request a confidence provider scores: the prompt for `sample` with
/// `demos`, tagged with the model under study.
pub fn confidence_request(
    task: TaskKind,
    sample: &Sample,
    demos: &DemonstrationSet,
    index: &SampleIndex<'_>,
    mode: PromptMode,
    model_tag: &str,
) -> crate::Result<CompletionRequest> {
    let mut index = index.clone();
    index.insert(sample);
    let prompt = build_prompt(task, demos, &index, mode)?;
    let mut req = CompletionRequest::new(&sample.id, prompt, model_tag);
    req.demo_ids = demos.ids().map(String::from).collect();
    Ok(req)
}

/// Asks `provider` for a score, retrying transient failures.
pub fn confidence(
    req: &CompletionRequest,
    provider: &dyn ConfidenceProvider,
    retry: &RetryPolicy,
) -> crate::Result<f64> {
    let (score, _) = retry.run(|| provider.confidence(req)).map_err(|e| crate::Error::provider("confidence", e))?;
    if !score.is_finite() {
        return Err(crate::Error::provider(
            "confidence",
            ProviderError::Protocol(format!("non-finite confidence {score}")),
        ));
    }
    Ok(score)
}

/// Adapts a [`ConfidenceProvider`] to the vote-k stage-2 hook: demonstrations
/// for each candidate are retrieved from the stage-1 pool.
pub struct PromptConfidence<'a> {
    pub task: TaskKind,
    pub index: SampleIndex<'a>,
    pub store: &'a EmbeddingStore,
    pub mode: PromptMode,
    pub n_demos: usize,
    pub model_tag: String,
    pub provider: &'a dyn ConfidenceProvider,
    pub retry: RetryPolicy,
}

impl ConfidenceScorer for PromptConfidence<'_> {
    fn confidence(&self, sample_id: &str, pool_ids: &[String]) -> crate::Result<f64> {
        let sample = self
            .index
            .get(sample_id)
            .ok_or_else(|| crate::Error::Config(format!("no sample {sample_id} for confidence")))?;
        let demos = demonstrations_from_ids(pool_ids, self.store, sample_id, self.n_demos)?;
        let req = confidence_request(self.task, sample, &demos, &self.index, self.mode, &self.model_tag)?;
        confidence(&req, self.provider, &self.retry)
    }
}
