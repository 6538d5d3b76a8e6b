//! Budgeted pool selection for in-context learning on sequence labeling.
//!
//! A run picks `k` train samples to annotate with one of several selection
//! strategies, retrieves per-test-sample demonstrations from that pool by
//! embedding similarity, prompts a completion provider and scores the parsed
//! output against gold labels.

pub mod analysis;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod evalmetrics;
pub mod experiment;
pub mod llmclient;
pub mod poolselect;
pub mod promptcodec;
pub mod retrieval;

pub use analysis::{AggregateRow, CellResult, Correlation};
pub use corpus::{
    Dataset, Entity, LabelVocab, NerAnnotation, ParseAnnotation, ParseRow, Sample, TaskAnnotation, TaskKind,
};
pub use embedding::{EmbeddingStore, EmbeddingVector, Neighbor};
pub use error::{Error, Result};
pub use evalmetrics::MetricResult;
pub use experiment::{EvalReport, ExperimentConfig, Providers, RunManifest};
pub use llmclient::{CompletionProvider, CompletionRequest, ConfidenceProvider, ProviderError};
pub use poolselect::{Pool, Strategy};
pub use promptcodec::{CompletionStatus, ParsedCompletion, PromptInstance, PromptMode};
pub use retrieval::DemonstrationSet;
