//! Deterministic offline providers.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CompletionProvider, CompletionRequest, ConfidenceProvider, ProviderError, TranscriptRecord};
use crate::corpus::{Entity, LabelVocab, Sample, TaskAnnotation, TaskKind, UD_DEPRELS};
use crate::error::Result;
use crate::promptcodec::render_annotation;

fn render_gold(task: TaskKind, sample: &Sample) -> Option<String> {
    let ann = sample.annotation.as_ref()?;
    render_annotation(task, &sample.tokens, ann).ok()
}

/// Answers every request with the rendered gold annotation of its sample.
#[derive(Debug, Clone)]
pub struct GoldEcho {
    outputs: HashMap<String, String>,
}

impl GoldEcho {
    pub fn new<'a>(task: TaskKind, samples: impl IntoIterator<Item = &'a Sample>) -> Self {
        let outputs = samples.into_iter().filter_map(|s| render_gold(task, s).map(|o| (s.id.clone(), o))).collect();
        GoldEcho { outputs }
    }
}

impl CompletionProvider for GoldEcho {
    fn tag(&self) -> String {
        "mock:gold-echo".into()
    }

    fn complete(&self, req: &CompletionRequest) -> Result<String, ProviderError> {
        self.outputs
            .get(&req.sample_id)
            .cloned()
            .ok_or_else(|| ProviderError::Fatal(format!("no gold annotation for {}", req.sample_id)))
    }
}

/// Per-sample corruption probabilities.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorruptionRates {
    /// NER: chance each entity has one boundary moved by a token.
    pub span_shift: f64,
    /// Chance each entity type (NER) or each deprel and each POS tag (parse)
    /// is replaced by a different label.
    pub label_swap: f64,
    /// Chance each token's head is replaced by a different valid head.
    pub head_perturb: f64,
    /// Chance the whole output is truncated so it no longer parses.
    pub format_break: f64,
}

/// Gold echo with seeded, per-sample corruptions. Each sample's draws depend
/// only on `(seed, sample id)`, so results do not depend on request order.
#[derive(Debug, Clone)]
pub struct Corruptor {
    task: TaskKind,
    gold: HashMap<String, Sample>,
    rates: CorruptionRates,
    seed: u64,
    entity_types: Vec<String>,
    pos_tags: Vec<String>,
    deprels: Vec<String>,
}

impl Corruptor {
    pub fn new<'a>(
        task: TaskKind,
        samples: impl IntoIterator<Item = &'a Sample>,
        rates: CorruptionRates,
        seed: u64,
        vocab: &LabelVocab,
    ) -> Self {
        let defaults = LabelVocab::default();
        let pick = |given: &Vec<String>, fallback: &Vec<String>| {
            if given.is_empty() {
                fallback.clone()
            } else {
                given.clone()
            }
        };
        Corruptor {
            task,
            gold: samples.into_iter().map(|s| (s.id.clone(), s.clone())).collect(),
            rates,
            seed,
            entity_types: pick(&vocab.entity_types, &defaults.entity_types),
            pos_tags: pick(&vocab.pos_tags, &defaults.pos_tags),
            deprels: UD_DEPRELS.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn rng_for(&self, sample_id: &str) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(sample_id.as_bytes());
        let digest: [u8; 32] = h.finalize().into();
        ChaCha8Rng::from_seed(digest)
    }

    /// The corrupted annotation and whether the rendered output should be broken.
    pub fn corrupt(&self, sample: &Sample) -> (TaskAnnotation, bool) {
        let mut rng = self.rng_for(&sample.id);
        let n = sample.tokens.len();
        let ann = match sample.annotation.clone() {
            Some(TaskAnnotation::Ner(mut a)) => {
                for i in 0..a.entities.len() {
                    if rng.random_bool(self.rates.label_swap.clamp(0.0, 1.0)) {
                        a.entities[i].label = swap_label(&mut rng, &a.entities[i].label, &self.entity_types);
                    }
                    if rng.random_bool(self.rates.span_shift.clamp(0.0, 1.0)) {
                        shift_span(&mut rng, &mut a.entities, i, n);
                    }
                }
                TaskAnnotation::Ner(a)
            }
            Some(TaskAnnotation::Parse(mut a)) => {
                for (i, row) in a.rows.iter_mut().enumerate() {
                    if rng.random_bool(self.rates.label_swap.clamp(0.0, 1.0)) {
                        row.deprel = swap_label(&mut rng, &row.deprel, &self.deprels);
                    }
                    if rng.random_bool(self.rates.label_swap.clamp(0.0, 1.0)) {
                        row.pos = swap_label(&mut rng, &row.pos, &self.pos_tags);
                    }
                    if rng.random_bool(self.rates.head_perturb.clamp(0.0, 1.0)) {
                        let choices: Vec<usize> = (0..=n).filter(|&h| h != i + 1 && h != row.head).collect();
                        if !choices.is_empty() {
                            row.head = choices[rng.random_range(0..choices.len())];
                        }
                    }
                }
                TaskAnnotation::Parse(a)
            }
            None => match self.task {
                TaskKind::Ner => TaskAnnotation::Ner(Default::default()),
                _ => TaskAnnotation::Parse(Default::default()),
            },
        };
        let broken = rng.random_bool(self.rates.format_break.clamp(0.0, 1.0));
        (ann, broken)
    }
}

fn swap_label(rng: &mut ChaCha8Rng, current: &str, labels: &[String]) -> String {
    let others: Vec<&String> = labels.iter().filter(|l| l.as_str() != current).collect();
    if others.is_empty() {
        return current.to_string();
    }
    others[rng.random_range(0..others.len())].clone()
}

fn shift_span(rng: &mut ChaCha8Rng, entities: &mut [Entity], i: usize, n: usize) {
    let e = &entities[i];
    let free = |pos: usize| entities.iter().enumerate().all(|(j, o)| j == i || pos < o.start || pos >= o.end);
    let mut options = Vec::new();
    if e.end < n && free(e.end) {
        options.push((e.start, e.end + 1));
    }
    if e.start > 0 && free(e.start - 1) {
        options.push((e.start - 1, e.end));
    }
    if e.end - e.start > 1 {
        options.push((e.start + 1, e.end));
        options.push((e.start, e.end - 1));
    }
    if options.is_empty() {
        return;
    }
    let (s, t) = options[rng.random_range(0..options.len())];
    entities[i].start = s;
    entities[i].end = t;
}

impl CompletionProvider for Corruptor {
    fn tag(&self) -> String {
        format!(
            "mock:corruptor(seed={},shift={},swap={},head={},break={})",
            self.seed, self.rates.span_shift, self.rates.label_swap, self.rates.head_perturb, self.rates.format_break
        )
    }

    fn complete(&self, req: &CompletionRequest) -> Result<String, ProviderError> {
        let sample = self
            .gold
            .get(&req.sample_id)
            .ok_or_else(|| ProviderError::Fatal(format!("no gold annotation for {}", req.sample_id)))?;
        let (ann, broken) = self.corrupt(sample);
        let text =
            render_annotation(self.task, &sample.tokens, &ann).map_err(|e| ProviderError::Fatal(e.to_string()))?;
        if broken {
            return Ok(break_format(self.task, &text));
        }
        Ok(text)
    }
}

/// Drops the last token (NER) or last row (parse) so the output cannot match
/// the input sample.
fn break_format(task: TaskKind, text: &str) -> String {
    match task {
        TaskKind::Ner => {
            let mut parts: Vec<&str> = text.split(' ').collect();
            parts.pop();
            parts.join(" ")
        }
        _ => {
            let mut lines: Vec<&str> = text.lines().collect();
            lines.pop();
            lines.join("\n")
        }
    }
}

/// Serves recorded responses keyed by request digest.
#[derive(Debug, Clone, Default)]
pub struct Replay {
    responses: HashMap<String, String>,
}

impl Replay {
    pub fn from_records(records: impl IntoIterator<Item = TranscriptRecord>) -> Self {
        Replay { responses: records.into_iter().map(|r| (r.request_digest, r.response)).collect() }
    }

    /// Loads every `*.jsonl` transcript under `path` (or the single file).
    pub fn load(path: &Path) -> Result<Self> {
        let mut records = Vec::new();
        if path.is_dir() {
            let mut files: Vec<_> = std::fs::read_dir(path)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
                .collect();
            files.sort();
            for f in files {
                records.extend(super::Transcript::load(&f)?);
            }
        } else {
            records = super::Transcript::load(path)?;
        }
        Ok(Self::from_records(records))
    }
}

impl CompletionProvider for Replay {
    fn tag(&self) -> String {
        "mock:replay".into()
    }

    fn complete(&self, req: &CompletionRequest) -> Result<String, ProviderError> {
        let digest = req.digest();
        self.responses
            .get(&digest)
            .cloned()
            .ok_or_else(|| ProviderError::Fatal(format!("no recorded response for {}", &digest[..12])))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantConfidence(pub f64);

impl ConfidenceProvider for ConstantConfidence {
    fn tag(&self) -> String {
        format!("mock:constant({})", self.0)
    }

    fn confidence(&self, _req: &CompletionRequest) -> Result<f64, ProviderError> {
        Ok(self.0)
    }
}

/// Confidence in `(-1, 0]` derived from a hash of `(seed, sample id)`.
#[derive(Debug, Clone, Copy)]
pub struct HashConfidence {
    pub seed: u64,
}

impl ConfidenceProvider for HashConfidence {
    fn tag(&self) -> String {
        format!("mock:hash({})", self.seed)
    }

    fn confidence(&self, req: &CompletionRequest) -> Result<f64, ProviderError> {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(req.sample_id.as_bytes());
        let d = h.finalize();
        let v = u64::from_le_bytes(d[..8].try_into().expect("8 bytes"));
        Ok(-((v >> 11) as f64) / (1u64 << 53) as f64)
    }
}

/// Replays confidence scores keyed by request digest.
#[derive(Debug, Clone, Default)]
pub struct ReplayConfidence {
    scores: BTreeMap<String, f64>,
}

impl ReplayConfidence {
    pub fn new(scores: BTreeMap<String, f64>) -> Self {
        ReplayConfidence { scores }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(ReplayConfidence { scores: serde_json::from_str(&std::fs::read_to_string(path)?)? })
    }
}

impl ConfidenceProvider for ReplayConfidence {
    fn tag(&self) -> String {
        "mock:replay-confidence".into()
    }

    fn confidence(&self, req: &CompletionRequest) -> Result<f64, ProviderError> {
        let digest = req.digest();
        self.scores
            .get(&digest)
            .copied()
            .ok_or_else(|| ProviderError::Fatal(format!("no recorded confidence for {}", &digest[..12])))
    }
}

/// Wraps a provider and records every score by request digest.
pub struct RecordingConfidence<'a> {
    inner: &'a dyn ConfidenceProvider,
    recorded: Mutex<BTreeMap<String, f64>>,
}

impl<'a> RecordingConfidence<'a> {
    pub fn new(inner: &'a dyn ConfidenceProvider) -> Self {
        RecordingConfidence { inner, recorded: Mutex::new(BTreeMap::new()) }
    }

    pub fn recorded(&self) -> BTreeMap<String, f64> {
        self.recorded.lock().expect("recorder poisoned").clone()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.recorded())?)?;
        Ok(())
    }
}

impl ConfidenceProvider for RecordingConfidence<'_> {
    fn tag(&self) -> String {
        self.inner.tag()
    }

    fn confidence(&self, req: &CompletionRequest) -> Result<f64, ProviderError> {
        let v = self.inner.confidence(req)?;
        self.recorded.lock().expect("recorder poisoned").insert(req.digest(), v);
        Ok(v)
    }
}
