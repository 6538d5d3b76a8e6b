//! Task datasets: samples, their gold annotations, and ingestion.
//!
//! Entity spans are token-level half-open ranges `[start, end)`. Parse heads
//! are 1-based token positions with `0` denoting the root, as in CoNLL-U.

mod conllu;
mod jsonl;

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use conllu::{parse_conllu, parse_conllu_with, write_conllu, PosField};
pub use jsonl::{parse_jsonl, parse_ner_jsonl, parse_ner_jsonl_with, write_jsonl};

/// Entity types listed in the NER task description, in prompt order.
pub const DEFAULT_ENTITY_TYPES: [&str; 9] = ["PER", "ORG", "GPE", "LOC", "FAC", "WOA", "EVE", "DUC", "ANG"];

/// Part-of-speech tags listed in the dependency parsing task description.
pub const DEFAULT_POS_TAGS: [&str; 50] = [
    "VBN", "WDT", "GW", "NN", "TO", "IN", "JJR", "WP", "EX", "VB", "HYPH", "JJ", "SYM", ":", "RBR", "MD", "VBP", "JJS",
    "LS", "WP$", "$", "VBD", "VBZ", "NFP", "PRP", "NNPS", "CC", "XX", ",", "``", "NNP", "-RRB-", "CD", "VBG", "-LRB-",
    "RP", "NNS", "PDT", "AFX", "RB", "PRP$", "UH", ".", "WRB", "DT", "FW", "RBS", "ADD", "POS", "''",
];

/// Universal POS tags, the default CoNLL-U tag column.
pub const UPOS_TAGS: [&str; 17] = [
    "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM", "PART", "PRON", "PROPN", "PUNCT", "SCONJ",
    "SYM", "VERB", "X",
];

/// Universal Dependencies v2 relation labels.
pub const UD_DEPRELS: [&str; 37] = [
    "acl",
    "advcl",
    "advmod",
    "amod",
    "appos",
    "aux",
    "case",
    "cc",
    "ccomp",
    "clf",
    "compound",
    "conj",
    "cop",
    "csubj",
    "dep",
    "det",
    "discourse",
    "dislocated",
    "expl",
    "fixed",
    "flat",
    "goeswith",
    "iobj",
    "list",
    "mark",
    "nmod",
    "nsubj",
    "nummod",
    "obj",
    "obl",
    "orphan",
    "parataxis",
    "punct",
    "reparandum",
    "root",
    "vocative",
    "xcomp",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Ner,
    Depparse,
    Pos,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Ner => "ner",
            TaskKind::Depparse => "depparse",
            TaskKind::Pos => "pos",
        }
    }

    /// Dependency parsing and POS tagging share annotations and prompt.
    pub fn uses_parse(self) -> bool {
        !matches!(self, TaskKind::Ner)
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(usize, usize, String)", into = "(usize, usize, String)")]
pub struct Entity {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

impl Entity {
    pub fn new(start: usize, end: usize, label: impl Into<String>) -> Self {
        Entity { start, end, label: label.into() }
    }
}

impl From<(usize, usize, String)> for Entity {
    fn from((start, end, label): (usize, usize, String)) -> Self {
        Entity { start, end, label }
    }
}

impl From<Entity> for (usize, usize, String) {
    fn from(e: Entity) -> Self {
        (e.start, e.end, e.label)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "(String, usize, String)", into = "(String, usize, String)")]
pub struct ParseRow {
    pub pos: String,
    pub head: usize,
    pub deprel: String,
}

impl ParseRow {
    pub fn new(pos: impl Into<String>, head: usize, deprel: impl Into<String>) -> Self {
        ParseRow { pos: pos.into(), head, deprel: deprel.into() }
    }
}

impl From<(String, usize, String)> for ParseRow {
    fn from((pos, head, deprel): (String, usize, String)) -> Self {
        ParseRow { pos, head, deprel }
    }
}

impl From<ParseRow> for (String, usize, String) {
    fn from(r: ParseRow) -> Self {
        (r.pos, r.head, r.deprel)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NerAnnotation {
    pub entities: Vec<Entity>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseAnnotation {
    pub rows: Vec<ParseRow>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskAnnotation {
    Ner(NerAnnotation),
    Parse(ParseAnnotation),
}

impl TaskAnnotation {
    pub fn as_ner(&self) -> Option<&NerAnnotation> {
        match self {
            TaskAnnotation::Ner(a) => Some(a),
            TaskAnnotation::Parse(_) => None,
        }
    }

    pub fn as_parse(&self) -> Option<&ParseAnnotation> {
        match self {
            TaskAnnotation::Parse(a) => Some(a),
            TaskAnnotation::Ner(_) => None,
        }
    }
}

/// Label vocabularies that annotations are validated against. An empty list
/// leaves that vocabulary unconstrained.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVocab {
    pub entity_types: Vec<String>,
    pub pos_tags: Vec<String>,
}

impl Default for LabelVocab {
    fn default() -> Self {
        LabelVocab {
            entity_types: DEFAULT_ENTITY_TYPES.iter().map(|s| s.to_string()).collect(),
            pos_tags: DEFAULT_POS_TAGS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl LabelVocab {
    pub fn unconstrained() -> Self {
        LabelVocab { entity_types: Vec::new(), pos_tags: Vec::new() }
    }

    fn allows_entity(&self, label: &str) -> bool {
        self.entity_types.is_empty() || self.entity_types.iter().any(|t| t == label)
    }

    fn allows_pos(&self, tag: &str) -> bool {
        self.pos_tags.is_empty() || self.pos_tags.iter().any(|t| t == tag)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub text: String,
    pub tokens: Vec<String>,
    pub annotation: Option<TaskAnnotation>,
}

impl Sample {
    /// Builds a sample whose text is the space-joined tokens.
    pub fn new(id: impl Into<String>, tokens: Vec<String>, annotation: Option<TaskAnnotation>) -> Self {
        let text = tokens.join(" ");
        Sample { id: id.into(), text, tokens, annotation }
    }

    /// The tokenized surface used in prompts.
    pub fn token_text(&self) -> String {
        self.tokens.join(" ")
    }

    pub fn ner(&self) -> Option<&NerAnnotation> {
        self.annotation.as_ref().and_then(TaskAnnotation::as_ner)
    }

    pub fn parse(&self) -> Option<&ParseAnnotation> {
        self.annotation.as_ref().and_then(TaskAnnotation::as_parse)
    }

    pub fn validate(&self, vocab: &LabelVocab) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::validation("<empty>", "sample id is empty"));
        }
        if self.tokens.is_empty() {
            return Err(Error::validation(&self.id, "sample has no tokens"));
        }
        for (i, tok) in self.tokens.iter().enumerate() {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(Error::validation(&self.id, format!("token {i} is empty or contains whitespace")));
            }
        }
        match &self.annotation {
            None => Ok(()),
            Some(TaskAnnotation::Ner(ann)) => validate_ner(&self.id, self.tokens.len(), ann, vocab),
            Some(TaskAnnotation::Parse(ann)) => validate_parse(&self.id, self.tokens.len(), ann, vocab),
        }
    }
}

pub(crate) fn validate_ner(id: &str, len: usize, ann: &NerAnnotation, vocab: &LabelVocab) -> Result<()> {
    let mut spans: Vec<&Entity> = ann.entities.iter().collect();
    for e in &spans {
        if e.start >= e.end || e.end > len {
            return Err(Error::validation(
                id,
                format!("entity [{}, {}) out of range for {len} tokens", e.start, e.end),
            ));
        }
        if !vocab.allows_entity(&e.label) {
            return Err(Error::validation(id, format!("unknown entity type {:?}", e.label)));
        }
    }
    spans.sort();
    for pair in spans.windows(2) {
        if pair[1].start < pair[0].end {
            return Err(Error::validation(
                id,
                format!(
                    "entities [{}, {}) and [{}, {}) overlap",
                    pair[0].start, pair[0].end, pair[1].start, pair[1].end
                ),
            ));
        }
    }
    Ok(())
}

pub(crate) fn validate_parse(id: &str, len: usize, ann: &ParseAnnotation, vocab: &LabelVocab) -> Result<()> {
    if ann.rows.len() != len {
        return Err(Error::validation(id, format!("{} parse rows for {len} tokens", ann.rows.len())));
    }
    for (i, row) in ann.rows.iter().enumerate() {
        if row.head > len {
            return Err(Error::validation(id, format!("token {} head {} out of range", i + 1, row.head)));
        }
        if row.head == i + 1 {
            return Err(Error::validation(id, format!("token {} is its own head", i + 1)));
        }
        if !vocab.allows_pos(&row.pos) {
            return Err(Error::validation(id, format!("unknown POS tag {:?}", row.pos)));
        }
        if row.deprel.is_empty() || row.deprel.chars().any(|c| c.is_whitespace() || c == ',') {
            return Err(Error::validation(id, format!("invalid deprel {:?}", row.deprel)));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub task: TaskKind,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    /// Entity types for NER, POS tags for the parse tasks.
    pub label_set: Vec<String>,
}

impl Dataset {
    /// Validates every sample and checks that ids are unique within each
    /// split and disjoint across splits.
    pub fn new(
        name: impl Into<String>,
        task: TaskKind,
        train: Vec<Sample>,
        test: Vec<Sample>,
        label_set: Vec<String>,
    ) -> Result<Self> {
        let ds = Dataset { name: name.into(), task, train, test, label_set };
        ds.validate()?;
        Ok(ds)
    }

    pub fn vocab(&self) -> LabelVocab {
        match self.task {
            TaskKind::Ner => LabelVocab { entity_types: self.label_set.clone(), pos_tags: Vec::new() },
            _ => LabelVocab { entity_types: Vec::new(), pos_tags: self.label_set.clone() },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let vocab = self.vocab();
        let mut train_ids = HashSet::new();
        for s in &self.train {
            s.validate(&vocab)?;
            self.check_annotation_kind(s)?;
            if !train_ids.insert(s.id.as_str()) {
                return Err(Error::validation(&s.id, "duplicate id in train split"));
            }
        }
        let mut test_ids = HashSet::new();
        for s in &self.test {
            s.validate(&vocab)?;
            self.check_annotation_kind(s)?;
            if !test_ids.insert(s.id.as_str()) {
                return Err(Error::validation(&s.id, "duplicate id in test split"));
            }
            if train_ids.contains(s.id.as_str()) {
                return Err(Error::validation(&s.id, "id appears in both train and test"));
            }
        }
        Ok(())
    }

    fn check_annotation_kind(&self, s: &Sample) -> Result<()> {
        match (&s.annotation, self.task) {
            (None, _) | (Some(TaskAnnotation::Ner(_)), TaskKind::Ner) => Ok(()),
            (Some(TaskAnnotation::Parse(_)), TaskKind::Depparse | TaskKind::Pos) => Ok(()),
            _ => Err(Error::validation(&s.id, format!("annotation does not match task {}", self.task))),
        }
    }

    /// Lookup over both splits.
    pub fn index(&self) -> SampleIndex<'_> {
        SampleIndex::new(self.train.iter().chain(self.test.iter()))
    }
}

/// Borrowed id → sample lookup.
#[derive(Debug, Clone, Default)]
pub struct SampleIndex<'a> {
    map: BTreeMap<&'a str, &'a Sample>,
}

impl<'a> SampleIndex<'a> {
    pub fn new(samples: impl IntoIterator<Item = &'a Sample>) -> Self {
        SampleIndex { map: samples.into_iter().map(|s| (s.id.as_str(), s)).collect() }
    }

    pub fn get(&self, id: &str) -> Option<&'a Sample> {
        self.map.get(id).copied()
    }

    pub fn insert(&mut self, sample: &'a Sample) {
        self.map.insert(sample.id.as_str(), sample);
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Replaces the test split with `min(n, |test|)` samples drawn uniformly
/// without replacement.
///
/// The draw is a partial Fisher-Yates shuffle over the test split in its
/// original order: for `i in 0..m`, swap position `i` with a position drawn
/// uniformly from `i..len` using a `ChaCha8Rng` seeded via `seed_from_u64`.
/// The first `m` positions, in that order, form the new test split.
pub fn subsample_test(dataset: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Argument("subsample size must be at least 1".into()));
    }
    let mut test = dataset.test.clone();
    let m = n.min(test.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..m {
        let j = rng.random_range(i..test.len());
        test.swap(i, j);
    }
    test.truncate(m);
    Ok(Dataset { test, ..dataset.clone() })
}

/// Per-label tallies over annotated samples, used by fixtures and analysis.
pub fn entity_counts<'a>(samples: impl IntoIterator<Item = &'a Sample>) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for s in samples {
        if let Some(ann) = s.ner() {
            for e in &ann.entities {
                *counts.entry(e.label.clone()).or_insert(0) += 1;
            }
        }
    }
    counts
}
