use serde::{Deserialize, Serialize};

use super::{Entity, LabelVocab, NerAnnotation, ParseAnnotation, ParseRow, Sample, TaskAnnotation};
use crate::error::{Error, Result};

/// One line of the canonical JSONL schema, shared by gold and predicted files.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SampleRecord {
    id: String,
    tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    entities: Option<Vec<Entity>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rows: Option<Vec<ParseRow>>,
}

impl SampleRecord {
    fn into_sample(self, line: usize) -> Result<Sample> {
        let annotation = match (self.entities, self.rows) {
            (Some(_), Some(_)) => {
                return Err(Error::Parse { line, message: format!("sample {} has both entities and rows", self.id) })
            }
            (Some(entities), None) => Some(TaskAnnotation::Ner(NerAnnotation { entities })),
            (None, Some(rows)) => Some(TaskAnnotation::Parse(ParseAnnotation { rows })),
            (None, None) => None,
        };
        let text = self.text.unwrap_or_else(|| self.tokens.join(" "));
        Ok(Sample { id: self.id, text, tokens: self.tokens, annotation })
    }

    fn from_sample(s: &Sample) -> Self {
        let (entities, rows) = match &s.annotation {
            Some(TaskAnnotation::Ner(a)) => (Some(a.entities.clone()), None),
            Some(TaskAnnotation::Parse(a)) => (None, Some(a.rows.clone())),
            None => (None, None),
        };
        let text = (s.text != s.tokens.join(" ")).then(|| s.text.clone());
        SampleRecord { id: s.id.clone(), tokens: s.tokens.clone(), text, entities, rows }
    }
}

/// Parses canonical JSONL and validates every sample against `vocab`.
pub fn parse_jsonl(text: &str, vocab: &LabelVocab) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: SampleRecord =
            serde_json::from_str(line).map_err(|e| Error::Parse { line: idx + 1, message: e.to_string() })?;
        let sample = record.into_sample(idx + 1)?;
        sample.validate(vocab)?;
        out.push(sample);
    }
    Ok(out)
}

/// Parses NER JSONL with the default entity type set.
pub fn parse_ner_jsonl(text: &str) -> Result<Vec<Sample>> {
    parse_ner_jsonl_with(text, &LabelVocab::default())
}

pub fn parse_ner_jsonl_with(text: &str, vocab: &LabelVocab) -> Result<Vec<Sample>> {
    let samples = parse_jsonl(text, vocab)?;
    for s in &samples {
        if !matches!(s.annotation, Some(TaskAnnotation::Ner(_))) {
            return Err(Error::validation(&s.id, "missing entities field"));
        }
    }
    Ok(samples)
}

pub fn write_jsonl(samples: &[Sample]) -> Result<String> {
    let mut out = String::new();
    for s in samples {
        out.push_str(&serde_json::to_string(&SampleRecord::from_sample(s))?);
        out.push('\n');
    }
    Ok(out)
}
