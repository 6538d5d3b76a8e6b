//! Prompt rendering and the inverse completion parsers.
//!
//! NER outputs tag entities inline as `<TYPE> tokens </TYPE>`. Parse outputs
//! are one `(token, POS, head, deprel)` tuple per line. Parsers are total:
//! any string yields either an `ok` annotation or a `format_error`.
//!
//! Parsing is lenient on whitespace (including tags glued to tokens) and on
//! the parentheses around parse tuples. It is strict on token identity,
//! token count, head range and label vocabularies. [`CODEC_VERSION`] changes
//! whenever that boundary moves.

mod ner;
mod parse;
mod prompt;

use serde::{Deserialize, Serialize};

use crate::corpus::{LabelVocab, Sample, TaskAnnotation, TaskKind};
use crate::error::{Error, Result};

pub use ner::{parse_ner, render_ner, render_ner_tokens};
pub use parse::{parse_parse, render_parse, render_parse_rows};
pub use prompt::{
    build_prompt, task_description, ChatMessage, PromptInstance, PromptMode, DEPPARSE_TEMPLATE, NER_TEMPLATE,
    TEMPLATE_VERSION,
};

pub const CODEC_VERSION: &str = "1";

/// Label vocabularies the parsers accept. Empty lists accept any label.
pub type CodecConfig = LabelVocab;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompletionStatus {
    Ok,
    FormatError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedCompletion {
    pub status: CompletionStatus,
    pub annotation: Option<TaskAnnotation>,
    pub raw: String,
    pub error_detail: Option<String>,
}

impl ParsedCompletion {
    pub fn ok(raw: &str, annotation: TaskAnnotation) -> Self {
        ParsedCompletion {
            status: CompletionStatus::Ok,
            annotation: Some(annotation),
            raw: raw.to_string(),
            error_detail: None,
        }
    }

    pub fn format_error(raw: &str, detail: impl Into<String>) -> Self {
        ParsedCompletion {
            status: CompletionStatus::FormatError,
            annotation: None,
            raw: raw.to_string(),
            error_detail: Some(detail.into()),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == CompletionStatus::Ok
    }
}

/// Renders an annotation in the task's output format.
pub fn render_annotation(task: TaskKind, tokens: &[String], ann: &TaskAnnotation) -> Result<String> {
    match (task, ann) {
        (TaskKind::Ner, TaskAnnotation::Ner(a)) => render_ner_tokens(tokens, a),
        (TaskKind::Depparse | TaskKind::Pos, TaskAnnotation::Parse(a)) => render_parse_rows(tokens, a),
        _ => Err(Error::Argument(format!("annotation kind does not match task {task}"))),
    }
}

/// Dispatches to the task's parser.
pub fn parse_completion(task: TaskKind, output: &str, original: &Sample, config: &CodecConfig) -> ParsedCompletion {
    match task {
        TaskKind::Ner => parse_ner(output, original, config),
        TaskKind::Depparse | TaskKind::Pos => parse_parse(output, original, config),
    }
}
