use serde::{Deserialize, Serialize};

use super::render_annotation;
use crate::corpus::{SampleIndex, TaskKind};
use crate::error::{Error, Result};
use crate::retrieval::DemonstrationSet;

pub const NER_TEMPLATE: &str = include_str!("../../templates/ner.txt");
/// Shared by dependency parsing and POS tagging.
pub const DEPPARSE_TEMPLATE: &str = include_str!("../../templates/depparse.txt");
pub const TEMPLATE_VERSION: &str = "1";

pub fn task_description(task: TaskKind) -> &'static str {
    match task {
        TaskKind::Ner => NER_TEMPLATE,
        TaskKind::Depparse | TaskKind::Pos => DEPPARSE_TEMPLATE,
    }
}

fn default_separator(task: TaskKind) -> &'static str {
    match task {
        TaskKind::Ner => "[TAGS]",
        TaskKind::Depparse | TaskKind::Pos => "[PARSE]",
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    /// Alternating user/assistant messages, one pair per demonstration.
    #[default]
    MessagePairs,
    /// A single text with a separator token between input and output.
    Separator,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: &str, content: impl Into<String>) -> Self {
        ChatMessage { role: role.to_string(), content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::new("user", content)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptInstance {
    pub task_description: String,
    /// `(input text, annotated text)` in prompt order.
    pub demos: Vec<(String, String)>,
    pub inference_text: String,
    pub mode: PromptMode,
    pub separator_token: Option<String>,
}

impl PromptInstance {
    /// Task description as a system message, then a user/assistant pair per
    /// demonstration, then the inference sample as a user message.
    pub fn to_messages(&self) -> Vec<ChatMessage> {
        let mut out = Vec::with_capacity(2 + 2 * self.demos.len());
        out.push(ChatMessage::new("system", self.task_description.clone()));
        for (input, output) in &self.demos {
            out.push(ChatMessage::new("user", input.clone()));
            out.push(ChatMessage::new("assistant", output.clone()));
        }
        out.push(ChatMessage::new("user", self.inference_text.clone()));
        out
    }

    /// Single-text layout:
    ///
    /// ```text
    /// <description>
    ///
    /// <input>
    /// <separator>
    /// <output>
    ///
    /// <inference input>
    /// <separator>
    /// ```
    pub fn to_text(&self) -> String {
        let sep = self.separator_token.as_deref().unwrap_or("");
        let mut out = String::new();
        out.push_str(&self.task_description);
        out.push_str("\n\n");
        for (input, output) in &self.demos {
            out.push_str(input);
            out.push('\n');
            out.push_str(sep);
            out.push('\n');
            out.push_str(output);
            out.push_str("\n\n");
        }
        out.push_str(&self.inference_text);
        out.push('\n');
        out.push_str(sep);
        out
    }
}

/// Assembles the prompt for `demos.inference_id`. Every demonstration must
/// resolve in `index` and carry an annotation.
pub fn build_prompt(
    task: TaskKind,
    demos: &DemonstrationSet,
    index: &SampleIndex<'_>,
    mode: PromptMode,
) -> Result<PromptInstance> {
    let inference = index
        .get(&demos.inference_id)
        .ok_or_else(|| Error::Argument(format!("unknown inference sample {}", demos.inference_id)))?;
    let mut rendered = Vec::with_capacity(demos.demos.len());
    for d in &demos.demos {
        let sample = index.get(&d.id).ok_or_else(|| Error::Argument(format!("unknown demonstration {}", d.id)))?;
        let ann = sample
            .annotation
            .as_ref()
            .ok_or_else(|| Error::Argument(format!("demonstration {} is not annotated", d.id)))?;
        rendered.push((sample.token_text(), render_annotation(task, &sample.tokens, ann)?));
    }
    Ok(PromptInstance {
        task_description: task_description(task).to_string(),
        demos: rendered,
        inference_text: inference.token_text(),
        mode,
        separator_token: match mode {
            PromptMode::Separator => Some(default_separator(task).to_string()),
            PromptMode::MessagePairs => None,
        },
    })
}
