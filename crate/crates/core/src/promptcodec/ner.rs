use std::sync::LazyLock;

use regex::Regex;

use super::{CodecConfig, ParsedCompletion};
use crate::corpus::{validate_ner, Entity, NerAnnotation, Sample, TaskAnnotation};
use crate::error::{Error, Result};

static TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"</?([A-Za-z_][A-Za-z0-9_-]*)>").unwrap());
static WHOLE_TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^<(/?)([A-Za-z_][A-Za-z0-9_-]*)>$").unwrap());

pub fn render_ner(sample: &Sample) -> Result<String> {
    let ann = sample.ner().ok_or_else(|| Error::Argument(format!("sample {} has no NER annotation", sample.id)))?;
    render_ner_tokens(&sample.tokens, ann)
}

/// Tokens joined by single spaces, each entity wrapped as `<TYPE> ... </TYPE>`.
pub fn render_ner_tokens(tokens: &[String], ann: &NerAnnotation) -> Result<String> {
    validate_ner("<render>", tokens.len(), ann, &CodecConfig::unconstrained())?;
    let mut spans: Vec<&Entity> = ann.entities.iter().collect();
    spans.sort();
    let mut parts: Vec<String> = Vec::with_capacity(tokens.len() + 2 * spans.len());
    let mut next = spans.iter().peekable();
    let mut i = 0;
    while i < tokens.len() {
        match next.peek() {
            Some(e) if e.start == i => {
                let e = next.next().expect("peeked");
                parts.push(format!("<{}>", e.label));
                parts.extend(tokens[e.start..e.end].iter().cloned());
                parts.push(format!("</{}>", e.label));
                i = e.end;
            }
            _ => {
                parts.push(tokens[i].clone());
                i += 1;
            }
        }
    }
    Ok(parts.join(" "))
}

enum Item<'a> {
    Open(&'a str),
    Close(&'a str),
    Text(&'a str),
}

fn known(config: &CodecConfig, label: &str) -> bool {
    config.entity_types.is_empty() || config.entity_types.iter().any(|t| t == label)
}

/// Recovers entity spans from inline-tagged output. The untagged token
/// sequence must equal the original tokens exactly.
pub fn parse_ner(output: &str, original: &Sample, config: &CodecConfig) -> ParsedCompletion {
    // tags glued to neighbouring text get their own whitespace
    let spaced =
        TAG.replace_all(
            output,
            |caps: &regex::Captures<'_>| {
                if known(config, &caps[1]) {
                    format!(" {} ", &caps[0])
                } else {
                    caps[0].to_string()
                }
            },
        );
    let tokens = &original.tokens;
    let n = tokens.len();
    let mut items = Vec::new();
    let mut t = 0usize;
    for piece in spaced.split_whitespace() {
        let item = match WHOLE_TAG.captures(piece) {
            Some(c) if known(config, c.get(2).unwrap().as_str()) => {
                let label = c.get(2).unwrap().as_str();
                if c.get(1).unwrap().as_str().is_empty() {
                    Item::Open(label)
                } else {
                    Item::Close(label)
                }
            }
            Some(_) if tokens.get(t).map(String::as_str) != Some(piece) => {
                return ParsedCompletion::format_error(output, format!("unknown tag {piece}"));
            }
            _ => Item::Text(piece),
        };
        if let Item::Text(_) = item {
            t += 1;
        }
        items.push(item);
    }

    let mut entities = Vec::new();
    let mut open: Option<(&str, usize)> = None;
    let mut t = 0usize;
    for item in items {
        match item {
            Item::Open(label) => {
                if let Some((outer, _)) = open {
                    return ParsedCompletion::format_error(output, format!("tag <{label}> nested inside <{outer}>"));
                }
                open = Some((label, t));
            }
            Item::Close(label) => match open.take() {
                None => {
                    return ParsedCompletion::format_error(output, format!("unexpected closing tag </{label}>"));
                }
                Some((opened, _)) if opened != label => {
                    return ParsedCompletion::format_error(
                        output,
                        format!("closing tag </{label}> does not match <{opened}>"),
                    );
                }
                Some((_, start)) if start == t => {
                    return ParsedCompletion::format_error(output, format!("empty <{label}> entity"));
                }
                Some((_, start)) => entities.push(Entity::new(start, t, label)),
            },
            Item::Text(tok) => {
                if t >= n {
                    return ParsedCompletion::format_error(output, format!("length mismatch: more than {n} tokens"));
                }
                if tokens[t] != tok {
                    return ParsedCompletion::format_error(output, format!("token mismatch at index {t}"));
                }
                t += 1;
            }
        }
    }
    if let Some((label, _)) = open {
        return ParsedCompletion::format_error(output, format!("unclosed tag <{label}>"));
    }
    if t != n {
        return ParsedCompletion::format_error(output, format!("length mismatch: expected {n} tokens, found {t}"));
    }
    ParsedCompletion::ok(output, TaskAnnotation::Ner(NerAnnotation { entities }))
}
