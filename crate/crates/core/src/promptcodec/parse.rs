use super::{CodecConfig, ParsedCompletion};
use crate::corpus::{validate_parse, ParseAnnotation, ParseRow, Sample, TaskAnnotation};
use crate::error::{Error, Result};

pub fn render_parse(sample: &Sample) -> Result<String> {
    let ann = sample.parse().ok_or_else(|| Error::Argument(format!("sample {} has no parse annotation", sample.id)))?;
    render_parse_rows(&sample.tokens, ann)
}

/// One `(token, POS, head, deprel)` line per token; head `0` is the root.
pub fn render_parse_rows(tokens: &[String], ann: &ParseAnnotation) -> Result<String> {
    if tokens.is_empty() {
        return Err(Error::Argument("cannot render a parse of an empty sample".into()));
    }
    validate_parse("<render>", tokens.len(), ann, &CodecConfig::unconstrained())?;
    let lines: Vec<String> =
        tokens.iter().zip(&ann.rows).map(|(tok, r)| format!("({tok}, {}, {}, {})", r.pos, r.head, r.deprel)).collect();
    Ok(lines.join("\n"))
}

struct Fields<'a> {
    token: &'a str,
    pos: &'a str,
    head: &'a str,
    deprel: &'a str,
}

/// Splits a tuple from the right: deprel and head never contain commas, and
/// the POS field is matched against the tag vocabulary (longest first) so
/// that tags like `,` and tokens containing commas both survive.
fn split_fields<'a>(line: &'a str, tags_longest_first: &[&str]) -> Option<Fields<'a>> {
    let inner = match (line.strip_prefix('('), line.ends_with(')')) {
        (Some(rest), true) => &rest[..rest.len() - 1],
        _ => line,
    };
    let (rest, deprel) = inner.rsplit_once(',')?;
    let (rest, head) = rest.rsplit_once(',')?;
    let rest = rest.trim_end();
    for tag in tags_longest_first {
        if let Some(before) = rest.strip_suffix(tag) {
            if let Some(token) = before.trim_end().strip_suffix(',') {
                let token = token.trim();
                if !token.is_empty() {
                    let pos = &rest[rest.len() - tag.len()..];
                    return Some(Fields { token, pos, head: head.trim(), deprel: deprel.trim() });
                }
            }
        }
    }
    let (token, pos) = rest.rsplit_once(',')?;
    Some(Fields { token: token.trim(), pos: pos.trim(), head: head.trim(), deprel: deprel.trim() })
}

pub fn parse_parse(output: &str, original: &Sample, config: &CodecConfig) -> ParsedCompletion {
    let lines: Vec<&str> = output.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    let n = original.tokens.len();
    if lines.len() != n {
        return ParsedCompletion::format_error(
            output,
            format!("length mismatch: expected {n} rows, found {}", lines.len()),
        );
    }
    let mut tags: Vec<&str> = config.pos_tags.iter().map(String::as_str).collect();
    tags.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));

    let mut rows = Vec::with_capacity(n);
    for (i, line) in lines.iter().enumerate() {
        let Some(f) = split_fields(line, &tags) else {
            return ParsedCompletion::format_error(output, format!("row {i}: expected 4 comma-separated fields"));
        };
        if f.token != original.tokens[i] {
            return ParsedCompletion::format_error(output, format!("token mismatch at index {i}"));
        }
        let Ok(head) = f.head.parse::<usize>() else {
            return ParsedCompletion::format_error(output, format!("row {i}: non-integer head {:?}", f.head));
        };
        if head > n || head == i + 1 {
            return ParsedCompletion::format_error(output, format!("row {i}: head {head} out of range"));
        }
        if !config.pos_tags.is_empty() && !config.pos_tags.iter().any(|t| t == f.pos) {
            return ParsedCompletion::format_error(output, format!("row {i}: unknown POS tag {:?}", f.pos));
        }
        if f.pos.is_empty() || f.deprel.is_empty() || f.deprel.chars().any(char::is_whitespace) {
            return ParsedCompletion::format_error(output, format!("row {i}: empty or malformed label"));
        }
        rows.push(ParseRow::new(f.pos, head, f.deprel));
    }
    ParsedCompletion::ok(output, TaskAnnotation::Parse(ParseAnnotation { rows }))
}
