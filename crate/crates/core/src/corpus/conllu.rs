use std::fmt::Write as _;

use super::{ParseAnnotation, ParseRow, Sample, TaskAnnotation};
use crate::error::{Error, Result};

/// Which CoNLL-U column supplies the POS tag.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PosField {
    #[default]
    Upos,
    Xpos,
}

/// Parses CoNLL-U text using the UPOS column for tags.
pub fn parse_conllu(text: &str) -> Result<Vec<Sample>> {
    parse_conllu_with(text, PosField::Upos)
}

/// Parses CoNLL-U text into one sample per sentence. Multiword-token ranges
/// (`3-4`) and empty nodes (`5.1`) are skipped. Sentence ids come from a
/// `# sent_id` comment when present, otherwise `s{n}` by position.
pub fn parse_conllu_with(text: &str, pos_field: PosField) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    let mut sent = SentenceBuilder::default();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            sent.finish(&mut out)?;
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            if let Some(v) = comment.strip_prefix("sent_id") {
                sent.id = Some(v.trim_start().trim_start_matches('=').trim().to_string());
            } else if let Some(v) = comment.strip_prefix("text") {
                if let Some(v) = v.trim_start().strip_prefix('=') {
                    sent.text = Some(v.trim().to_string());
                }
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected 10 tab-separated columns, found {}", cols.len()),
            });
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let position: usize = cols[0]
            .parse()
            .map_err(|_| Error::Parse { line: lineno, message: format!("non-integer ID {:?}", cols[0]) })?;
        if position != sent.tokens.len() + 1 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected token ID {}, found {position}", sent.tokens.len() + 1),
            });
        }
        let head: usize = cols[6]
            .parse()
            .map_err(|_| Error::Parse { line: lineno, message: format!("non-integer HEAD {:?}", cols[6]) })?;
        let pos = match pos_field {
            PosField::Upos => cols[3],
            PosField::Xpos => cols[4],
        };
        if sent.first_line == 0 {
            sent.first_line = lineno;
        }
        sent.tokens.push(cols[1].to_string());
        sent.rows.push(ParseRow::new(pos, head, cols[7]));
    }
    sent.finish(&mut out)?;
    Ok(out)
}

#[derive(Default)]
struct SentenceBuilder {
    id: Option<String>,
    text: Option<String>,
    tokens: Vec<String>,
    rows: Vec<ParseRow>,
    first_line: usize,
}

impl SentenceBuilder {
    fn finish(&mut self, out: &mut Vec<Sample>) -> Result<()> {
        let b = std::mem::take(self);
        if b.tokens.is_empty() {
            return Ok(());
        }
        let n = b.tokens.len();
        for (i, row) in b.rows.iter().enumerate() {
            if row.head > n || row.head == i + 1 {
                return Err(Error::Parse {
                    line: b.first_line + i,
                    message: format!("HEAD {} invalid for token {} of {n}", row.head, i + 1),
                });
            }
        }
        let id = b.id.unwrap_or_else(|| format!("s{}", out.len() + 1));
        let text = b.text.unwrap_or_else(|| b.tokens.join(" "));
        out.push(Sample {
            id,
            text,
            tokens: b.tokens,
            annotation: Some(TaskAnnotation::Parse(ParseAnnotation { rows: b.rows })),
        });
        Ok(())
    }
}

/// Writes samples as CoNLL-U. Tags go to the UPOS column; unused columns are `_`.
pub fn write_conllu(samples: &[Sample]) -> String {
    let mut out = String::new();
    for s in samples {
        let _ = writeln!(out, "# sent_id = {}", s.id);
        let _ = writeln!(out, "# text = {}", s.text);
        let rows = s.parse().map(|p| p.rows.as_slice()).unwrap_or(&[]);
        for (i, tok) in s.tokens.iter().enumerate() {
            let (pos, head, deprel) = match rows.get(i) {
                Some(r) => (r.pos.as_str(), r.head.to_string(), r.deprel.as_str()),
                None => ("_", "_".to_string(), "_"),
            };
            let _ = writeln!(out, "{}\t{tok}\t_\t{pos}\t_\t_\t{head}\t{deprel}\t_\t_", i + 1);
        }
        out.push('\n');
    }
    out
}
