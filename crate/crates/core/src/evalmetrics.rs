//! Scoring parsed completions against gold annotations.
//!
//! Completions that failed to parse stay in the denominator: for NER they
//! predict nothing, for the parse tasks every token counts as wrong.
//! Adherence (the ok fraction) is reported alongside.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{NerAnnotation, ParseAnnotation, TaskAnnotation, TaskKind};
use crate::error::{Error, Result};
use crate::promptcodec::ParsedCompletion;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub task: TaskKind,
    pub n_samples: usize,
    pub n_ok: usize,
    pub adherence_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub las: Option<f64>,
    /// LAS over tokens of parseable completions only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub las_ok_only: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos_accuracy: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub correct: usize,
    pub total: usize,
}

impl MetricResult {
    fn empty(task: TaskKind, n_samples: usize, n_ok: usize) -> Self {
        MetricResult {
            task,
            n_samples,
            n_ok,
            adherence_rate: ratio(n_ok, n_samples),
            precision: None,
            recall: None,
            f1: None,
            las: None,
            las_ok_only: None,
            pos_accuracy: None,
            tp: 0,
            fp: 0,
            fn_: 0,
            correct: 0,
            total: 0,
        }
    }

    /// F1 for NER, LAS for depparse, accuracy for POS.
    pub fn headline(&self) -> f64 {
        match self.task {
            TaskKind::Ner => self.f1,
            TaskKind::Depparse => self.las,
            TaskKind::Pos => self.pos_accuracy,
        }
        .unwrap_or(0.0)
    }

    pub fn headline_name(&self) -> &'static str {
        match self.task {
            TaskKind::Ner => "f1",
            TaskKind::Depparse => "las",
            TaskKind::Pos => "pos_accuracy",
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn check_aligned(golds: usize, preds: usize) -> Result<()> {
    if golds != preds {
        return Err(Error::Argument(format!("{golds} gold annotations but {preds} predictions")));
    }
    Ok(())
}

fn ner_prediction(pred: &ParsedCompletion) -> Result<Option<&NerAnnotation>> {
    match (&pred.annotation, pred.is_ok()) {
        (Some(TaskAnnotation::Ner(a)), true) => Ok(Some(a)),
        (Some(TaskAnnotation::Parse(_)), true) => Err(Error::Argument("parse prediction scored as NER".into())),
        _ => Ok(None),
    }
}

fn parse_prediction(pred: &ParsedCompletion) -> Result<Option<&ParseAnnotation>> {
    match (&pred.annotation, pred.is_ok()) {
        (Some(TaskAnnotation::Parse(a)), true) => Ok(Some(a)),
        (Some(TaskAnnotation::Ner(_)), true) => Err(Error::Argument("NER prediction scored as a parse".into())),
        _ => Ok(None),
    }
}

/// Micro-averaged strict span matching: a predicted entity counts only when
/// start, end and type all equal a gold entity.
pub fn strict_ner_score(golds: &[NerAnnotation], preds: &[ParsedCompletion]) -> Result<MetricResult> {
    check_aligned(golds.len(), preds.len())?;
    let (mut tp, mut fp, mut fn_, mut n_ok) = (0, 0, 0, 0);
    for (gold, pred) in golds.iter().zip(preds) {
        let gold_set: HashSet<_> = gold.entities.iter().collect();
        match ner_prediction(pred)? {
            Some(p) => {
                n_ok += 1;
                let pred_set: HashSet<_> = p.entities.iter().collect();
                let hits = pred_set.intersection(&gold_set).count();
                tp += hits;
                fp += pred_set.len() - hits;
                fn_ += gold_set.len() - hits;
            }
            None => fn_ += gold_set.len(),
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    Ok(MetricResult {
        precision: Some(precision),
        recall: Some(recall),
        f1: Some(f1),
        tp,
        fp,
        fn_,
        ..MetricResult::empty(TaskKind::Ner, golds.len(), n_ok)
    })
}

/// Tallies (correct tokens, all tokens, correct in ok samples, tokens in ok samples, ok samples).
fn token_tally(
    golds: &[ParseAnnotation],
    preds: &[ParsedCompletion],
    hit: impl Fn(&crate::corpus::ParseRow, &crate::corpus::ParseRow) -> bool,
) -> Result<(usize, usize, usize, usize, usize)> {
    check_aligned(golds.len(), preds.len())?;
    let (mut correct, mut total, mut ok_correct, mut ok_total, mut n_ok) = (0, 0, 0, 0, 0);
    for (gold, pred) in golds.iter().zip(preds) {
        total += gold.rows.len();
        if let Some(p) = parse_prediction(pred)? {
            n_ok += 1;
            let c = gold.rows.iter().zip(&p.rows).filter(|(g, p)| hit(g, p)).count();
            correct += c;
            ok_correct += c;
            ok_total += gold.rows.len();
        }
    }
    Ok((correct, total, ok_correct, ok_total, n_ok))
}

/// Labeled attachment score: a token is correct when both head and deprel match.
pub fn las_score(golds: &[ParseAnnotation], preds: &[ParsedCompletion]) -> Result<MetricResult> {
    let (correct, total, ok_correct, ok_total, n_ok) =
        token_tally(golds, preds, |g, p| g.head == p.head && g.deprel == p.deprel)?;
    Ok(MetricResult {
        las: Some(ratio(correct, total)),
        las_ok_only: (ok_total > 0).then(|| ratio(ok_correct, ok_total)),
        correct,
        total,
        ..MetricResult::empty(TaskKind::Depparse, golds.len(), n_ok)
    })
}

pub fn pos_score(golds: &[ParseAnnotation], preds: &[ParsedCompletion]) -> Result<MetricResult> {
    let (correct, total, _, _, n_ok) = token_tally(golds, preds, |g, p| g.pos == p.pos)?;
    Ok(MetricResult {
        pos_accuracy: Some(ratio(correct, total)),
        correct,
        total,
        ..MetricResult::empty(TaskKind::Pos, golds.len(), n_ok)
    })
}

/// Dispatches on task; golds must carry the task's annotation kind.
pub fn score(task: TaskKind, golds: &[TaskAnnotation], preds: &[ParsedCompletion]) -> Result<MetricResult> {
    match task {
        TaskKind::Ner => {
            let g: Vec<NerAnnotation> = golds
                .iter()
                .map(|a| a.as_ner().cloned().ok_or_else(|| Error::Argument("gold is not an NER annotation".into())))
                .collect::<Result<_>>()?;
            strict_ner_score(&g, preds)
        }
        TaskKind::Depparse | TaskKind::Pos => {
            let g: Vec<ParseAnnotation> = golds
                .iter()
                .map(|a| a.as_parse().cloned().ok_or_else(|| Error::Argument("gold is not a parse annotation".into())))
                .collect::<Result<_>>()?;
            if task == TaskKind::Pos {
                pos_score(&g, preds)
            } else {
                las_score(&g, preds)
            }
        }
    }
}
