//! Aggregation over trials, oracle-relative scores and the pool label
//! diversity analysis.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::json;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::corpus::{Dataset, TaskAnnotation, TaskKind};
use crate::error::{Error, Result};
use crate::evalmetrics::MetricResult;
use crate::poolselect::Pool;

/// Label tallies over a pool: entity types for NER, deprels for dependency
/// parsing, POS tags for tagging. Labels attached to the pool take
/// precedence over the dataset's gold annotations.
pub fn label_counts(pool: &Pool, dataset: &Dataset) -> Result<BTreeMap<String, usize>> {
    let index = dataset.index();
    let mut counts = BTreeMap::new();
    for id in &pool.ids {
        let ann = match pool.annotations.get(id) {
            Some(a) => a,
            None => index
                .get(id)
                .and_then(|s| s.annotation.as_ref())
                .ok_or_else(|| Error::Argument(format!("pool sample {id} has no annotation")))?,
        };
        match (dataset.task, ann) {
            (TaskKind::Ner, TaskAnnotation::Ner(a)) => {
                for e in &a.entities {
                    *counts.entry(e.label.clone()).or_insert(0) += 1;
                }
            }
            (TaskKind::Depparse, TaskAnnotation::Parse(a)) => {
                for r in &a.rows {
                    *counts.entry(r.deprel.clone()).or_insert(0) += 1;
                }
            }
            (TaskKind::Pos, TaskAnnotation::Parse(a)) => {
                for r in &a.rows {
                    *counts.entry(r.pos.clone()).or_insert(0) += 1;
                }
            }
            _ => return Err(Error::Argument(format!("pool sample {id} has the wrong annotation kind"))),
        }
    }
    Ok(counts)
}

/// Shannon entropy in nats.
pub fn entropy(counts: &BTreeMap<String, usize>) -> Result<f64> {
    let total: usize = counts.values().sum();
    if total == 0 {
        return Err(Error::Domain("entropy of all-zero counts".into()));
    }
    let total = total as f64;
    let h = counts
        .values()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum::<f64>();
    Ok(h.max(0.0))
}

/// Entropy that treats a pool without labels as carrying no diversity.
pub fn pool_entropy(counts: &BTreeMap<String, usize>) -> f64 {
    entropy(counts).unwrap_or(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    /// Two-sided, from the t statistic with n - 2 degrees of freedom.
    /// Absent for n = 2.
    pub p_value: Option<f64>,
    pub n: usize,
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<Correlation> {
    if xs.len() != ys.len() {
        return Err(Error::Argument(format!("pearson over {} and {} values", xs.len(), ys.len())));
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::Argument("pearson needs at least two pairs".into()));
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Domain("pearson of a constant series".into()));
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let p_value = (n > 2).then(|| {
        let df = (n - 2) as f64;
        if 1.0 - r * r <= 0.0 {
            return 0.0;
        }
        let t = r * (df / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
        (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
    });
    Ok(Correlation { r, p_value, n })
}

/// One (strategy, pool size, trial) evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub task: TaskKind,
    pub model_tag: String,
    pub strategy: String,
    pub pool_size: usize,
    pub trial: usize,
    pub seed: u64,
    pub metric: MetricResult,
    pub pool_label_entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub strategy: String,
    pub pool_size: usize,
    pub trials: usize,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub mean_entropy: f64,
    pub oracle_value: f64,
    pub percent_of_oracle: Option<f64>,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Groups cells by (strategy, pool size), ordered by strategy then size.
pub fn aggregate(cells: &[CellResult], oracle: &MetricResult) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(&str, usize), Vec<&CellResult>> = BTreeMap::new();
    for c in cells {
        groups.entry((c.strategy.as_str(), c.pool_size)).or_default().push(c);
    }
    let oracle_value = oracle.headline();
    groups
        .into_iter()
        .map(|((strategy, pool_size), group)| {
            let scores: Vec<f64> = group.iter().map(|c| c.metric.headline()).collect();
            let entropies: Vec<f64> = group.iter().map(|c| c.pool_label_entropy).collect();
            let (mean, std) = mean_std(&scores);
            AggregateRow {
                strategy: strategy.to_string(),
                pool_size,
                trials: group.len(),
                metric: oracle.headline_name().to_string(),
                mean,
                std,
                mean_entropy: mean_std(&entropies).0,
                oracle_value,
                percent_of_oracle: (oracle_value > 0.0).then(|| 100.0 * mean / oracle_value),
            }
        })
        .collect()
}

/// Correlation between mean pool entropy and mean score across the
/// (strategy, pool size) groups.
pub fn diversity_correlation(rows: &[AggregateRow]) -> Result<Correlation> {
    let xs: Vec<f64> = rows.iter().map(|r| r.mean_entropy).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.mean).collect();
    pearson(&xs, &ys)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const RESULTS_HEADER: [&str; 21] = [
    "task",
    "model_tag",
    "strategy",
    "pool_size",
    "trial",
    "seed",
    "n_samples",
    "n_ok",
    "adherence_rate",
    "precision",
    "recall",
    "f1",
    "las",
    "las_ok_only",
    "pos_accuracy",
    "tp",
    "fp",
    "fn",
    "correct",
    "total",
    "pool_label_entropy",
];

pub fn write_results_csv<W: Write>(cells: &[CellResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULTS_HEADER)?;
    for c in cells {
        let m = &c.metric;
        w.write_record([
            c.task.as_str().to_string(),
            c.model_tag.clone(),
            c.strategy.clone(),
            c.pool_size.to_string(),
            c.trial.to_string(),
            c.seed.to_string(),
            m.n_samples.to_string(),
            m.n_ok.to_string(),
            m.adherence_rate.to_string(),
            opt(m.precision),
            opt(m.recall),
            opt(m.f1),
            opt(m.las),
            opt(m.las_ok_only),
            opt(m.pos_accuracy),
            m.tp.to_string(),
            m.fp.to_string(),
            m.fn_.to_string(),
            m.correct.to_string(),
            m.total.to_string(),
            c.pool_label_entropy.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_aggregate_csv<W: Write>(rows: &[AggregateRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "strategy",
        "pool_size",
        "trials",
        "metric",
        "mean",
        "std",
        "mean_entropy",
        "oracle_value",
        "percent_of_oracle",
    ])?;
    for r in rows {
        w.write_record([
            r.strategy.clone(),
            r.pool_size.to_string(),
            r.trials.to_string(),
            r.metric.clone(),
            r.mean.to_string(),
            r.std.to_string(),
            r.mean_entropy.to_string(),
            r.oracle_value.to_string(),
            opt(r.percent_of_oracle),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Series per strategy plus the oracle line, for external plotting.
pub fn plot_data(rows: &[AggregateRow], oracle: &MetricResult, correlation: Option<Correlation>) -> serde_json::Value {
    let mut series: BTreeMap<&str, Vec<serde_json::Value>> = BTreeMap::new();
    for r in rows {
        series
            .entry(r.strategy.as_str())
            .or_default()
            .push(json!({ "pool_size": r.pool_size, "mean": r.mean, "std": r.std, "trials": r.trials }));
    }
    json!({
        "metric": oracle.headline_name(),
        "oracle": oracle.headline(),
        "series": series,
        "diversity_correlation": correlation,
    })
}
