//! Fixtures and brute-force reference implementations shared by the
//! integration suites. The references follow the written selection rules
//! directly, with no attempt at efficiency.

#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use iclbudget::corpus::{write_jsonl, DEFAULT_ENTITY_TYPES, DEFAULT_POS_TAGS, UD_DEPRELS};
use iclbudget::{
    EmbeddingStore, EmbeddingVector, Entity, NerAnnotation, ParseAnnotation, ParseRow, Sample, TaskAnnotation, TaskKind,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Points = Vec<(String, Vec<f64>)>;

/// Random vectors with ids inserted in shuffled order.
pub fn random_points(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Points {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.into_iter().map(|i| (format!("d{i:03}"), (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())).collect()
}

pub fn store_of(points: &Points) -> EmbeddingStore {
    let mut s = EmbeddingStore::new("fixture");
    for (id, v) in points {
        s.insert(id.clone(), EmbeddingVector::new(v.clone())).unwrap();
    }
    s
}

pub fn ids_of(points: &Points) -> Vec<String> {
    points.iter().map(|(id, _)| id.clone()).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn unit(v: &[f64]) -> Vec<f64> {
    let n = norm(v);
    if n == 0.0 {
        v.to_vec()
    } else {
        v.iter().map(|x| x / n).collect()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (d / (norm(a) * norm(b))).clamp(-1.0, 1.0)
}

fn sorted(points: &Points, normalize: bool) -> Points {
    let mut p: Points =
        points.iter().map(|(id, v)| (id.clone(), if normalize { unit(v) } else { v.clone() })).collect();
    p.sort_by(|a, b| a.0.cmp(&b.0));
    p
}

/// The k points nearest the centroid, ties to the smaller id.
pub fn ref_central(points: &Points, k: usize, normalize: bool) -> Vec<String> {
    let p = sorted(points, normalize);
    let dim = p[0].1.len();
    let mut center = vec![0.0; dim];
    for (_, v) in &p {
        for d in 0..dim {
            center[d] += v[d];
        }
    }
    for c in &mut center {
        *c /= p.len() as f64;
    }
    let mut all: Vec<(f64, String)> = p.iter().map(|(id, v)| (sq_dist(v, &center), id.clone())).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|(_, id)| id).collect()
}

/// k-means++ seeding with the documented draw sequence, naive Lloyd
/// iterations, then per-centroid nearest unselected point.
pub fn ref_cluster(points: &Points, k: usize, seed: u64, max_iters: usize, tol: f64, normalize: bool) -> Vec<String> {
    let p = sorted(points, normalize);
    let xs: Vec<Vec<f64>> = p.iter().map(|(_, v)| v.clone()).collect();
    let n = xs.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut taken = vec![false; n];
    let first = rng.random_range(0..n);
    taken[first] = true;
    let mut cents = vec![xs[first].clone()];
    while cents.len() < k {
        let w: Vec<f64> =
            xs.iter().map(|x| cents.iter().map(|c| sq_dist(x, c)).fold(f64::INFINITY, f64::min)).collect();
        let total: f64 = w.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = 0;
            for i in 0..n {
                if w[i] > 0.0 {
                    acc += w[i];
                    pick = i;
                    if acc > target {
                        break;
                    }
                }
            }
            pick
        } else {
            let free: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        taken[next] = true;
        cents.push(xs[next].clone());
    }

    let nearest = |x: &[f64], cents: &[Vec<f64>]| {
        let mut best = 0;
        for c in 1..cents.len() {
            if sq_dist(x, &cents[c]) < sq_dist(x, &cents[best]) {
                best = c;
            }
        }
        best
    };
    for _ in 0..max_iters {
        let mut assign: Vec<usize> = xs.iter().map(|x| nearest(x, &cents)).collect();
        let mut next = cents.clone();
        let mut sizes = vec![0usize; k];
        for c in 0..k {
            let members: Vec<&Vec<f64>> = xs.iter().zip(&assign).filter(|(_, &a)| a == c).map(|(x, _)| x).collect();
            sizes[c] = members.len();
            if !members.is_empty() {
                let mut m = vec![0.0; xs[0].len()];
                for x in &members {
                    for d in 0..m.len() {
                        m[d] += x[d];
                    }
                }
                next[c] = m.iter().map(|s| s / members.len() as f64).collect();
            }
        }
        for c in 0..k {
            if sizes[c] > 0 {
                continue;
            }
            let mut best: Option<(f64, usize)> = None;
            for i in 0..n {
                if sizes[assign[i]] > 1 {
                    let d = sq_dist(&xs[i], &next[assign[i]]);
                    if best.is_none_or(|(bd, _)| d > bd) {
                        best = Some((d, i));
                    }
                }
            }
            if let Some((_, i)) = best {
                sizes[assign[i]] -= 1;
                assign[i] = c;
                sizes[c] = 1;
                next[c] = xs[i].clone();
            }
        }
        let shift = cents.iter().zip(&next).map(|(a, b)| sq_dist(a, b).sqrt()).fold(0.0, f64::max);
        cents = next;
        if shift < tol {
            break;
        }
    }

    let mut used = vec![false; n];
    let mut out = Vec::new();
    for c in &cents {
        let mut best: Option<(f64, usize)> = None;
        for i in 0..n {
            if !used[i] {
                let d = sq_dist(&xs[i], c);
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, i));
                }
            }
        }
        let i = best.unwrap().1;
        used[i] = true;
        out.push(p[i].0.clone());
    }
    out
}

/// Partial Fisher-Yates over the sorted ids.
pub fn ref_random(ids: &[String], k: usize, seed: u64) -> Vec<String> {
    let mut v = ids.to_vec();
    v.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..k {
        let j = rng.random_range(i..v.len());
        v.swap(i, j);
    }
    v.truncate(k);
    v
}

/// Full descending-similarity ranking, ties by id.
pub fn ref_rank(query: &[f64], candidates: &Points) -> Vec<(String, f64)> {
    let mut all: Vec<(String, f64)> = candidates.iter().map(|(id, v)| (id.clone(), cosine(query, v))).collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    all
}

/// Greedy vote-k stage 1 straight from the scoring rule.
pub fn ref_votek_stage1(points: &Points, m: usize, degree: usize, rho: f64) -> Vec<String> {
    let p = sorted(points, false);
    let n = p.len();
    let out: Vec<BTreeSet<usize>> = (0..n)
        .map(|v| {
            let mut others: Vec<(f64, usize)> =
                (0..n).filter(|&u| u != v).map(|u| (cosine(&p[v].1, &p[u].1), u)).collect();
            others.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            others.into_iter().take(degree).map(|(_, u)| u).collect()
        })
        .collect();
    let mut selected: Vec<usize> = Vec::new();
    while selected.len() < m {
        let mut scores: Vec<(f64, usize)> = Vec::new();
        for u in (0..n).filter(|u| !selected.contains(u)) {
            let mut s = 0.0;
            for v in 0..n {
                if !selected.contains(&v) && out[v].contains(&u) {
                    let hits = out[v].iter().filter(|w| selected.contains(w)).count() as i32;
                    s += rho.powi(-hits);
                }
            }
            scores.push((s, u));
        }
        let best = scores.iter().map(|x| x.0).fold(f64::NEG_INFINITY, f64::max);
        let pick =
            scores.iter().filter(|(s, _)| best - s <= 1e-12 * best.abs().max(1.0)).map(|&(_, u)| u).min().unwrap();
        selected.push(pick);
    }
    selected.into_iter().map(|i| p[i].0.clone()).collect()
}

/// Union over test points of their n nearest train points.
pub fn ref_max_pool(train: &Points, test: &Points, n: usize) -> BTreeSet<String> {
    let mut union = BTreeSet::new();
    for (tid, q) in test {
        let cands: Points = train.iter().filter(|(id, _)| id != tid).cloned().collect();
        for (id, _) in ref_rank(q, &cands).into_iter().take(n) {
            union.insert(id);
        }
    }
    union
}

const WORDS: [&str; 40] = [
    "river", "stone", "Alice", "Paris", "bank", "Bob", "city", "north", "report", "Acme", "market", "quiet", "Tokyo",
    "green", "council", "old", "Maria", "bridge", "summer", "Nile", "engine", "letter", "Lagos", "harbor", "bright",
    "Chen", "museum", "winter", "Oslo", "garden", "forest", "Zed", "signal", "copper", "Lima", "valley", "tower",
    "Omar", "ledger", "Rome",
];

fn random_tokens(rng: &mut ChaCha8Rng) -> Vec<String> {
    let len = rng.random_range(3..9);
    (0..len).map(|_| WORDS[rng.random_range(0..WORDS.len())].to_string()).collect()
}

pub fn random_entities(rng: &mut ChaCha8Rng, len: usize, types: &[&str]) -> Vec<Entity> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < len {
        if rng.random_bool(0.3) {
            let end = (i + rng.random_range(1..3)).min(len);
            out.push(Entity::new(i, end, types[rng.random_range(0..types.len())]));
            i = end + rng.random_range(0..2);
        } else {
            i += 1;
        }
    }
    out
}

pub fn random_rows(rng: &mut ChaCha8Rng, len: usize, tags: &[&str]) -> Vec<ParseRow> {
    (1..=len)
        .map(|pos| {
            let mut head = rng.random_range(0..=len);
            if head == pos {
                head = 0;
            }
            ParseRow::new(
                tags[rng.random_range(0..tags.len())],
                head,
                UD_DEPRELS[rng.random_range(0..UD_DEPRELS.len())],
            )
        })
        .collect()
}

/// Annotated toy samples with ids `{prefix}{i:03}`.
pub fn toy_samples(task: TaskKind, prefix: &str, n: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let tokens = random_tokens(&mut rng);
            let ann = match task {
                TaskKind::Ner => TaskAnnotation::Ner(NerAnnotation {
                    entities: random_entities(&mut rng, tokens.len(), &DEFAULT_ENTITY_TYPES),
                }),
                _ => TaskAnnotation::Parse(ParseAnnotation {
                    rows: random_rows(&mut rng, tokens.len(), &DEFAULT_POS_TAGS),
                }),
            };
            Sample::new(format!("{prefix}{i:03}"), tokens, Some(ann))
        })
        .collect()
}

/// Writes a toy dataset plus a config into `dir` and returns the config path.
/// `extra` is spliced into the top-level TOML table.
pub fn write_toy_run(dir: &Path, task: TaskKind, n_train: usize, n_test: usize, seed: u64, extra: &str) -> PathBuf {
    let train = toy_samples(task, "tr", n_train, seed);
    let test = toy_samples(task, "te", n_test, seed + 1000);
    std::fs::write(dir.join("train.jsonl"), write_jsonl(&train).unwrap()).unwrap();
    std::fs::write(dir.join("test.jsonl"), write_jsonl(&test).unwrap()).unwrap();
    let pos_field = if task == TaskKind::Ner { "" } else { "pos_field = \"xpos\"\n" };
    let config = format!(
        "task = \"{}\"\noutput_dir = \"run\"\n{extra}\n\n[dataset]\ntrain = \"train.jsonl\"\ntest = \"test.jsonl\"\n{pos_field}\n[embedding]\nprovider = \"hash\"\ndim = 16\n",
        task.as_str()
    );
    let path = dir.join("config.toml");
    std::fs::write(&path, config).unwrap();
    path
}

/// Every file under `dir`, relative path to bytes.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

/// Transcript lines with the wall-clock latency field zeroed.
pub fn without_latency(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes)
        .lines()
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
            v["latency_ms"] = 0.into();
            v.to_string()
        })
        .collect::<Vec<_>>()
        .join("\n")
}
