//! The sweep runner: pool size x strategy x trial, plus the full-train
//! oracle cell, with resumable on-disk state.
//!
//! Layout of a run directory:
//!
//! ```text
//! manifest.json      cell status, config digest, provider tags
//! embeddings.jsonl   embedding cache
//! pools/<cell>.json  selected pools with the attached labels
//! transcripts/<cell>.jsonl
//! cells/<cell>.json  one CellResult per finished cell
//! results.csv, aggregate.csv, plot.json
//! ```

mod config;
mod manifest;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;

pub use config::{
    CompletionConfig, ConfidenceConfig, DataFormat, DatasetConfig, EmbeddingConfig, ExperimentConfig, PoolSizeBasis,
    RateLimitConfig, DEFAULT_FRACTIONS,
};
pub use manifest::{write_atomic, CellEntry, CellStatus, RunManifest, MANIFEST_FILE};

use crate::analysis::{
    aggregate, diversity_correlation, label_counts, plot_data, pool_entropy, write_aggregate_csv, write_results_csv,
    AggregateRow, CellResult, Correlation,
};
use crate::corpus::{parse_conllu_with, parse_jsonl, subsample_test, Dataset, LabelVocab, Sample, SampleIndex};
use crate::embedding::{
    embed_samples, EmbedOptions, EmbeddingCache, EmbeddingProvider, EmbeddingStore, FileEmbeddings, HashEmbedder,
    HttpEmbedder,
};
use crate::error::{Error, Result};
use crate::evalmetrics::score;
use crate::llmclient::mock::{ConstantConfidence, Corruptor, GoldEcho, HashConfidence, Replay, ReplayConfidence};
use crate::llmclient::{
    CompletionProvider, CompletionRequest, ConfidenceProvider, HttpChatProvider, HttpEndpoint, LlmClient,
    PromptConfidence, RateLimiter, Transcript,
};
use crate::poolselect::{
    select_all, select_central, select_cluster, select_random, select_vote_k, ConfidenceScorer, Pool, Strategy,
};
use crate::promptcodec::{build_prompt, parse_completion, CODEC_VERSION, TEMPLATE_VERSION};
use crate::retrieval::{compute_max_pool_size, select_demonstrations};

const EMBEDDING_CACHE: &str = "embeddings.jsonl";
pub const ORACLE_KEY: &str = "oracle";

/// The three provider seams. Built from the config by default; library
/// users may substitute their own.
#[derive(Clone)]
pub struct Providers {
    pub embedding: Arc<dyn EmbeddingProvider>,
    pub completion: Arc<dyn CompletionProvider>,
    pub confidence: Option<Arc<dyn ConfidenceProvider>>,
}

impl Providers {
    pub fn from_config(config: &ExperimentConfig, dataset: &Dataset) -> Result<Self> {
        let embedding: Arc<dyn EmbeddingProvider> = match &config.embedding {
            EmbeddingConfig::Hash { dim, seed } => Arc::new(HashEmbedder::new(*dim, *seed)),
            EmbeddingConfig::File { path } => Arc::new(FileEmbeddings::load(path)?),
            EmbeddingConfig::Http { url, model, api_key_env } => {
                Arc::new(HttpEmbedder { endpoint: endpoint(url, api_key_env), model: Some(model.clone()) })
            }
        };
        let completion: Arc<dyn CompletionProvider> = match &config.completion {
            CompletionConfig::GoldEcho => Arc::new(GoldEcho::new(config.task, &dataset.test)),
            CompletionConfig::Corruptor { rates, seed } => {
                Arc::new(Corruptor::new(config.task, &dataset.test, *rates, *seed, &dataset.vocab()))
            }
            CompletionConfig::Replay { path } => Arc::new(Replay::load(path)?),
            CompletionConfig::Http { url, model, api_key_env } => {
                Arc::new(HttpChatProvider::new(endpoint(url, api_key_env), model.clone()))
            }
        };
        let confidence: Option<Arc<dyn ConfidenceProvider>> = match &config.confidence {
            ConfidenceConfig::None => None,
            ConfidenceConfig::Constant { value } => Some(Arc::new(ConstantConfidence(*value))),
            ConfidenceConfig::Hash { seed } => Some(Arc::new(HashConfidence { seed: *seed })),
            ConfidenceConfig::Replay { path } => Some(Arc::new(ReplayConfidence::load(path)?)),
            ConfidenceConfig::Http { url, model, api_key_env } => {
                Some(Arc::new(HttpChatProvider::new(endpoint(url, api_key_env), model.clone())))
            }
        };
        Ok(Providers { embedding, completion, confidence })
    }

    fn tags(&self) -> BTreeMap<String, String> {
        let mut tags = BTreeMap::new();
        tags.insert("embedding".to_string(), self.embedding.tag());
        tags.insert("completion".to_string(), self.completion.tag());
        tags.insert(
            "confidence".to_string(),
            self.confidence.as_ref().map(|c| c.tag()).unwrap_or_else(|| "none".into()),
        );
        tags
    }
}

fn endpoint(url: &str, api_key_env: &Option<String>) -> HttpEndpoint {
    HttpEndpoint { api_key_env: api_key_env.clone(), ..HttpEndpoint::new(url) }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Stop after this many cells have run in this invocation, leaving the
    /// rest pending as if the process had been killed.
    pub halt_after: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub run_dir: PathBuf,
    pub cells: Vec<CellResult>,
    pub oracle: Option<CellResult>,
    pub aggregate: Vec<AggregateRow>,
    pub correlation: Option<Correlation>,
    pub failed: Vec<String>,
    pub halted: bool,
}

impl EvalReport {
    pub fn succeeded(&self) -> bool {
        self.failed.is_empty() && !self.halted
    }
}

/// Reads both splits, validates them and subsamples the test split.
pub fn load_dataset(config: &ExperimentConfig) -> Result<Dataset> {
    let read =
        |p: &Path| std::fs::read_to_string(p).map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())));
    let parse = |text: &str| match config.dataset.format {
        DataFormat::Jsonl => parse_jsonl(text, &LabelVocab::unconstrained()),
        DataFormat::Conllu => parse_conllu_with(text, config.dataset.pos_field),
    };
    let train = parse(&read(&config.dataset.train)?)?;
    let test = parse(&read(&config.dataset.test)?)?;
    let name = config.dataset.name.clone().unwrap_or_else(|| {
        config.dataset.train.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
    });
    let full = Dataset::new(name, config.task, train, test, config.labels())?;
    if full.train.is_empty() || full.test.is_empty() {
        return Err(Error::Config("train and test splits must be non-empty".into()));
    }
    subsample_test(&full, config.test_subsample, config.base_seed)
}

/// Budgets for the sweep: `max(1, round(f * basis))`, capped at the train
/// size, deduplicated and ascending.
pub fn pool_sizes(fractions: &[f64], basis: usize, train_size: usize) -> Vec<usize> {
    let mut ks: Vec<usize> =
        fractions.iter().map(|f| ((f * basis as f64).round() as usize).max(1).min(train_size.max(1))).collect();
    ks.sort_unstable();
    ks.dedup();
    ks
}

pub fn cell_key(strategy: &str, k: usize, trial: usize) -> String {
    format!("{strategy}-k{k}-t{trial}")
}

/// Everything a cell needs that does not depend on the cell.
pub struct Prepared {
    pub dataset: Dataset,
    pub store: EmbeddingStore,
    pub max_pool_size: usize,
}

pub fn prepare(config: &ExperimentConfig, providers: &Providers, dataset: Dataset) -> Result<Prepared> {
    std::fs::create_dir_all(&config.output_dir)?;
    let cache_path = config.output_dir.join(EMBEDDING_CACHE);
    let cache = if cache_path.is_file() { EmbeddingCache::load(&cache_path)? } else { EmbeddingCache::default() };
    let opts = EmbedOptions { retry: config.retry, in_flight: config.concurrency, ..Default::default() };
    let store = embed_samples(dataset.train.iter().chain(&dataset.test), providers.embedding.as_ref(), &cache, &opts)?;
    cache.save(&cache_path)?;
    let max_pool_size = compute_max_pool_size(&dataset.train, &dataset.test, &store, config.n_demos)?;
    Ok(Prepared { dataset, store, max_pool_size })
}

fn train_ids(dataset: &Dataset) -> Vec<String> {
    dataset.train.iter().map(|s| s.id.clone()).collect()
}

/// Selects a pool and attaches gold labels to it, simulating annotation.
pub fn select_pool(
    config: &ExperimentConfig,
    providers: &Providers,
    prepared: &Prepared,
    strategy: Strategy,
    k: usize,
    seed: u64,
) -> Result<Pool> {
    let ids = train_ids(&prepared.dataset);
    let store = &prepared.store;
    let mut pool = match strategy {
        Strategy::Central => select_central(store, &ids, k, config.geometry)?,
        Strategy::Cluster => select_cluster(store, &ids, k, seed, &config.kmeans, config.geometry)?,
        Strategy::Random => select_random(&ids, k, seed)?,
        Strategy::Oracle => select_all(&ids)?,
        Strategy::Votek => {
            let params = config.votek.capped(ids.len());
            let scorer = providers.confidence.as_ref().map(|provider| PromptConfidence {
                task: config.task,
                index: prepared.dataset.index(),
                store,
                mode: config.prompt_mode,
                n_demos: config.n_demos,
                model_tag: config.model_tag.clone(),
                provider: provider.as_ref(),
                retry: config.retry,
            });
            let mut pool =
                select_vote_k(store, &ids, k, &params, scorer.as_ref().map(|s| s as &dyn ConfidenceScorer), seed)?;
            if pool.provenance.method == "votek" {
                pool.provenance.confidence_provider = providers.confidence.as_ref().map(|c| c.tag());
            }
            pool
        }
    };
    let index = prepared.dataset.index();
    for id in &pool.ids {
        let ann = index
            .get(id)
            .and_then(|s| s.annotation.clone())
            .ok_or_else(|| Error::Argument(format!("train sample {id} has no gold annotation")))?;
        pool.annotations.insert(id.clone(), ann);
    }
    Ok(pool)
}

/// Scores every test sample with demonstrations retrieved from `pool`.
pub fn evaluate_pool(
    config: &ExperimentConfig,
    providers: &Providers,
    prepared: &Prepared,
    pool: &Pool,
    transcript: &Transcript,
) -> Result<crate::evalmetrics::MetricResult> {
    let dataset = &prepared.dataset;
    let annotated: Vec<Sample> = {
        let index = dataset.index();
        pool.ids
            .iter()
            .map(|id| {
                let base =
                    index.get(id).ok_or_else(|| Error::Argument(format!("pool id {id} is not a train sample")))?;
                let ann = pool
                    .annotations
                    .get(id)
                    .cloned()
                    .ok_or_else(|| Error::Argument(format!("pool sample {id} is not annotated")))?;
                Ok(Sample { annotation: Some(ann), ..base.clone() })
            })
            .collect::<Result<_>>()?
    };
    let index = SampleIndex::new(annotated.iter().chain(&dataset.test));
    let limiter = match config.rate_limit {
        Some(r) => RateLimiter::new(r.per_second, r.burst),
        None => RateLimiter::unlimited(),
    };
    let client = LlmClient::new(providers.completion.clone(), config.retry, limiter);
    let vocab = dataset.vocab();

    let threads = rayon::ThreadPoolBuilder::new()
        .num_threads(config.concurrency)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let preds = threads.install(|| {
        dataset
            .test
            .par_iter()
            .map(|t| {
                let demos = select_demonstrations(pool, &prepared.store, t, config.n_demos)?;
                let prompt = build_prompt(config.task, &demos, &index, config.prompt_mode)?;
                let mut req = CompletionRequest::new(&t.id, prompt, &config.model_tag);
                req.temperature = config.temperature;
                req.max_output_tokens = config.max_output_tokens;
                req.demo_ids = demos.ids().map(String::from).collect();
                let text = client
                    .complete(&req, transcript)
                    .map_err(|e| Error::provider(format!("completion for {}", t.id), e))?;
                Ok(parse_completion(config.task, &text, t, &vocab))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let golds = dataset
        .test
        .iter()
        .map(|t| t.annotation.clone().ok_or_else(|| Error::Argument(format!("test sample {} has no gold", t.id))))
        .collect::<Result<Vec<_>>>()?;
    score(config.task, &golds, &preds)
}

fn run_cell(
    config: &ExperimentConfig,
    providers: &Providers,
    prepared: &Prepared,
    run_dir: &Path,
    entry: &CellEntry,
) -> Result<()> {
    let strategy: Strategy = entry.strategy.parse()?;
    let pool = select_pool(config, providers, prepared, strategy, entry.pool_size, entry.seed)?;
    write_atomic(&run_dir.join(&entry.pool), pool.to_json()?.as_bytes())?;
    let transcript = Transcript::default();
    let metric = evaluate_pool(config, providers, prepared, &pool, &transcript)?;
    let entropy = pool_entropy(&label_counts(&pool, &prepared.dataset)?);
    let cell = CellResult {
        task: config.task,
        model_tag: config.model_tag.clone(),
        strategy: entry.strategy.clone(),
        pool_size: pool.ids.len(),
        trial: entry.trial,
        seed: entry.seed,
        metric,
        pool_label_entropy: entropy,
    };
    write_atomic(&run_dir.join(&entry.transcript), transcript.to_jsonl()?.as_bytes())?;
    write_atomic(&run_dir.join(&entry.result), serde_json::to_string_pretty(&cell)?.as_bytes())?;
    Ok(())
}

fn entry(key: String, strategy: &str, pool_size: usize, trial: usize, seed: u64) -> CellEntry {
    CellEntry {
        result: format!("cells/{key}.json"),
        pool: format!("pools/{key}.json"),
        transcript: format!("transcripts/{key}.jsonl"),
        key,
        strategy: strategy.to_string(),
        pool_size,
        trial,
        seed,
        status: CellStatus::Pending,
        error: None,
    }
}

/// All cells of the sweep, oracle first.
pub fn plan_cells(config: &ExperimentConfig, prepared: &Prepared) -> Vec<CellEntry> {
    let train = prepared.dataset.train.len();
    let basis = match config.pool_size_basis {
        PoolSizeBasis::MaxPool => prepared.max_pool_size,
        PoolSizeBasis::Train => train,
    };
    let mut cells = vec![entry(ORACLE_KEY.into(), Strategy::Oracle.as_str(), train, 0, config.base_seed)];
    for strategy in &config.strategies {
        for k in pool_sizes(&config.pool_size_fractions, basis, train) {
            for trial in 0..config.trials {
                let seed = config.base_seed + trial as u64;
                cells.push(entry(cell_key(strategy.as_str(), k, trial), strategy.as_str(), k, trial, seed));
            }
        }
    }
    cells
}

fn code_version() -> String {
    format!("{} codec {CODEC_VERSION} template {TEMPLATE_VERSION}", env!("CARGO_PKG_VERSION"))
}

fn run_notes(config: &ExperimentConfig, prepared: &Prepared, full_test: usize) -> Vec<String> {
    let mut notes = Vec::new();
    if prepared.dataset.test.len() < full_test {
        notes.push(format!(
            "test split uniformly subsampled (no stratification) from {full_test} to {} samples",
            prepared.dataset.test.len()
        ));
    }
    if config.pool_size_basis == PoolSizeBasis::Train {
        notes.push("pool sizes are fractions of the train split, not of the max pool size".into());
    }
    notes.push("oracle cell runs a single trial".into());
    notes.push(format!(
        "decoding temperature {} and max_output_tokens {} are this tool's defaults, not published settings",
        config.temperature, config.max_output_tokens
    ));
    notes
}

fn full_test_size(config: &ExperimentConfig) -> Result<usize> {
    let mut all = config.clone();
    all.test_subsample = usize::MAX;
    Ok(load_dataset(&all)?.test.len())
}

/// Runs the whole sweep with providers built from the config.
pub fn run(config: &ExperimentConfig, config_path: Option<&Path>) -> Result<EvalReport> {
    let dataset = load_dataset(config)?;
    let providers = Providers::from_config(config, &dataset)?;
    run_with(config, config_path, &providers, RunOptions::default())
}

pub fn run_with(
    config: &ExperimentConfig,
    config_path: Option<&Path>,
    providers: &Providers,
    opts: RunOptions,
) -> Result<EvalReport> {
    config.validate()?;
    let dataset = load_dataset(config)?;
    let prepared = prepare(config, providers, dataset)?;
    let manifest = RunManifest {
        config_digest: config.digest(),
        config_path: config_path.map(|p| p.canonicalize().unwrap_or_else(|_| p.to_path_buf())),
        code_version: code_version(),
        provider_tags: providers.tags(),
        max_pool_size: prepared.max_pool_size,
        train_size: prepared.dataset.train.len(),
        test_size: prepared.dataset.test.len(),
        notes: run_notes(config, &prepared, full_test_size(config)?),
        cells: plan_cells(config, &prepared),
    };
    manifest.save(&config.output_dir)?;
    execute(config, providers, &prepared, manifest, opts)
}

fn execute(
    config: &ExperimentConfig,
    providers: &Providers,
    prepared: &Prepared,
    mut manifest: RunManifest,
    opts: RunOptions,
) -> Result<EvalReport> {
    let run_dir = config.output_dir.clone();
    let mut halted = false;
    let todo: Vec<CellEntry> = manifest.cells.iter().filter(|c| !manifest.is_done(&run_dir, c)).cloned().collect();
    for (executed, cell) in todo.into_iter().enumerate() {
        if opts.halt_after.is_some_and(|n| executed >= n) {
            halted = true;
            break;
        }
        let outcome = run_cell(config, providers, prepared, &run_dir, &cell);
        let slot = manifest.cell_mut(&cell.key).expect("planned cell");
        match outcome {
            Ok(()) => {
                slot.status = CellStatus::Done;
                slot.error = None;
            }
            Err(e) => {
                slot.status = CellStatus::Failed;
                slot.error = Some(e.to_string());
            }
        }
        manifest.save(&run_dir)?;
    }
    let mut report = write_reports(&run_dir, &manifest)?;
    report.halted = halted;
    Ok(report)
}

/// Runs only the full-train oracle cell, without touching a run directory.
pub fn run_oracle(config: &ExperimentConfig) -> Result<CellResult> {
    let dataset = load_dataset(config)?;
    let providers = Providers::from_config(config, &dataset)?;
    run_oracle_with(config, &providers)
}

pub fn run_oracle_with(config: &ExperimentConfig, providers: &Providers) -> Result<CellResult> {
    let dataset = load_dataset(config)?;
    let prepared = prepare(config, providers, dataset)?;
    let pool =
        select_pool(config, providers, &prepared, Strategy::Oracle, prepared.dataset.train.len(), config.base_seed)?;
    let metric = evaluate_pool(config, providers, &prepared, &pool, &Transcript::default())?;
    Ok(CellResult {
        task: config.task,
        model_tag: config.model_tag.clone(),
        strategy: Strategy::Oracle.as_str().into(),
        pool_size: pool.ids.len(),
        trial: 0,
        seed: config.base_seed,
        metric,
        pool_label_entropy: pool_entropy(&label_counts(&pool, &prepared.dataset)?),
    })
}

/// Completes the pending and failed cells of an existing run. The config
/// named in the manifest must still hash to the recorded digest.
pub fn resume(manifest_path: &Path) -> Result<EvalReport> {
    resume_with(manifest_path, None, RunOptions::default())
}

pub fn resume_with(manifest_path: &Path, providers: Option<&Providers>, opts: RunOptions) -> Result<EvalReport> {
    let manifest = RunManifest::load(manifest_path)?;
    let config_path =
        manifest.config_path.clone().ok_or_else(|| Error::Resume("manifest does not record its config file".into()))?;
    let config = ExperimentConfig::load(&config_path)?;
    if config.digest() != manifest.config_digest {
        return Err(Error::Resume(format!("config {} changed since the run started", config_path.display())));
    }
    let run_dir = manifest_path.parent().unwrap_or(Path::new("."));
    if run_dir.canonicalize()? != config.output_dir.canonicalize()? {
        return Err(Error::Resume("manifest is not in the config's output directory".into()));
    }
    let dataset = load_dataset(&config)?;
    let owned;
    let providers = match providers {
        Some(p) => p,
        None => {
            owned = Providers::from_config(&config, &dataset)?;
            &owned
        }
    };
    let prepared = prepare(&config, providers, dataset)?;
    if prepared.max_pool_size != manifest.max_pool_size || plan_cells(&config, &prepared) != pending_view(&manifest) {
        return Err(Error::Resume("embeddings or data changed: the planned cells differ".into()));
    }
    execute(&config, providers, &prepared, manifest, opts)
}

fn pending_view(manifest: &RunManifest) -> Vec<CellEntry> {
    manifest.cells.iter().map(|c| CellEntry { status: CellStatus::Pending, error: None, ..c.clone() }).collect()
}

/// Rebuilds results.csv, aggregate.csv and plot.json from the finished cells.
pub fn report(run_dir: &Path) -> Result<EvalReport> {
    let manifest = RunManifest::load(&run_dir.join(MANIFEST_FILE))?;
    write_reports(run_dir, &manifest)
}

fn write_reports(run_dir: &Path, manifest: &RunManifest) -> Result<EvalReport> {
    let mut cells = Vec::new();
    let mut oracle = None;
    for entry in &manifest.cells {
        if !manifest.is_done(run_dir, entry) {
            continue;
        }
        let cell: CellResult = serde_json::from_str(&std::fs::read_to_string(run_dir.join(&entry.result))?)?;
        if entry.key == ORACLE_KEY {
            oracle = Some(cell);
        } else {
            cells.push(cell);
        }
    }
    let mut rows_csv = Vec::new();
    write_results_csv(oracle.iter().chain(&cells).cloned().collect::<Vec<_>>().as_slice(), &mut rows_csv)?;
    write_atomic(&run_dir.join("results.csv"), &rows_csv)?;

    let (aggregate_rows, correlation) = match &oracle {
        Some(o) => {
            let rows = aggregate(&cells, &o.metric);
            let corr = diversity_correlation(&rows).ok();
            let mut buf = Vec::new();
            write_aggregate_csv(&rows, &mut buf)?;
            write_atomic(&run_dir.join("aggregate.csv"), &buf)?;
            let plot = plot_data(&rows, &o.metric, corr);
            write_atomic(&run_dir.join("plot.json"), serde_json::to_string_pretty(&plot)?.as_bytes())?;
            (rows, corr)
        }
        None => (Vec::new(), None),
    };
    Ok(EvalReport {
        run_dir: run_dir.to_path_buf(),
        cells,
        oracle,
        aggregate: aggregate_rows,
        correlation,
        failed: manifest.failed().iter().map(|c| format!("{}: {}", c.key, c.error.as_deref().unwrap_or(""))).collect(),
        halted: false,
    })
}
