//! Declarative sweep configuration, read from TOML.
//!
//! Relative paths are resolved against the directory of the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{PosField, TaskKind, DEFAULT_ENTITY_TYPES, DEFAULT_POS_TAGS, UPOS_TAGS};
use crate::error::{Error, Result};
use crate::llmclient::mock::CorruptionRates;
use crate::llmclient::RetryPolicy;
use crate::poolselect::{Geometry, KMeansParams, Strategy, VoteKParams};
use crate::promptcodec::PromptMode;

pub const DEFAULT_FRACTIONS: [f64; 7] = [0.001, 0.0025, 0.005, 0.01, 0.025, 0.05, 0.10];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    #[default]
    Jsonl,
    Conllu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub format: DataFormat,
    pub train: PathBuf,
    pub test: PathBuf,
    /// Entity types (NER) or POS tags (parse tasks); derived from the task
    /// and `pos_field` when absent.
    #[serde(default)]
    pub labels: Option<Vec<String>>,
    #[serde(default)]
    pub pos_field: PosField,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "provider", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbeddingConfig {
    Hash {
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default)]
        seed: u64,
    },
    /// Precomputed vectors, JSONL lines of `{"id": .., "vector": [..]}`.
    File { path: PathBuf },
    Http {
        url: String,
        model: String,
        #[serde(default)]
        api_key_env: Option<String>,
    },
}

fn default_dim() -> usize {
    64
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig::Hash { dim: default_dim(), seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "provider", rename_all = "snake_case", deny_unknown_fields)]
pub enum CompletionConfig {
    #[default]
    GoldEcho,
    Corruptor {
        #[serde(default)]
        rates: CorruptionRates,
        #[serde(default)]
        seed: u64,
    },
    /// Transcript file or directory of transcripts to replay by request digest.
    Replay { path: PathBuf },
    Http {
        url: String,
        model: String,
        #[serde(default)]
        api_key_env: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "provider", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConfidenceConfig {
    #[default]
    None,
    Constant {
        value: f64,
    },
    Hash {
        #[serde(default)]
        seed: u64,
    },
    /// JSON map of request digest to score.
    Replay {
        path: PathBuf,
    },
    Http {
        url: String,
        model: String,
        #[serde(default)]
        api_key_env: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateLimitConfig {
    pub per_second: f64,
    #[serde(default = "default_burst")]
    pub burst: u32,
}

fn default_burst() -> u32 {
    1
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolSizeBasis {
    /// Fractions of the max pool size.
    #[default]
    MaxPool,
    /// Fractions of the train split size.
    Train,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskKind,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    #[serde(default)]
    pub completion: CompletionConfig,
    #[serde(default)]
    pub confidence: ConfidenceConfig,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<Strategy>,
    #[serde(default = "default_fractions")]
    pub pool_size_fractions: Vec<f64>,
    #[serde(default)]
    pub pool_size_basis: PoolSizeBasis,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_n_demos")]
    pub n_demos: usize,
    #[serde(default = "default_test_subsample")]
    pub test_subsample: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub prompt_mode: PromptMode,
    #[serde(default = "default_model_tag")]
    pub model_tag: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_output_tokens: u32,
    /// In-flight completion requests within a cell.
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default)]
    pub rate_limit: Option<RateLimitConfig>,
    #[serde(default)]
    pub geometry: Geometry,
    #[serde(default)]
    pub kmeans: KMeansParams,
    #[serde(default)]
    pub votek: VoteKParams,
    pub output_dir: PathBuf,
}

fn default_strategies() -> Vec<Strategy> {
    Strategy::BUDGETED.to_vec()
}

fn default_fractions() -> Vec<f64> {
    DEFAULT_FRACTIONS.to_vec()
}

fn default_trials() -> usize {
    3
}

fn default_n_demos() -> usize {
    5
}

fn default_test_subsample() -> usize {
    1000
}

fn default_model_tag() -> String {
    "model".into()
}

fn default_max_tokens() -> u32 {
    1024
}

fn default_concurrency() -> usize {
    4
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file and makes its paths absolute.
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let base = if base.as_os_str().is_empty() { PathBuf::from(".") } else { base };
        let base = base.canonicalize().unwrap_or(base);
        config.resolve_paths(&base);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.dataset.train);
        fix(&mut self.dataset.test);
        fix(&mut self.output_dir);
        if let EmbeddingConfig::File { path } = &mut self.embedding {
            fix(path);
        }
        if let CompletionConfig::Replay { path } = &mut self.completion {
            fix(path);
        }
        if let ConfidenceConfig::Replay { path } = &mut self.confidence {
            fix(path);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pool_size_fractions.is_empty() {
            return Err(Error::Config("pool_size_fractions is empty".into()));
        }
        if let Some(f) = self.pool_size_fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
            return Err(Error::Config(format!("pool size fraction {f} is not in (0, 1]")));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.n_demos == 0 {
            return Err(Error::Config("n_demos must be at least 1".into()));
        }
        if self.test_subsample == 0 {
            return Err(Error::Config("test_subsample must be at least 1".into()));
        }
        if self.concurrency == 0 {
            return Err(Error::Config("concurrency must be at least 1".into()));
        }
        if self.strategies.contains(&Strategy::Oracle) {
            return Err(Error::Config("the oracle cell always runs; list only budgeted strategies".into()));
        }
        if self.temperature < 0.0 {
            return Err(Error::Config("temperature must be non-negative".into()));
        }
        Ok(())
    }

    /// The label set the dataset is validated and parsed against.
    pub fn labels(&self) -> Vec<String> {
        if let Some(l) = &self.dataset.labels {
            return l.clone();
        }
        let defaults: &[&str] = match (self.task, self.dataset.pos_field) {
            (TaskKind::Ner, _) => &DEFAULT_ENTITY_TYPES,
            (_, PosField::Xpos) => &DEFAULT_POS_TAGS,
            (_, PosField::Upos) => &UPOS_TAGS,
        };
        defaults.iter().map(|s| s.to_string()).collect()
    }

    /// SHA-256 of the canonical JSON encoding; resume refuses on mismatch.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}
