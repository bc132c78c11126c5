//! Run configuration: one TOML file describing data, backends, methods and
//! output locations, with environment-variable overrides for secrets. Every
//! run writes a frozen copy of the resolved config beside its outputs.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::aggregator::{Method, UncertaintyMode};
use crate::error::{Error, Result};
use crate::gateway::{BackendConfig, LogprobSupport, ProbabilityStrategy};

pub const API_KEY_ENV: &str = "PROMPTENSE_API_KEY";
pub const BASE_URL_ENV: &str = "PROMPTENSE_BASE_URL";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub extraction: BackendBlock,
    pub judge: BackendBlock,
    pub prompts: PromptConfig,
    pub run: RunOptions,
    pub linear: LinearOptions,
    pub mlp: MlpOptions,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: DatasetConfig::default(),
            extraction: BackendBlock::default(),
            judge: BackendBlock {
                kind: BackendKind::Mock,
                model: "mock-judge".into(),
                ..BackendBlock::default()
            },
            prompts: PromptConfig::default(),
            run: RunOptions::default(),
            linear: LinearOptions::default(),
            mlp: MlpOptions::default(),
            output: OutputConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: PathBuf,
    /// Labels need strictly more positives than this to be evaluable.
    pub min_positives: usize,
    pub split_fractions: [f64; 3],
    pub split_seed: u64,
    /// Size of the held-out subset used to tune the linear weights.
    pub tuning_size: usize,
    pub tuning_seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            path: PathBuf::from("data/mini_corpus.jsonl"),
            min_positives: 15,
            split_fractions: [0.5, 0.2, 0.3],
            split_seed: 1,
            tuning_size: 50,
            tuning_seed: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Http,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendBlock {
    pub kind: BackendKind,
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    pub max_retries: u32,
    pub timeout_secs: u64,
    pub logprobs: LogprobSupport,
    /// Mock-only: response seed.
    pub mock_seed: u64,
    /// Mock-only: per-template accuracy, 1-based template order.
    pub mock_template_accuracy: Vec<f64>,
    /// Never read from the file; injected from the environment.
    #[serde(skip)]
    pub api_key: Option<String>,
}

impl Default for BackendBlock {
    fn default() -> Self {
        BackendBlock {
            kind: BackendKind::Mock,
            base_url: String::new(),
            model: "mock-extractor".into(),
            temperature: 0.0,
            max_retries: 3,
            timeout_secs: 60,
            logprobs: LogprobSupport::Auto,
            mock_seed: 7,
            mock_template_accuracy: vec![0.9, 0.9, 0.9, 0.55, 0.55, 0.55],
            api_key: None,
        }
    }
}

impl BackendBlock {
    pub fn backend_config(&self) -> BackendConfig {
        BackendConfig {
            base_url: self.base_url.clone(),
            model_name: self.model.clone(),
            temperature: self.temperature,
            max_retries: self.max_retries,
            request_timeout: Duration::from_secs(self.timeout_secs),
            logprob_support: self.logprobs,
            retry_backoff: Duration::from_millis(200),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptConfig {
    /// Optional template file; absent means the built-in six-prompt ensemble.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunOptions {
    pub methods: Vec<String>,
    pub probability: ProbabilityStrategy,
    /// With the logprob strategy, fall back to the hard answer when a backend
    /// returns no token log-probabilities.
    pub fallback_to_hard: bool,
    pub threshold: f64,
    pub cap: f64,
    pub bins: usize,
    pub uncertainty: UncertaintyMode,
    pub seed: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            methods: Method::ALL.iter().map(|m| m.as_str().to_string()).collect(),
            probability: ProbabilityStrategy::Logprob,
            fallback_to_hard: true,
            threshold: 0.5,
            cap: 0.2,
            bins: 10,
            uncertainty: UncertaintyMode::MixtureEntropy,
            seed: 0,
        }
    }
}

impl RunOptions {
    pub fn parsed_methods(&self) -> Result<Vec<Method>> {
        self.methods.iter().map(|m| Method::parse(m)).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearOptions {
    pub learning_rate: f64,
    pub max_iters: usize,
    pub convergence_tol: f64,
    pub tau: f64,
}

impl Default for LinearOptions {
    fn default() -> Self {
        let d = crate::weight_opt::LinearOptConfig::default();
        LinearOptions {
            learning_rate: d.learning_rate,
            max_iters: d.max_iters,
            convergence_tol: d.convergence_tol,
            tau: d.tau,
        }
    }
}

impl LinearOptions {
    pub fn to_opt_config(&self, seed: u64) -> crate::weight_opt::LinearOptConfig {
        crate::weight_opt::LinearOptConfig {
            learning_rate: self.learning_rate,
            max_iters: self.max_iters,
            convergence_tol: self.convergence_tol,
            tau: self.tau,
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpOptions {
    pub hidden: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub clip_norm: f64,
    pub lambda: f64,
    pub embedding_dim: usize,
}

impl Default for MlpOptions {
    fn default() -> Self {
        let d = crate::weight_opt::MlpTrainConfig::default();
        MlpOptions {
            hidden: d.hidden,
            learning_rate: d.learning_rate,
            epochs: d.epochs,
            batch_size: d.batch_size,
            clip_norm: d.clip_norm,
            lambda: d.lambda,
            embedding_dim: d.embedding_dim,
        }
    }
}

impl MlpOptions {
    pub fn to_train_config(&self, seed: u64) -> crate::weight_opt::MlpTrainConfig {
        crate::weight_opt::MlpTrainConfig {
            hidden: self.hidden,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            clip_norm: self.clip_norm,
            lambda: self.lambda,
            seed,
            embedding_dim: self.embedding_dim,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
        }
    }
}

impl OutputConfig {
    pub fn manifest_path(&self) -> PathBuf {
        self.dir.join("manifest.json")
    }
    pub fn cache_path(&self) -> PathBuf {
        self.dir.join("cache.jsonl")
    }
    pub fn linear_weights_path(&self) -> PathBuf {
        self.dir.join("linear_weights.json")
    }
    pub fn mlp_model_path(&self) -> PathBuf {
        self.dir.join("mlp_model.json")
    }
    pub fn train_log_path(&self) -> PathBuf {
        self.dir.join("mlp_train_log.csv")
    }
    pub fn frozen_config_path(&self) -> PathBuf {
        self.dir.join("resolved_config.toml")
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.apply_env_overrides();
        config.validate()?;
        Ok(config)
    }

    /// Secrets and endpoint overrides come from the environment, never the file.
    pub fn apply_env_overrides(&mut self) {
        if let Ok(key) = std::env::var(API_KEY_ENV) {
            if !key.is_empty() {
                self.extraction.api_key = Some(key.clone());
                self.judge.api_key = Some(key);
            }
        }
        if let Ok(url) = std::env::var(BASE_URL_ENV) {
            if !url.is_empty() {
                self.extraction.base_url = url.clone();
                self.judge.base_url = url;
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.run.parsed_methods()?;
        if !(0.0..=1.0).contains(&self.run.threshold) {
            return Err(Error::Config(format!(
                "threshold must be in [0,1], got {}",
                self.run.threshold
            )));
        }
        if !(0.0 < self.run.cap && self.run.cap <= 1.0) {
            return Err(Error::Config(format!(
                "cap must be in (0,1], got {}",
                self.run.cap
            )));
        }
        if self.run.bins == 0 {
            return Err(Error::Config("bins must be >= 1".into()));
        }
        for block in [&self.extraction, &self.judge] {
            if block.kind == BackendKind::Http && block.base_url.is_empty() {
                return Err(Error::Config(
                    "http backend requires base_url (config or environment override)".into(),
                ));
            }
        }
        Ok(())
    }

    /// Write the resolved configuration (sans secrets) beside the outputs.
    pub fn write_frozen(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("serialize config: {e}")))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
