use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genimpute::RemoteConfig;
use crate::impute::{ImputerName, IterativeConfig, KnnConfig};
use crate::recsys::{RankingProtocol, RecModelConfig, Task};
use crate::table::{default_missing_tokens, SplitSpec};

/// Environment variable naming the remote completion server; the
/// `llm_endpoint` config key takes precedence.
pub const ENDPOINT_ENV: &str = "IMPUTEBENCH_LLM_ENDPOINT";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentTask {
    SingleClassification,
    MultiClassification,
    Regression,
}

impl ExperimentTask {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentTask::SingleClassification => "single_classification",
            ExperimentTask::MultiClassification => "multi_classification",
            ExperimentTask::Regression => "regression",
        }
    }

    pub fn model_task(self) -> Task {
        match self {
            ExperimentTask::SingleClassification => Task::BinaryClick,
            ExperimentTask::MultiClassification => Task::TopKRanking,
            ExperimentTask::Regression => Task::RatingRegression,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LlmBackendKind {
    Local,
    Remote,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub injection: u64,
    pub split: u64,
    pub training: u64,
    pub ranking: u64,
}

impl Seeds {
    pub fn all(seed: u64) -> Self {
        Seeds {
            injection: seed,
            split: seed,
            training: seed,
            ranking: seed,
        }
    }
}

fn d_missing_p() -> f64 {
    0.05
}
fn d_imputers() -> Vec<String> {
    ImputerName::ALL
        .iter()
        .map(|n| n.as_str().to_string())
        .collect()
}
fn d_knn_k() -> usize {
    5
}
fn d_true() -> bool {
    true
}
fn d_iter_max() -> usize {
    10
}
fn d_iter_tol() -> f64 {
    1e-3
}
fn d_iter_ridge() -> f64 {
    1e-3
}
fn d_backend() -> LlmBackendKind {
    LlmBackendKind::Local
}
fn d_in_flight() -> usize {
    4
}
fn d_llm_epochs() -> u32 {
    3
}
fn d_rank() -> u32 {
    8
}
fn d_emb() -> usize {
    16
}
fn d_hidden() -> Vec<usize> {
    vec![64, 32]
}
fn d_lr() -> f64 {
    1e-3
}
fn d_epochs() -> usize {
    5
}
fn d_batch() -> usize {
    256
}
fn d_negatives() -> usize {
    99
}
fn d_k_values() -> Vec<usize> {
    vec![3, 5, 10]
}
fn d_holdout() -> f64 {
    0.2
}
fn d_train_neg() -> usize {
    1
}
fn d_threshold() -> f64 {
    0.5
}
fn d_seed_injection() -> u64 {
    0
}
fn d_seed_split() -> u64 {
    1
}
fn d_seed_training() -> u64 {
    2
}
fn d_seed_ranking() -> u64 {
    3
}

/// Experiment description, read from a flat TOML file. Unknown keys are
/// rejected. Relative paths resolve against the config file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub schema: PathBuf,
    pub task: ExperimentTask,
    /// Click indicator or rating column.
    pub label: String,
    #[serde(default)]
    pub missing_tokens: Option<Vec<String>>,
    #[serde(default)]
    pub drop_columns: Vec<String>,

    #[serde(default = "d_missing_p")]
    pub missing_p: f64,
    /// Columns to inject into; default: every non-Identifier column.
    #[serde(default)]
    pub inject_columns: Option<Vec<String>>,
    #[serde(default)]
    pub inject_identifiers: bool,

    #[serde(default = "d_imputers")]
    pub imputers: Vec<String>,
    #[serde(default = "d_knn_k")]
    pub knn_k: usize,
    #[serde(default = "d_true")]
    pub knn_standardize: bool,
    #[serde(default = "d_iter_max")]
    pub iterative_max_iters: usize,
    #[serde(default = "d_iter_tol")]
    pub iterative_tol: f64,
    #[serde(default = "d_iter_ridge")]
    pub iterative_ridge: f64,
    #[serde(default = "d_backend")]
    pub llm_backend: LlmBackendKind,
    #[serde(default)]
    pub llm_endpoint: Option<String>,
    #[serde(default)]
    pub llm_temperature: f64,
    #[serde(default = "d_in_flight")]
    pub llm_max_in_flight: usize,
    #[serde(default = "d_llm_epochs")]
    pub llm_epochs: u32,
    #[serde(default = "d_rank")]
    pub llm_adapter_rank: u32,

    #[serde(default = "d_emb")]
    pub embedding_dim: usize,
    #[serde(default = "d_hidden")]
    pub hidden_layers: Vec<usize>,
    #[serde(default = "d_lr")]
    pub learning_rate: f64,
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_threshold")]
    pub threshold: f64,

    #[serde(default = "d_negatives")]
    pub n_negatives: usize,
    #[serde(default = "d_k_values")]
    pub k_values: Vec<usize>,
    #[serde(default = "d_holdout")]
    pub holdout_frac: f64,
    #[serde(default = "d_train_neg")]
    pub train_negatives: usize,
    #[serde(default)]
    pub user_column: Option<String>,
    #[serde(default)]
    pub item_column: Option<String>,
    #[serde(default)]
    pub timestamp_column: Option<String>,

    #[serde(default = "d_seed_injection")]
    pub seed_injection: u64,
    #[serde(default = "d_seed_split")]
    pub seed_split: u64,
    #[serde(default = "d_seed_training")]
    pub seed_training: u64,
    #[serde(default = "d_seed_ranking")]
    pub seed_ranking: u64,

    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.resolve_paths(base_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml(&text, base).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.dataset);
        fix(&mut self.schema);
        if let Some(o) = &mut self.output_dir {
            fix(o);
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.imputer_names()?;
        if !(0.0..=1.0).contains(&self.missing_p) {
            return Err(Error::BadFraction(self.missing_p));
        }
        if self.knn_k == 0 {
            return Err(Error::Config("knn_k must be at least 1".into()));
        }
        self.rec_config().validate()?;
        if self.task == ExperimentTask::MultiClassification {
            self.ranking_protocol().validate()?;
            if self.user_column.is_none() || self.item_column.is_none() {
                return Err(Error::Config(
                    "multi_classification needs user_column and item_column".into(),
                ));
            }
        }
        if self.llm_backend == LlmBackendKind::Remote && self.endpoint().is_none() {
            return Err(Error::Config(format!(
                "llm_backend = \"remote\" needs llm_endpoint or ${ENDPOINT_ENV}"
            )));
        }
        Ok(())
    }

    /// Parsed imputer list, in config order.
    pub fn imputer_names(&self) -> Result<Vec<ImputerName>> {
        if self.imputers.is_empty() {
            return Err(Error::Config("imputers must not be empty".into()));
        }
        let names: Vec<ImputerName> = self
            .imputers
            .iter()
            .map(|s| s.parse())
            .collect::<Result<_>>()?;
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(Error::Config(format!("imputer `{n}` listed twice")));
            }
        }
        Ok(names)
    }

    pub fn missing_tokens(&self) -> Vec<String> {
        self.missing_tokens
            .clone()
            .unwrap_or_else(default_missing_tokens)
    }

    pub fn seeds(&self) -> Seeds {
        Seeds {
            injection: self.seed_injection,
            split: self.seed_split,
            training: self.seed_training,
            ranking: self.seed_ranking,
        }
    }

    /// Replace all four seeds.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed_injection = seed;
        self.seed_split = seed;
        self.seed_training = seed;
        self.seed_ranking = seed;
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec::standard(self.seed_split)
    }

    pub fn knn_config(&self) -> KnnConfig {
        KnnConfig {
            k: self.knn_k,
            standardize: self.knn_standardize,
        }
    }

    pub fn iterative_config(&self) -> IterativeConfig {
        IterativeConfig {
            max_iters: self.iterative_max_iters,
            tol: self.iterative_tol,
            ridge: self.iterative_ridge,
        }
    }

    pub fn rec_config(&self) -> RecModelConfig {
        RecModelConfig {
            embedding_dim: self.embedding_dim,
            hidden_layers: self.hidden_layers.clone(),
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed_training,
            task: self.task.model_task(),
            label: self.label.clone(),
        }
    }

    pub fn ranking_protocol(&self) -> RankingProtocol {
        RankingProtocol {
            n_negatives: self.n_negatives,
            k_values: self.k_values.clone(),
            holdout_frac: self.holdout_frac,
            train_negatives: self.train_negatives,
        }
    }

    pub fn endpoint(&self) -> Option<String> {
        self.llm_endpoint
            .clone()
            .or_else(|| std::env::var(ENDPOINT_ENV).ok().filter(|s| !s.is_empty()))
    }

    pub fn remote_config(&self) -> Result<RemoteConfig> {
        let endpoint = self
            .endpoint()
            .ok_or_else(|| Error::Config(format!("no llm_endpoint and ${ENDPOINT_ENV} unset")))?;
        let mut rc = RemoteConfig::new(endpoint);
        rc.epochs = self.llm_epochs;
        rc.adapter_rank = self.llm_adapter_rank;
        rc.seed = self.seed_training;
        Ok(rc)
    }
}
