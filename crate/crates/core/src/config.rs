//! Run configuration: datasets, model endpoints, strategies, sampling.
//!
//! A serialized copy is frozen into the run directory before execution and
//! later commands verify the active config matches it. API keys are named
//! by environment variable and never written into the frozen copy.

use crate::error::{Error, Result};
use crate::modelio::{ModelClient, RouteKind, SamplingConfig};
use crate::promptkit::{DemoOrder, StrategyKind};
use crate::runstore::{write_atomic, RunStore};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEndpoint {
    pub endpoint: String,
    pub route: RouteKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default = "default_true")]
    pub repetition_penalty: bool,
}

fn default_true() -> bool {
    true
}

impl ModelEndpoint {
    pub fn client(&self, model_id: &str) -> ModelClient {
        ModelClient::new(model_id, &self.endpoint, self.route)
            .with_api_key(resolve_key(self.api_key_env.as_deref()))
            .with_repetition_penalty_support(self.repetition_penalty)
    }
}

fn resolve_key(env_name: Option<&str>) -> Option<String> {
    env_name.and_then(|name| std::env::var(name).ok())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    pub model: String,
    pub endpoint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default = "default_query_task")]
    pub query_task_prompt: String,
    #[serde(default = "default_answer_task")]
    pub answer_task_prompt: String,
}

fn default_query_task() -> String {
    "Given a query, retrieve similar queries".to_string()
}

fn default_answer_task() -> String {
    "Given an answer, retrieve similar answers".to_string()
}

impl EmbeddingConfig {
    pub fn api_key(&self) -> Option<String> {
        resolve_key(self.api_key_env.as_deref())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeConfig {
    pub model: String,
    pub endpoint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default = "default_protocols")]
    pub protocols: Vec<String>,
    /// Reference model for pair protocols (missingness, structural).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_model: Option<String>,
}

fn default_protocols() -> Vec<String> {
    vec!["quality".to_string()]
}

impl JudgeConfig {
    pub fn api_key(&self) -> Option<String> {
        resolve_key(self.api_key_env.as_deref())
    }
}

/// What to sample: one model on one dataset under one strategy.
/// Strategy `direct` sends the bare query over the model's native route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub dataset: String,
    pub model: String,
    pub strategy: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teacher: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JobStrategy {
    Direct,
    Phi(StrategyKind),
}

impl Job {
    pub fn parsed_strategy(&self) -> Result<JobStrategy> {
        if self.strategy == "direct" {
            return Ok(JobStrategy::Direct);
        }
        Ok(JobStrategy::Phi(StrategyKind::from_str(&self.strategy)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateConfig {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub demo_seed: u64,
    #[serde(default)]
    pub knn_order: DemoOrder,
}

fn default_k() -> usize {
    3
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            k: 3,
            demo_seed: 0,
            knn_order: DemoOrder::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    #[serde(default)]
    pub reference_models: Vec<String>,
    #[serde(default = "default_figure4_bins")]
    pub figure4_bins: usize,
    /// Which sample of the reference model anchors cross-model similarity.
    #[serde(default)]
    pub reference_sample_index: u32,
}

fn default_figure4_bins() -> usize {
    20
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            reference_models: Vec::new(),
            figure4_bins: 20,
            reference_sample_index: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default = "default_runs_dir")]
    pub runs_dir: String,
    #[serde(default = "default_cache_dir")]
    pub cache_dir: String,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    /// Dataset name -> line-delimited question file.
    pub datasets: BTreeMap<String, String>,
    #[serde(default = "SamplingConfig::default")]
    pub sampling: SamplingConfig,
    pub models: BTreeMap<String, ModelEndpoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<EmbeddingConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge: Option<JudgeConfig>,
    #[serde(default)]
    pub generate: GenerateConfig,
    #[serde(default)]
    pub report: ReportConfig,
    #[serde(default)]
    pub jobs: Vec<Job>,
}

fn default_runs_dir() -> String {
    "runs".to_string()
}

fn default_cache_dir() -> String {
    "cache".to_string()
}

fn default_concurrency() -> usize {
    4
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: RunConfig =
            toml::from_str(&raw).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        for job in &self.jobs {
            let strategy = job.parsed_strategy()?;
            if !self.models.contains_key(&job.model) {
                return Err(Error::Config(format!(
                    "job references unknown model {:?}",
                    job.model
                )));
            }
            if !self.datasets.contains_key(&job.dataset) {
                return Err(Error::Config(format!(
                    "job references unknown dataset {:?}",
                    job.dataset
                )));
            }
            if let JobStrategy::Phi(kind) = strategy {
                if kind.uses_teacher() {
                    let teacher = job.teacher.as_ref().ok_or_else(|| {
                        Error::Config(format!(
                            "strategy {} needs a teacher model",
                            kind.as_str()
                        ))
                    })?;
                    if !self.models.contains_key(teacher) {
                        return Err(Error::Config(format!(
                            "job references unknown teacher {teacher:?}"
                        )));
                    }
                }
                let needs_embedding = matches!(
                    kind,
                    StrategyKind::KnnTeacher | StrategyKind::OracleKnnTeacher
                );
                if needs_embedding && self.embedding.is_none() {
                    return Err(Error::Config(format!(
                        "strategy {} needs an [embedding] section",
                        kind.as_str()
                    )));
                }
                if kind == StrategyKind::UrialSummary && self.judge.is_none() {
                    return Err(Error::Config(
                        "strategy urial_summary needs a [judge] section for summaries".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    fn canonical(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Write the frozen copy, or verify it matches when already present.
    pub fn freeze_into(&self, store: &RunStore) -> Result<()> {
        let path = store.config_path();
        let canonical = self.canonical()?;
        match std::fs::read_to_string(&path) {
            Ok(existing) => {
                let frozen: RunConfig = toml::from_str(&existing)
                    .map_err(|e| Error::Config(format!("frozen config unreadable: {e}")))?;
                if frozen.canonical()? != canonical {
                    return Err(Error::Config(format!(
                        "config differs from the frozen copy at {}; use a new --run-id",
                        path.display()
                    )));
                }
                Ok(())
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                write_atomic(&path, canonical.as_bytes())
            }
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_toml() -> String {
        r#"
[datasets]
conflictingqa = "data/conflictingqa.jsonl"

[models.base]
endpoint = "http://127.0.0.1:1/v1"
route = "completion"

[models.chat]
endpoint = "http://127.0.0.1:1/v1"
route = "chat"

[[jobs]]
dataset = "conflictingqa"
model = "base"
strategy = "zero_shot"
"#
        .to_string()
    }

    #[test]
    fn minimal_config_parses_with_defaults() {
        let config: RunConfig = toml::from_str(&minimal_toml()).unwrap();
        config.validate().unwrap();
        assert_eq!(config.sampling.num_samples, 5);
        assert_eq!(config.concurrency, 4);
        assert_eq!(config.generate.k, 3);
    }

    #[test]
    fn teacher_strategy_without_teacher_rejected() {
        let mut toml_text = minimal_toml();
        toml_text.push_str(
            "\n[[jobs]]\ndataset = \"conflictingqa\"\nmodel = \"base\"\nstrategy = \"knn_teacher\"\n",
        );
        let config: RunConfig = toml::from_str(&toml_text).unwrap();
        assert!(config.validate().is_err());
    }

    #[test]
    fn freeze_detects_drift() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::open(dir.path(), "r").unwrap();
        let mut config: RunConfig = toml::from_str(&minimal_toml()).unwrap();
        config.freeze_into(&store).unwrap();
        config.freeze_into(&store).unwrap();
        config.sampling.temperature = 0.9;
        assert!(config.freeze_into(&store).is_err());
    }
}
