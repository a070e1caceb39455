//! Experiment configuration: a sectioned TOML file mapped onto serde
//! structs with every default filled in, so the effective configuration can
//! be snapshotted into run metadata verbatim.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::llm::RequestDefaults;
use crate::pipeline::PipelineError;
use crate::reader::ReaderStrategy;
use crate::rerank::RerankMethod;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preparator {
    Hints,
    Bm25,
    Generated,
}

impl std::fmt::Display for Preparator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Preparator::Hints => "Hints",
            Preparator::Bm25 => "BM25",
            Preparator::Generated => "Generated",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    ExactMatch,
    LlmJudge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateSourceKind {
    FromFile,
    LlmGenerated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClientBackend {
    Mock,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingBackend {
    Hash,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionSetting {
    /// Zero-shot keeps the whole reply, few-shot takes the first line.
    Default,
    FullText,
    FirstLine,
}

fn default_k_hints() -> u32 {
    10
}
fn default_n_hints_generate() -> u32 {
    10
}
fn default_n_candidates() -> u32 {
    10
}
fn default_concurrency() -> usize {
    4
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("runs/latest")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSection {
    pub dataset: PathBuf,
    /// Renames canonical dataset fields to the source file's names, for
    /// importing externally released files: `{id = "qid", ...}`.
    #[serde(default)]
    pub field_map: std::collections::BTreeMap<String, String>,
    pub preparator: Preparator,
    #[serde(default = "default_rerank")]
    pub rerank: RerankMethod,
    #[serde(default = "default_k_hints")]
    pub k_hints: u32,
    #[serde(default = "default_n_hints_generate")]
    pub n_hints_generate: u32,
    #[serde(default = "default_oracle")]
    pub oracle: OracleKind,
    #[serde(default)]
    pub candidate_source: Option<CandidateSourceKind>,
    #[serde(default = "default_n_candidates")]
    pub n_candidates: u32,
    #[serde(default)]
    pub method_label: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub corpus: Option<PathBuf>,
}

fn default_rerank() -> RerankMethod {
    RerankMethod::Default
}
fn default_oracle() -> OracleKind {
    OracleKind::ExactMatch
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ReaderSection {
    pub strategy: ReaderStrategy,
    pub exemplars: Option<PathBuf>,
    pub extraction: ExtractionSetting,
}

impl Default for ReaderSection {
    fn default() -> Self {
        ReaderSection {
            strategy: ReaderStrategy::ZeroShot,
            exemplars: None,
            extraction: ExtractionSetting::Default,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ClientSection {
    pub backend: ClientBackend,
    pub mock_script: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub api_key_env: Option<String>,
    pub cache_dir: Option<PathBuf>,
    pub offline: bool,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub timeout_secs: u64,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for ClientSection {
    fn default() -> Self {
        ClientSection {
            backend: ClientBackend::Mock,
            mock_script: None,
            endpoint: None,
            api_key_env: None,
            cache_dir: None,
            offline: false,
            max_retries: 3,
            backoff_ms: 250,
            timeout_secs: 60,
            model: "default".to_string(),
            temperature: 0.0,
            max_tokens: 256,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsSection {
    pub accuracy: bool,
    pub semantic: bool,
    pub embedding_backend: EmbeddingBackend,
    pub embedding_endpoint: Option<String>,
    pub embedding_dim: usize,
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection {
            accuracy: false,
            semantic: false,
            embedding_backend: EmbeddingBackend::Hash,
            embedding_endpoint: None,
            embedding_dim: 64,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ScorerSection {
    pub endpoint: Option<String>,
}

/// The whole experiment configuration; one TOML section per stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub reader: ReaderSection,
    #[serde(default)]
    pub client: ClientSection,
    #[serde(default)]
    pub metrics: MetricsSection,
    #[serde(default)]
    pub scorer: ScorerSection,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| PipelineError::Config(format!("bad config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_path(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| {
            PipelineError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let exp = &self.experiment;
        if exp.k_hints == 0 {
            return Err(PipelineError::Config("k_hints must be at least 1".into()));
        }
        if exp.concurrency == 0 {
            return Err(PipelineError::Config(
                "concurrency must be at least 1".into(),
            ));
        }
        if exp.preparator == Preparator::Hints
            && exp.rerank == RerankMethod::Convergence
            && exp.candidate_source.is_none()
        {
            return Err(PipelineError::Config(
                "hint preparation with convergence reranking requires a candidate source".into(),
            ));
        }
        if exp.preparator == Preparator::Bm25 && exp.corpus.is_none() {
            return Err(PipelineError::Config(
                "the bm25 preparator requires a corpus path".into(),
            ));
        }
        if exp.rerank == RerankMethod::ExternalScore && self.scorer.endpoint.is_none() {
            return Err(PipelineError::Config(
                "external-score reranking requires a scorer endpoint".into(),
            ));
        }
        if self.reader.strategy == ReaderStrategy::FewShot && self.reader.exemplars.is_none() {
            return Err(PipelineError::Config(
                "few-shot reading requires an exemplars file".into(),
            ));
        }
        if self.client.backend == ClientBackend::Mock
            && self.client.mock_script.is_none()
            && !self.client.offline
        {
            return Err(PipelineError::Config(
                "the mock backend requires a mock_script (or offline mode with a warm cache)"
                    .into(),
            ));
        }
        if self.client.backend == ClientBackend::Http && self.client.endpoint.is_none() {
            return Err(PipelineError::Config(
                "the http backend requires an endpoint".into(),
            ));
        }
        Ok(())
    }

    /// Request defaults shared by every call of the run; the configured
    /// seed is forwarded to backends that honor it.
    pub fn request_defaults(&self) -> RequestDefaults {
        RequestDefaults {
            model: self.client.model.clone(),
            temperature: self.client.temperature,
            max_tokens: self.client.max_tokens,
            seed: Some(self.experiment.seed),
        }
    }

    /// Display label for the method column.
    pub fn method_label(&self) -> String {
        self.experiment
            .method_label
            .clone()
            .unwrap_or_else(|| self.experiment.preparator.to_string())
    }

    /// Effective configuration (all defaults filled) for run metadata.
    pub fn snapshot(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [experiment]
        dataset = "data/questions.jsonl"
        preparator = "hints"

        [client]
        mock_script = "script.json"
    "#;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.experiment.k_hints, 10);
        assert_eq!(cfg.experiment.concurrency, 4);
        assert_eq!(cfg.experiment.rerank, RerankMethod::Default);
        assert_eq!(cfg.client.max_retries, 3);
        assert_eq!(cfg.client.temperature, 0.0);
        assert!(!cfg.metrics.accuracy);
        assert_eq!(cfg.method_label(), "Hints");
        let snapshot = cfg.snapshot();
        assert_eq!(snapshot["experiment"]["k_hints"], 10);
        assert_eq!(snapshot["client"]["max_tokens"], 256);
    }

    #[test]
    fn convergence_without_candidates_is_rejected() {
        let text = r#"
            [experiment]
            dataset = "d.jsonl"
            preparator = "hints"
            rerank = "convergence"

            [client]
            mock_script = "s.json"
        "#;
        let err = ExperimentConfig::from_toml_str(text).unwrap_err();
        assert!(err.to_string().contains("candidate source"), "{err}");
    }

    #[test]
    fn bm25_without_corpus_is_rejected() {
        let text = r#"
            [experiment]
            dataset = "d.jsonl"
            preparator = "bm25"

            [client]
            mock_script = "s.json"
        "#;
        assert!(ExperimentConfig::from_toml_str(text).is_err());
    }

    #[test]
    fn few_shot_requires_exemplars() {
        let text = r#"
            [experiment]
            dataset = "d.jsonl"
            preparator = "hints"

            [reader]
            strategy = "few_shot"

            [client]
            mock_script = "s.json"
        "#;
        assert!(ExperimentConfig::from_toml_str(text).is_err());
    }

    #[test]
    fn field_map_parses_as_an_inline_table() {
        let text = r#"
            [experiment]
            dataset = "released.jsonl"
            field_map = { id = "qid", question = "query" }
            preparator = "hints"

            [client]
            mock_script = "s.json"
        "#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.experiment.field_map["id"], "qid");
        assert_eq!(cfg.experiment.field_map["question"], "query");
    }

    #[test]
    fn defaults_flow_into_request_defaults() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        let defaults = cfg.request_defaults();
        assert_eq!(defaults.temperature, 0.0);
        assert_eq!(defaults.max_tokens, 256);
        assert_eq!(defaults.seed, Some(0));
    }
}
