//! End-to-end experiment execution.
//!
//! For each dataset question: obtain candidates (when configured), obtain
//! hints (dataset-supplied hints win over live generation), attach
//! convergence scores where the reranker needs them, rerank, assemble the
//! top-k context (or retrieve/generate one for the baselines), read out an
//! answer, and evaluate the whole run. Questions are processed with bounded
//! concurrency; per-question failures are recorded and scored zero instead
//! of aborting the run, so denominators stay comparable across methods.

mod config;

pub use config::{
    CandidateSourceKind, ClientBackend, ClientSection, EmbeddingBackend, ExperimentConfig,
    ExperimentSection, ExtractionSetting, MetricsSection, OracleKind, Preparator, ReaderSection,
    ScorerSection,
};

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use thiserror::Error;

use crate::baselines::{self, Bm25Index, Bm25Params};
use crate::data::{self, DataError, DatasetRecord, PassageStore, RunMeta};
use crate::hintgen::{self, HintGenConfig};
use crate::llm::{
    with_concurrency_limit, CacheMode, CachedClient, ChatClient, EmbeddingClient,
    HashEmbeddingClient, HttpChatClient, HttpEmbeddingClient, LlmError, MockChatClient,
    RequestDefaults, RetryPolicy,
};
use crate::metrics::{self, EvalConfig, MetricReport, MetricsError};
use crate::model::{
    CandidateSet, CandidateSource, Hint, Prediction, PreparedContext, Provenance, Question,
};
use crate::reader::{self, ReaderConfig, ReaderError};
use crate::rerank::{self, ExternalScorer, HttpExternalScorer, RerankMethod};
use crate::scoring::{self, ExactMatchOracle, LlmJudgeOracle, SupportOracle};

/// Prompt for LLM candidate generation. Placeholders: `{n}`, `{question}`.
pub const CANDIDATE_PROMPT_TEMPLATE: &str =
    "List {n} plausible short candidate answers to: {question}, one per line";

/// Pipeline stages used to tag per-question failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Candidates,
    Hints,
    Convergence,
    Rerank,
    Assemble,
    Retrieve,
    Generate,
    Read,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Stage::Candidates => "candidates",
            Stage::Hints => "hints",
            Stage::Convergence => "convergence",
            Stage::Rerank => "rerank",
            Stage::Assemble => "assemble",
            Stage::Retrieve => "retrieve",
            Stage::Generate => "generate",
            Stage::Read => "read",
        };
        f.write_str(name)
    }
}

/// A per-question failure tagged with the stage it happened in.
#[derive(Debug, Error)]
#[error("stage={stage} question={question_id}: {message}")]
pub struct StageError {
    pub stage: Stage,
    pub question_id: String,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("no candidates available for question `{id}`")]
    NoCandidates { id: String },
    #[error("analysis needs at least one record")]
    NoRecords,
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Reader(#[from] ReaderError),
    #[error(transparent)]
    Stage(#[from] StageError),
}

/// The model-call endpoints a run uses.
pub struct Clients {
    pub chat: Arc<dyn ChatClient>,
    pub embedder: Option<Arc<dyn EmbeddingClient>>,
    pub scorer: Option<Arc<dyn ExternalScorer>>,
}

/// Builds the client stack from configuration: backend, then optional
/// on-disk cache, then the in-flight concurrency limit.
pub fn build_clients(cfg: &ExperimentConfig) -> Result<Clients, PipelineError> {
    let base: Arc<dyn ChatClient> = match cfg.client.backend {
        ClientBackend::Mock => match &cfg.client.mock_script {
            Some(script) => Arc::new(MockChatClient::from_script_file(script)?),
            None => Arc::new(MockChatClient::new()),
        },
        ClientBackend::Http => {
            let endpoint =
                cfg.client.endpoint.as_deref().ok_or_else(|| {
                    PipelineError::Config("http backend needs an endpoint".into())
                })?;
            let mut client = HttpChatClient::new(endpoint)
                .with_timeout(std::time::Duration::from_secs(cfg.client.timeout_secs))
                .with_retry(RetryPolicy {
                    max_retries: cfg.client.max_retries,
                    base_backoff: std::time::Duration::from_millis(cfg.client.backoff_ms),
                    seed: cfg.experiment.seed,
                });
            if let Some(var) = &cfg.client.api_key_env {
                client = client.with_api_key_env(var)?;
            }
            Arc::new(client)
        }
    };

    let cached: Arc<dyn ChatClient> = match &cfg.client.cache_dir {
        Some(dir) => {
            let mode = if cfg.client.offline {
                CacheMode::Offline
            } else {
                CacheMode::ReadWrite
            };
            Arc::new(CachedClient::with_mode(base, dir, mode)?)
        }
        None if cfg.client.offline => {
            return Err(PipelineError::Config(
                "offline mode requires a cache_dir".into(),
            ))
        }
        None => base,
    };

    let chat: Arc<dyn ChatClient> =
        Arc::new(with_concurrency_limit(cached, cfg.experiment.concurrency)?);

    let embedder: Option<Arc<dyn EmbeddingClient>> = if cfg.metrics.semantic {
        Some(match cfg.metrics.embedding_backend {
            EmbeddingBackend::Hash => Arc::new(HashEmbeddingClient::new(cfg.metrics.embedding_dim)),
            EmbeddingBackend::Http => {
                let endpoint = cfg.metrics.embedding_endpoint.as_deref().ok_or_else(|| {
                    PipelineError::Config("http embedding backend needs an endpoint".into())
                })?;
                Arc::new(HttpEmbeddingClient::new(endpoint))
            }
        })
    } else {
        None
    };

    let scorer: Option<Arc<dyn ExternalScorer>> = cfg
        .scorer
        .endpoint
        .as_deref()
        .map(|endpoint| Arc::new(HttpExternalScorer::new(endpoint)) as Arc<dyn ExternalScorer>);

    Ok(Clients {
        chat,
        embedder,
        scorer,
    })
}

struct Bm25Resources {
    store: PassageStore,
    index: Bm25Index,
    params: Bm25Params,
}

/// Per-run state shared across questions: clients, the reader configuration
/// (exemplars loaded once), and the BM25 index when retrieval is on.
pub struct RunResources {
    pub clients: Clients,
    reader_cfg: ReaderConfig,
    bm25: Option<Bm25Resources>,
}

impl RunResources {
    pub fn prepare(cfg: &ExperimentConfig, clients: Clients) -> Result<Self, PipelineError> {
        let mut reader_cfg = match cfg.reader.strategy {
            crate::reader::ReaderStrategy::ZeroShot => ReaderConfig::zero_shot(),
            crate::reader::ReaderStrategy::FewShot => {
                let path = cfg.reader.exemplars.as_ref().ok_or_else(|| {
                    PipelineError::Config("few-shot reading requires an exemplars file".into())
                })?;
                ReaderConfig::few_shot(reader::load_exemplars(path)?)?
            }
        };
        match cfg.reader.extraction {
            ExtractionSetting::Default => {}
            ExtractionSetting::FullText => {
                reader_cfg = reader_cfg.with_extraction(crate::reader::Extraction::FullText)
            }
            ExtractionSetting::FirstLine => {
                reader_cfg = reader_cfg.with_extraction(crate::reader::Extraction::FirstLine)
            }
        }

        let bm25 = if cfg.experiment.preparator == Preparator::Bm25 {
            let corpus = cfg.experiment.corpus.as_ref().ok_or_else(|| {
                PipelineError::Config("the bm25 preparator requires a corpus path".into())
            })?;
            let store = data::load_corpus(corpus)?;
            let index = Bm25Index::build(&store);
            Some(Bm25Resources {
                store,
                index,
                params: Bm25Params::default(),
            })
        } else {
            None
        };

        Ok(RunResources {
            clients,
            reader_cfg,
            bm25,
        })
    }
}

/// Everything a question produced on its way through the pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuestionDiagnostics {
    pub question_id: String,
    pub candidates: Option<Vec<String>>,
    pub hints: Option<Vec<Hint>>,
    pub context: Option<Vec<String>>,
    pub raw_reader_output: Option<String>,
    pub error: Option<String>,
}

impl QuestionDiagnostics {
    fn empty(question_id: &str) -> Self {
        QuestionDiagnostics {
            question_id: question_id.to_string(),
            candidates: None,
            hints: None,
            context: None,
            raw_reader_output: None,
            error: None,
        }
    }
}

/// Resolves the candidate set: dataset-provided, or generated by the model
/// and deduplicated after normalization (first occurrence wins, order
/// preserved).
pub fn prepare_candidates(
    question: &Question,
    provided: Option<&CandidateSet>,
    kind: CandidateSourceKind,
    n: u32,
    defaults: &RequestDefaults,
    client: &dyn ChatClient,
) -> Result<CandidateSet, PipelineError> {
    match kind {
        CandidateSourceKind::FromFile => {
            provided
                .filter(|c| !c.is_empty())
                .cloned()
                .ok_or_else(|| PipelineError::NoCandidates {
                    id: question.id.clone(),
                })
        }
        CandidateSourceKind::LlmGenerated => {
            let prompt = CANDIDATE_PROMPT_TEMPLATE
                .replace("{n}", &n.to_string())
                .replace("{question}", &question.text);
            let response = client.complete(&defaults.user_request(prompt))?;
            let parsed = hintgen::parse_hints(&response.content).map_err(|_| {
                PipelineError::NoCandidates {
                    id: question.id.clone(),
                }
            })?;
            let mut seen = BTreeSet::new();
            let mut names = Vec::new();
            for hint in parsed {
                let key = metrics::normalize(&hint.text);
                if seen.insert(key) {
                    names.push(hint.text);
                }
            }
            if names.is_empty() {
                return Err(PipelineError::NoCandidates {
                    id: question.id.clone(),
                });
            }
            Ok(CandidateSet::new(names, CandidateSource::LlmGenerated)
                .expect("deduplicated candidates are distinct"))
        }
    }
}

fn make_oracle(
    kind: OracleKind,
    question: &Question,
    defaults: &RequestDefaults,
    clients: &Clients,
) -> Box<dyn SupportOracle> {
    match kind {
        OracleKind::ExactMatch => Box::new(ExactMatchOracle),
        OracleKind::LlmJudge => Box::new(LlmJudgeOracle::new(
            question.text.clone(),
            clients.chat.clone(),
            defaults.clone(),
        )),
    }
}

fn stage_err(stage: Stage, question_id: &str, err: impl std::fmt::Display) -> StageError {
    StageError {
        stage,
        question_id: question_id.to_string(),
        message: err.to_string(),
    }
}

/// Runs one question through the configured pipeline, returning the
/// prediction plus every intermediate for the diagnostics log.
pub fn run_question(
    record: &DatasetRecord,
    cfg: &ExperimentConfig,
    resources: &RunResources,
) -> Result<(Prediction, QuestionDiagnostics), StageError> {
    let question = &record.question;
    let id = question.id.as_str();
    let defaults = cfg.request_defaults();
    let clients = &resources.clients;
    let mut diag = QuestionDiagnostics::empty(id);

    let candidates = match cfg.experiment.candidate_source {
        Some(kind) => {
            let set = prepare_candidates(
                question,
                record.candidates.as_ref(),
                kind,
                cfg.experiment.n_candidates,
                &defaults,
                clients.chat.as_ref(),
            )
            .map_err(|e| stage_err(Stage::Candidates, id, e))?;
            diag.candidates = Some(set.candidates().to_vec());
            Some(set)
        }
        None => None,
    };

    let context = match cfg.experiment.preparator {
        Preparator::Hints => {
            let mut hints = match &record.hints {
                Some(hints) if !hints.is_empty() => hints.clone(),
                _ => {
                    let gen_cfg = HintGenConfig {
                        n_hints: cfg.experiment.n_hints_generate,
                        ..HintGenConfig::default()
                    };
                    hintgen::generate_hints(question, &gen_cfg, &defaults, clients.chat.as_ref())
                        .map_err(|e| stage_err(Stage::Hints, id, e))?
                }
            };

            if cfg.experiment.rerank == RerankMethod::Convergence
                && hints.iter().any(|h| h.convergence.is_none())
            {
                let cands = candidates.as_ref().ok_or_else(|| {
                    stage_err(Stage::Convergence, id, "no candidate source configured")
                })?;
                let oracle = make_oracle(cfg.experiment.oracle, question, &defaults, clients);
                hints = scoring::attach_convergence(hints, cands, oracle.as_ref())
                    .map_err(|e| stage_err(Stage::Convergence, id, e))?;
            }

            let hints = rerank::rerank(
                hints,
                cfg.experiment.rerank,
                &question.text,
                clients.scorer.as_deref(),
            )
            .map_err(|e| stage_err(Stage::Rerank, id, e))?;
            diag.hints = Some(hints.clone());

            rerank::assemble_context(&hints, cfg.experiment.k_hints as usize)
                .map_err(|e| stage_err(Stage::Assemble, id, e))?
        }
        Preparator::Bm25 => {
            let bm25 = resources
                .bm25
                .as_ref()
                .expect("bm25 resources prepared for bm25 preparator");
            let hits = baselines::bm25_retrieve(&question.text, &bm25.index, &bm25.params, 1)
                .map_err(|e| stage_err(Stage::Retrieve, id, e))?;
            let hit = hits
                .first()
                .ok_or_else(|| stage_err(Stage::Retrieve, id, "no passage matched the question"))?;
            let passage = bm25
                .store
                .get(&hit.doc_id)
                .expect("retrieved doc id exists in store");
            baselines::passage_to_context(passage).map_err(|e| stage_err(Stage::Retrieve, id, e))?
        }
        Preparator::Generated => {
            baselines::generate_context(question, &defaults, clients.chat.as_ref())
                .map_err(|e| stage_err(Stage::Generate, id, e))?
        }
    };
    diag.context = Some(context.sentences().to_vec());

    let prediction = reader::answer(
        &context,
        question,
        &resources.reader_cfg,
        &defaults,
        clients.chat.as_ref(),
    )
    .map_err(|e| stage_err(Stage::Read, id, e))?;
    diag.raw_reader_output = Some(prediction.raw_reader_output.clone());

    Ok((prediction, diag))
}

/// Applies `f` to every item with at most `limit` worker threads; results
/// keep item order.
fn map_concurrent<T, R, F>(items: &[T], limit: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = limit.max(1).min(items.len().max(1));
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::SeqCst);
                if index >= items.len() {
                    break;
                }
                let value = f(&items[index]);
                results.lock().expect("results lock")[index] = Some(value);
            });
        }
    });
    results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .map(|r| r.expect("every index filled"))
        .collect()
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), PipelineError> {
    let mut file = std::fs::File::create(path)
        .map_err(|e| PipelineError::Config(format!("cannot create {}: {e}", path.display())))?;
    for item in items {
        writeln!(
            file,
            "{}",
            serde_json::to_string(item).expect("diagnostics serialize")
        )
        .map_err(|e| PipelineError::Config(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

/// Every prompt template the pipeline can use, for the run metadata.
pub fn prompt_catalog() -> BTreeMap<String, String> {
    let reader_block = format!(
        "{}\nContext: {{context}}\nQuestion: {{question}}\nAnswer:",
        reader::READER_HEADER
    );
    [
        ("hint_generation", hintgen::HINT_PROMPT_TEMPLATE.to_string()),
        ("reader_block", reader_block),
        ("support_judge", scoring::SUPPORT_JUDGE_TEMPLATE.to_string()),
        (
            "accuracy_judge",
            metrics::ACCURACY_JUDGE_TEMPLATE.to_string(),
        ),
        (
            "context_generation",
            baselines::GENERATION_PROMPT_TEMPLATE.to_string(),
        ),
        (
            "candidate_generation",
            CANDIDATE_PROMPT_TEMPLATE.to_string(),
        ),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

fn run_meta(cfg: &ExperimentConfig) -> RunMeta {
    let is_hints = cfg.experiment.preparator == Preparator::Hints;
    RunMeta {
        method: cfg.method_label(),
        n_hints: is_hints.then_some(cfg.experiment.k_hints),
        ranking: is_hints.then(|| cfg.experiment.rerank.to_string()),
        config: cfg.snapshot(),
        versions: [(
            env!("CARGO_PKG_NAME").to_string(),
            env!("CARGO_PKG_VERSION").to_string(),
        )]
        .into(),
        prompts: prompt_catalog(),
        normalization_rules: metrics::NORMALIZATION_RULES.to_string(),
    }
}

/// Loads the dataset, builds the clients, and runs the experiment.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricReport, PipelineError> {
    cfg.validate()?;
    let clients = build_clients(cfg)?;
    let resources = RunResources::prepare(cfg, clients)?;
    run_experiment_with_resources(cfg, &resources)
}

/// Like [`run_experiment`] but with caller-supplied clients/resources, so
/// tests can observe mock call counts.
pub fn run_experiment_with_resources(
    cfg: &ExperimentConfig,
    resources: &RunResources,
) -> Result<MetricReport, PipelineError> {
    let field_map = data::FieldMap(cfg.experiment.field_map.clone());
    let records = data::load_dataset_with_map(&cfg.experiment.dataset, &field_map)?;

    let outcomes = map_concurrent(&records, cfg.experiment.concurrency, |record| {
        run_question(record, cfg, resources)
    });

    let mut predictions = Vec::with_capacity(records.len());
    let mut diagnostics = Vec::with_capacity(records.len());
    let mut failed: BTreeSet<String> = BTreeSet::new();
    for (record, outcome) in records.iter().zip(outcomes) {
        match outcome {
            Ok((prediction, diag)) => {
                predictions.push(prediction);
                diagnostics.push(diag);
            }
            Err(err) => {
                log::warn!("question failed: {err}");
                failed.insert(record.question.id.clone());
                predictions.push(Prediction {
                    question_id: record.question.id.clone(),
                    answer_text: String::new(),
                    raw_reader_output: String::new(),
                });
                let mut diag = QuestionDiagnostics::empty(&record.question.id);
                diag.error = Some(err.to_string());
                diagnostics.push(diag);
            }
        }
    }

    predictions.sort_by(|a, b| a.question_id.cmp(&b.question_id));
    diagnostics.sort_by(|a, b| a.question_id.cmp(&b.question_id));

    let pairs: Vec<(Question, crate::model::GoldAnswerSet)> = records
        .iter()
        .map(|r| (r.question.clone(), r.gold.clone()))
        .collect();

    let eval_cfg = EvalConfig {
        with_llm_accuracy: cfg.metrics.accuracy,
        with_semantic: cfg.metrics.semantic,
        force_zero: failed,
        defaults: cfg.request_defaults(),
    };
    let report = metrics::evaluate_run(
        &predictions,
        &pairs,
        &eval_cfg,
        Some(resources.clients.chat.as_ref()),
        resources.clients.embedder.as_deref(),
    )?;

    let out_dir = &cfg.experiment.output_dir;
    data::save_run(&report, &run_meta(cfg), out_dir)?;
    write_jsonl(&out_dir.join("predictions.jsonl"), &predictions)?;
    write_jsonl(&out_dir.join("diagnostics.jsonl"), &diagnostics)?;
    Ok(report)
}

/// Mean correctness of a bucket of questions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketStat {
    pub questions: usize,
    pub accuracy: f64,
}

/// Accuracy at the minimum and maximum total supported-entity count, per
/// context-sentence count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityBucketRow {
    pub sentence_count: usize,
    pub min_total: usize,
    pub max_total: usize,
    pub min_bucket: BucketStat,
    pub max_bucket: BucketStat,
}

/// Runs each record through the pipeline, profiles its context's supported
/// entities, and buckets correctness by sentence count and minimum/maximum
/// total entity count. Correctness is the Contains metric against gold.
pub fn figure3_analysis(
    records: &[DatasetRecord],
    cfg: &ExperimentConfig,
    resources: &RunResources,
) -> Result<Vec<EntityBucketRow>, PipelineError> {
    if records.is_empty() {
        return Err(PipelineError::NoRecords);
    }
    let defaults = cfg.request_defaults();

    struct Row {
        sentences: usize,
        total: usize,
        correct: bool,
    }
    let mut rows = Vec::with_capacity(records.len());
    for record in records {
        let (prediction, diag) = run_question(record, cfg, resources)?;
        let candidate_names = diag.candidates.ok_or_else(|| {
            PipelineError::Config("entity analysis requires a candidate source".into())
        })?;
        let candidates = CandidateSet::new(candidate_names, CandidateSource::Provided)
            .expect("candidates were validated upstream");
        let sentences = diag.context.expect("successful runs carry a context");
        let context = PreparedContext::new(sentences, Provenance::Hints)
            .expect("successful runs have non-empty contexts");
        let oracle = make_oracle(
            cfg.experiment.oracle,
            &record.question,
            &defaults,
            &resources.clients,
        );
        let profile = scoring::entity_count_profile(&context, &candidates, oracle.as_ref())
            .map_err(|e| stage_err(Stage::Convergence, &record.question.id, e))?;
        rows.push(Row {
            sentences: context.len(),
            total: profile.total,
            correct: metrics::contains(&prediction.answer_text, &record.gold) == 1,
        });
    }

    let mut by_count: BTreeMap<usize, Vec<&Row>> = BTreeMap::new();
    for row in &rows {
        by_count.entry(row.sentences).or_default().push(row);
    }

    let bucket = |group: &[&Row], target: usize| {
        let members: Vec<&&Row> = group.iter().filter(|r| r.total == target).collect();
        let correct = members.iter().filter(|r| r.correct).count();
        BucketStat {
            questions: members.len(),
            accuracy: correct as f64 / members.len() as f64,
        }
    };

    Ok(by_count
        .into_iter()
        .map(|(sentence_count, group)| {
            let min_total = group.iter().map(|r| r.total).min().expect("non-empty");
            let max_total = group.iter().map(|r| r.total).max().expect("non-empty");
            EntityBucketRow {
                sentence_count,
                min_total,
                max_total,
                min_bucket: bucket(&group, min_total),
                max_bucket: bucket(&group, max_total),
            }
        })
        .collect())
}
