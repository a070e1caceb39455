//! The evaluation suite: answer normalization, Exact Match, token-overlap
//! precision/recall/F1, Contains, LLM-judged accuracy, a pluggable
//! embedding-cosine similarity, and whole-run aggregation.
//!
//! Normalization follows the open-domain QA convention: lowercase, strip
//! punctuation, drop the articles a/an/the as whole tokens, collapse
//! whitespace. Every metric takes the max over gold aliases.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use thiserror::Error;

use crate::llm::{parse_yes_no, ChatClient, EmbeddingClient, LlmError, RequestDefaults};
use crate::model::{EvalRecord, GoldAnswerSet, Prediction, Question};

pub const ACC: &str = "ACC";
pub const EM: &str = "EM";
pub const F1: &str = "F1";
pub const PR: &str = "PR";
pub const RC: &str = "RC";
pub const CON: &str = "CON";
pub const SEMSIM: &str = "SEMSIM";

/// Display order for metric columns in reports.
pub const METRIC_ORDER: [&str; 7] = [ACC, EM, F1, PR, RC, CON, SEMSIM];

/// Human-readable statement of the normalization rules, recorded in run
/// metadata so results are self-describing.
pub const NORMALIZATION_RULES: &str =
    "lowercase; delete punctuation characters (ASCII punctuation \
plus common typographic quotes/dashes/ellipsis); remove the articles a/an/the as whole tokens; \
collapse whitespace";

/// Prompt sent to the judge model by [`llm_accuracy`]. Placeholders:
/// `{question}`, `{gold}`, `{prediction}`.
pub const ACCURACY_JUDGE_TEMPLATE: &str = "Question: {question}\nGold answers: {gold}\n\
Candidate answer: {prediction}\nIs the candidate correct? Answer yes or no.";

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("prediction references unknown question id `{id}`")]
    UnknownQuestionId { id: String },
    #[error("duplicate prediction for question id `{id}`")]
    DuplicatePrediction { id: String },
    #[error("no predictions to evaluate")]
    EmptyRun,
    #[error("accuracy metric enabled but no chat client configured")]
    MissingJudgeClient,
    #[error("judge call failed: {0}")]
    Client(#[from] LlmError),
    #[error("embedder error: {0}")]
    Embedder(String),
}

const EXTRA_PUNCT: [char; 13] = [
    '\u{2018}', '\u{2019}', '\u{201A}', '\u{201C}', '\u{201D}', '\u{201E}', '\u{2013}', '\u{2014}',
    '\u{2026}', '\u{00BF}', '\u{00A1}', '\u{00AB}', '\u{00BB}',
];

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation() || EXTRA_PUNCT.contains(&c)
}

/// Lowercase, delete punctuation, drop whole-token articles, collapse
/// whitespace. Idempotent.
pub fn normalize(text: &str) -> String {
    let lower = text.to_lowercase();
    let stripped: String = lower.chars().filter(|c| !is_punct(*c)).collect();
    stripped
        .split_whitespace()
        .filter(|tok| !matches!(*tok, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn tokens(text: &str) -> Vec<String> {
    normalize(text)
        .split_whitespace()
        .map(|t| t.to_string())
        .collect()
}

/// 1 iff the normalized prediction equals some normalized gold alias.
pub fn exact_match(prediction: &str, gold: &GoldAnswerSet) -> u8 {
    let pred = normalize(prediction);
    gold.aliases().iter().any(|alias| normalize(alias) == pred) as u8
}

/// Token-overlap precision/recall/F1 against the best-matching alias.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenPrf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn prf_one(pred: &[String], gold: &[String]) -> TokenPrf {
    if pred.is_empty() && gold.is_empty() {
        return TokenPrf {
            precision: 1.0,
            recall: 1.0,
            f1: 1.0,
        };
    }
    if pred.is_empty() || gold.is_empty() {
        return TokenPrf {
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
        };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for tok in gold {
        *counts.entry(tok.as_str()).or_insert(0) += 1;
    }
    let mut common = 0usize;
    for tok in pred {
        if let Some(n) = counts.get_mut(tok.as_str()) {
            if *n > 0 {
                *n -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return TokenPrf {
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
        };
    }
    let precision = common as f64 / pred.len() as f64;
    let recall = common as f64 / gold.len() as f64;
    TokenPrf {
        precision,
        recall,
        f1: 2.0 * precision * recall / (precision + recall),
    }
}

/// Multiset token overlap. The alias with the best F1 is selected (first
/// alias wins ties) and its precision and recall are reported.
pub fn token_prf(prediction: &str, gold: &GoldAnswerSet) -> TokenPrf {
    let pred_tokens = tokens(prediction);
    let mut best: Option<TokenPrf> = None;
    for alias in gold.aliases() {
        let prf = prf_one(&pred_tokens, &tokens(alias));
        if best.is_none_or(|b| prf.f1 > b.f1) {
            best = Some(prf);
        }
    }
    best.unwrap_or(TokenPrf {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    })
}

/// 1 iff some normalized alias occurs as a contiguous token subsequence of
/// the normalized prediction. An alias that normalizes to nothing is
/// trivially contained.
pub fn contains(prediction: &str, gold: &GoldAnswerSet) -> u8 {
    let hay = tokens(prediction);
    for alias in gold.aliases() {
        let needle = tokens(alias);
        if needle.is_empty() {
            return 1;
        }
        if needle.len() > hay.len() {
            continue;
        }
        if hay.windows(needle.len()).any(|w| w == needle.as_slice()) {
            return 1;
        }
    }
    0
}

/// Asks the judge model whether the prediction answers the question;
/// a reply that cannot be read as yes/no counts as incorrect.
pub fn llm_accuracy(
    prediction: &str,
    question: &Question,
    gold: &GoldAnswerSet,
    defaults: &RequestDefaults,
    client: &dyn ChatClient,
) -> Result<u8, MetricsError> {
    let prompt = ACCURACY_JUDGE_TEMPLATE
        .replace("{question}", &question.text)
        .replace("{gold}", &gold.aliases().join(", "))
        .replace("{prediction}", prediction);
    let response = client.complete(&defaults.user_request(prompt))?;
    match parse_yes_no(&response.content) {
        Some(verdict) => Ok(verdict as u8),
        None => {
            log::warn!(
                "judge reply for question `{}` is not a yes/no answer: {:?}",
                question.id,
                response.content.chars().take(80).collect::<String>()
            );
            Ok(0)
        }
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

/// Max over aliases of the embedding cosine between prediction and alias,
/// rescaled from [-1,1] to [0,1].
pub fn semantic_similarity(
    prediction: &str,
    gold: &GoldAnswerSet,
    embedder: &dyn EmbeddingClient,
) -> Result<f64, MetricsError> {
    let mut texts = vec![prediction.to_string()];
    texts.extend(gold.aliases().iter().cloned());
    let vectors = embedder
        .embed(&texts)
        .map_err(|e| MetricsError::Embedder(e.to_string()))?;
    if vectors.len() != texts.len() {
        return Err(MetricsError::Embedder(format!(
            "expected {} vectors, got {}",
            texts.len(),
            vectors.len()
        )));
    }
    let pred_vec = &vectors[0];
    let best = vectors[1..]
        .iter()
        .map(|alias_vec| (cosine(pred_vec, alias_vec) + 1.0) / 2.0)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(best.clamp(0.0, 1.0))
}

/// Options for [`evaluate_run`]. Question ids in `force_zero` (failed
/// pipeline stages) receive 0 on every enabled metric without any model
/// calls, so they stay in the aggregate denominators.
#[derive(Debug, Clone, Default)]
pub struct EvalConfig {
    pub with_llm_accuracy: bool,
    pub with_semantic: bool,
    pub force_zero: BTreeSet<String>,
    pub defaults: RequestDefaults,
}

/// Per-question records plus aggregate means (percent, two decimals,
/// half-up).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub records: Vec<EvalRecord>,
    pub aggregates: BTreeMap<String, f64>,
}

fn round2(value: f64) -> f64 {
    (value * 100.0).round() / 100.0
}

/// Scores every prediction against its gold answers and aggregates.
///
/// The semantic metric is skipped (absent from records and aggregates)
/// when no embedder is configured; the accuracy metric requires a chat
/// client when enabled.
pub fn evaluate_run(
    predictions: &[Prediction],
    dataset: &[(Question, GoldAnswerSet)],
    cfg: &EvalConfig,
    chat: Option<&dyn ChatClient>,
    embedder: Option<&dyn EmbeddingClient>,
) -> Result<MetricReport, MetricsError> {
    if predictions.is_empty() {
        return Err(MetricsError::EmptyRun);
    }
    if cfg.with_llm_accuracy && chat.is_none() {
        return Err(MetricsError::MissingJudgeClient);
    }
    let with_semantic = cfg.with_semantic && embedder.is_some();

    let by_id: HashMap<&str, (&Question, &GoldAnswerSet)> = dataset
        .iter()
        .map(|(q, g)| (q.id.as_str(), (q, g)))
        .collect();

    let mut enabled: Vec<&str> = Vec::new();
    if cfg.with_llm_accuracy {
        enabled.push(ACC);
    }
    enabled.extend([EM, F1, PR, RC, CON]);
    if with_semantic {
        enabled.push(SEMSIM);
    }

    let mut seen: BTreeSet<&str> = BTreeSet::new();
    let mut records = Vec::with_capacity(predictions.len());
    for pred in predictions {
        let id = pred.question_id.as_str();
        if !seen.insert(id) {
            return Err(MetricsError::DuplicatePrediction { id: id.to_string() });
        }
        let (question, gold) = by_id
            .get(id)
            .ok_or_else(|| MetricsError::UnknownQuestionId { id: id.to_string() })?;

        let mut values: BTreeMap<String, f64> = BTreeMap::new();
        if cfg.force_zero.contains(id) {
            for name in &enabled {
                values.insert(name.to_string(), 0.0);
            }
        } else {
            if cfg.with_llm_accuracy {
                let acc = llm_accuracy(
                    &pred.answer_text,
                    question,
                    gold,
                    &cfg.defaults,
                    chat.expect("checked above"),
                )?;
                values.insert(ACC.to_string(), acc as f64);
            }
            values.insert(EM.to_string(), exact_match(&pred.answer_text, gold) as f64);
            let prf = token_prf(&pred.answer_text, gold);
            values.insert(F1.to_string(), prf.f1);
            values.insert(PR.to_string(), prf.precision);
            values.insert(RC.to_string(), prf.recall);
            values.insert(CON.to_string(), contains(&pred.answer_text, gold) as f64);
            if with_semantic {
                let sim =
                    semantic_similarity(&pred.answer_text, gold, embedder.expect("checked above"))?;
                values.insert(SEMSIM.to_string(), sim);
            }
        }
        records.push(EvalRecord {
            question_id: id.to_string(),
            metrics: values,
        });
    }

    let mut aggregates = BTreeMap::new();
    for name in &enabled {
        let sum: f64 = records
            .iter()
            .map(|r| r.metrics.get(*name).copied().unwrap_or(0.0))
            .sum();
        aggregates.insert(name.to_string(), round2(sum / records.len() as f64 * 100.0));
    }

    Ok(MetricReport {
        records,
        aggregates,
    })
}
