//! Shared domain types and their invariants.
//!
//! Everything here is an immutable value object after construction; the
//! types carry no behavior beyond validation. Serialization of these types
//! to disk lives in [`crate::data`].

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use crate::metrics::normalize;

/// Validation failures for domain-type invariants. Each variant names the
/// offending field.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValidationError {
    #[error("question `{id}`: text is empty after trimming")]
    EmptyQuestion { id: String },
    #[error("gold answer set is unusable: {detail}")]
    EmptyGoldSet { detail: String },
    #[error("gold aliases `{first}` and `{second}` normalize to the same form")]
    DuplicateAlias { first: String, second: String },
    #[error("candidates `{first}` and `{second}` normalize to the same form")]
    DuplicateCandidate { first: String, second: String },
    #[error("convergence score {value} is outside [0,1]")]
    ConvergenceOutOfRange { value: f64 },
    #[error("prepared context has no sentences")]
    EmptyContext,
    #[error("unknown question type `{value}`")]
    UnknownQuestionType { value: String },
}

/// Coarse question category used for per-type result breakdowns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuestionType {
    Human,
    Location,
    Entity,
    Description,
    Other,
}

impl FromStr for QuestionType {
    type Err = ValidationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "human" => Ok(QuestionType::Human),
            "location" => Ok(QuestionType::Location),
            "entity" => Ok(QuestionType::Entity),
            "description" => Ok(QuestionType::Description),
            "other" => Ok(QuestionType::Other),
            other => Err(ValidationError::UnknownQuestionType {
                value: other.to_string(),
            }),
        }
    }
}

/// A question to answer, with a dataset-unique id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
    pub type_tag: Option<QuestionType>,
}

impl Question {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Question {
            id: id.into(),
            text: text.into(),
            type_tag: None,
        }
    }
}

/// All accepted surface forms of the correct answer. Aliases are stored
/// verbatim; normalization happens only inside the metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldAnswerSet {
    aliases: Vec<String>,
}

impl GoldAnswerSet {
    /// Structural construction: requires at least one alias. The
    /// normalization-dependent checks (no alias empty after normalization,
    /// no duplicate aliases) run in [`validate_record`].
    pub fn new(aliases: Vec<String>) -> Result<Self, ValidationError> {
        if aliases.is_empty() {
            return Err(ValidationError::EmptyGoldSet {
                detail: "no aliases given".to_string(),
            });
        }
        Ok(GoldAnswerSet { aliases })
    }

    pub fn aliases(&self) -> &[String] {
        &self.aliases
    }
}

/// Where a candidate set came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CandidateSource {
    Provided,
    LlmGenerated,
}

/// The ordered candidate answers for a question. Order is stable and serves
/// as the global tie-break order for answer selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    candidates: Vec<String>,
    source: CandidateSource,
}

impl CandidateSet {
    /// Rejects candidates that collide after normalization; order is
    /// preserved from the source.
    pub fn new(candidates: Vec<String>, source: CandidateSource) -> Result<Self, ValidationError> {
        let mut seen: BTreeMap<String, &String> = BTreeMap::new();
        for candidate in &candidates {
            let key = normalize(candidate);
            if let Some(first) = seen.get(&key) {
                return Err(ValidationError::DuplicateCandidate {
                    first: (*first).clone(),
                    second: candidate.clone(),
                });
            }
            seen.insert(key, candidate);
        }
        Ok(CandidateSet { candidates, source })
    }

    pub fn candidates(&self) -> &[String] {
        &self.candidates
    }

    pub fn source(&self) -> CandidateSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

/// One generated hint sentence. `origin_index` is the hint's position in
/// the generator's original output and survives filtering and reranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hint {
    pub text: String,
    pub convergence: Option<f64>,
    pub origin_index: usize,
}

impl Hint {
    pub fn new(text: impl Into<String>, origin_index: usize) -> Self {
        Hint {
            text: text.into(),
            convergence: None,
            origin_index,
        }
    }

    pub fn set_convergence(&mut self, value: f64) -> Result<(), ValidationError> {
        if !(0.0..=1.0).contains(&value) {
            return Err(ValidationError::ConvergenceOutOfRange { value });
        }
        self.convergence = Some(value);
        Ok(())
    }
}

/// An ordered collection of hints.
pub type HintList = Vec<Hint>;

/// The candidates a single context sentence supports: the intersection of
/// the sentence's plausible entities with the candidate set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportSet {
    pub hint_index: usize,
    pub supported: Vec<String>,
}

/// How a prepared context was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Hints,
    Retrieved,
    Generated,
}

/// The ordered sentences handed to scoring or a reader. Never empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedContext {
    sentences: Vec<String>,
    provenance: Provenance,
}

impl PreparedContext {
    pub fn new(sentences: Vec<String>, provenance: Provenance) -> Result<Self, ValidationError> {
        if sentences.is_empty() {
            return Err(ValidationError::EmptyContext);
        }
        Ok(PreparedContext {
            sentences,
            provenance,
        })
    }

    pub fn sentences(&self) -> &[String] {
        &self.sentences
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// The single-string form used in prompts: sentences joined by a single
    /// space.
    pub fn joined(&self) -> String {
        self.joined_with(" ")
    }

    pub fn joined_with(&self, joiner: &str) -> String {
        self.sentences.join(joiner)
    }
}

/// A candidate answer with its support score: the fraction of context
/// sentences that support it, always an exact multiple of `1 / |S|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub answer: String,
    pub score: f64,
}

/// A reader's output for one question. `answer_text` is derived from
/// `raw_reader_output` by the configured extraction rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub question_id: String,
    pub answer_text: String,
    pub raw_reader_output: String,
}

/// Per-question metric outcomes, keyed by metric name
/// (ACC, EM, F1, PR, RC, CON, SEMSIM).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub question_id: String,
    pub metrics: BTreeMap<String, f64>,
}

impl fmt::Display for QuestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            QuestionType::Human => "Human",
            QuestionType::Location => "Location",
            QuestionType::Entity => "Entity",
            QuestionType::Description => "Description",
            QuestionType::Other => "Other",
        };
        f.write_str(name)
    }
}

/// Checks the question/gold invariants and hands the pair back unchanged.
pub fn validate_record(
    question: Question,
    gold: GoldAnswerSet,
) -> Result<(Question, GoldAnswerSet), ValidationError> {
    if question.text.trim().is_empty() {
        return Err(ValidationError::EmptyQuestion {
            id: question.id.clone(),
        });
    }
    if gold.aliases.is_empty() {
        return Err(ValidationError::EmptyGoldSet {
            detail: "no aliases given".to_string(),
        });
    }
    let mut seen: BTreeMap<String, &String> = BTreeMap::new();
    for alias in &gold.aliases {
        let key = normalize(alias);
        if key.is_empty() {
            return Err(ValidationError::EmptyGoldSet {
                detail: format!("alias `{alias}` is empty after normalization"),
            });
        }
        if let Some(first) = seen.get(&key) {
            return Err(ValidationError::DuplicateAlias {
                first: (*first).clone(),
                second: alias.clone(),
            });
        }
        seen.insert(key, alias);
    }
    Ok((question, gold))
}
