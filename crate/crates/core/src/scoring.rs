//! Candidate support counting and answer selection.
//!
//! A [`SupportOracle`] judges whether a sentence supports a candidate
//! answer. From those yes/no judgments this module builds per-sentence
//! support sets, scores each candidate by the fraction of sentences
//! supporting it, picks the best-supported answer, and computes per-hint
//! convergence scores (how sharply a single hint narrows the candidate
//! set, from 0 to 1).

use std::sync::Arc;
use thiserror::Error;

use crate::llm::{parse_yes_no, ChatClient, LlmError, RequestDefaults};
use crate::metrics::normalize;
use crate::model::{CandidateSet, Hint, HintList, PreparedContext, ScoredCandidate, SupportSet};

/// Prompt sent by [`LlmJudgeOracle`]. Placeholders: `{candidate}`,
/// `{question}`, `{sentence}`.
pub const SUPPORT_JUDGE_TEMPLATE: &str = "Does the following sentence support '{candidate}' as \
a possible answer to '{question}'? Answer yes or no.\nSentence: {sentence}";

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("context has no sentences")]
    EmptyContext,
    #[error("no scored candidates to select from")]
    EmptyScoredList,
    #[error("convergence needs at least 2 candidates, got {got}")]
    TooFewCandidates { got: usize },
    #[error("support judge failed: {0}")]
    Judge(#[from] LlmError),
}

/// Decides whether a sentence supports a candidate answer. Must be
/// deterministic for a fixed configuration.
pub trait SupportOracle: Send + Sync {
    fn judge(&self, sentence: &str, candidate: &str) -> Result<bool, ScoringError>;
}

/// Deterministic baseline: the candidate counts as supported when its
/// normalized form occurs as a substring of the normalized sentence.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactMatchOracle;

impl SupportOracle for ExactMatchOracle {
    fn judge(&self, sentence: &str, candidate: &str) -> Result<bool, ScoringError> {
        Ok(normalize(sentence).contains(&normalize(candidate)))
    }
}

/// Adapter for plugging an arbitrary judgment function in as an oracle.
pub struct FnOracle<F>(pub F);

impl<F> SupportOracle for FnOracle<F>
where
    F: Fn(&str, &str) -> bool + Send + Sync,
{
    fn judge(&self, sentence: &str, candidate: &str) -> Result<bool, ScoringError> {
        Ok((self.0)(sentence, candidate))
    }
}

/// Asks a chat model for the support judgment; built per question. A reply
/// that cannot be read as yes/no counts as unsupported.
pub struct LlmJudgeOracle {
    question: String,
    client: Arc<dyn ChatClient>,
    defaults: RequestDefaults,
}

impl LlmJudgeOracle {
    pub fn new(
        question: impl Into<String>,
        client: Arc<dyn ChatClient>,
        defaults: RequestDefaults,
    ) -> Self {
        LlmJudgeOracle {
            question: question.into(),
            client,
            defaults,
        }
    }
}

impl SupportOracle for LlmJudgeOracle {
    fn judge(&self, sentence: &str, candidate: &str) -> Result<bool, ScoringError> {
        let prompt = SUPPORT_JUDGE_TEMPLATE
            .replace("{candidate}", candidate)
            .replace("{question}", &self.question)
            .replace("{sentence}", sentence);
        let response = self.client.complete(&self.defaults.user_request(prompt))?;
        match parse_yes_no(&response.content) {
            Some(verdict) => Ok(verdict),
            None => {
                log::warn!(
                    "support judge reply is not yes/no: {:?}",
                    response.content.chars().take(80).collect::<String>()
                );
                Ok(false)
            }
        }
    }
}

/// The 0/1 membership indicator: 1 iff the oracle judges the sentence to
/// support the candidate.
pub fn support_indicator(
    oracle: &dyn SupportOracle,
    sentence: &str,
    candidate: &str,
) -> Result<u32, ScoringError> {
    if sentence.trim().is_empty() {
        return Err(ScoringError::EmptyInput("sentence"));
    }
    if candidate.trim().is_empty() {
        return Err(ScoringError::EmptyInput("candidate"));
    }
    Ok(oracle.judge(sentence, candidate)? as u32)
}

/// One support set per context sentence, in sentence order: the candidates
/// the oracle accepts for that sentence.
pub fn support_sets(
    oracle: &dyn SupportOracle,
    context: &PreparedContext,
    candidates: &CandidateSet,
) -> Result<Vec<SupportSet>, ScoringError> {
    if candidates.is_empty() {
        return Err(ScoringError::EmptyInput("candidates"));
    }
    context
        .sentences()
        .iter()
        .enumerate()
        .map(|(index, sentence)| {
            let mut supported = Vec::new();
            for candidate in candidates.candidates() {
                if support_indicator(oracle, sentence, candidate)? == 1 {
                    supported.push(candidate.clone());
                }
            }
            Ok(SupportSet {
                hint_index: index,
                supported,
            })
        })
        .collect()
}

/// Scores every candidate as (number of supporting sentences) / |S|,
/// preserving candidate order. The count is accumulated as an integer and
/// divided once, so each score is an exact multiple of `1 / |S|`.
pub fn score_candidates(
    context: &PreparedContext,
    candidates: &CandidateSet,
    oracle: &dyn SupportOracle,
) -> Result<Vec<ScoredCandidate>, ScoringError> {
    if context.is_empty() {
        return Err(ScoringError::EmptyContext);
    }
    let sentence_count = context.len() as f64;
    candidates
        .candidates()
        .iter()
        .map(|candidate| {
            let mut count: u64 = 0;
            for sentence in context.sentences() {
                count += u64::from(support_indicator(oracle, sentence, candidate)?);
            }
            Ok(ScoredCandidate {
                answer: candidate.clone(),
                score: count as f64 / sentence_count,
            })
        })
        .collect()
}

/// The answer with the maximal score; ties go to the earliest candidate in
/// the original order.
pub fn select_answer(scored: &[ScoredCandidate]) -> Result<String, ScoringError> {
    let best = scored
        .iter()
        .reduce(|best, next| if next.score > best.score { next } else { best })
        .ok_or(ScoringError::EmptyScoredList)?;
    Ok(best.answer.clone())
}

/// How sharply one hint narrows the candidate set: with `|A|` candidates of
/// which the hint supports `|C|`, the score is `(|A| - |C|) / (|A| - 1)`,
/// and 0 when the hint supports nothing at all.
pub fn convergence_score(
    hint: &Hint,
    candidates: &CandidateSet,
    oracle: &dyn SupportOracle,
) -> Result<f64, ScoringError> {
    let total = candidates.len();
    if total < 2 {
        return Err(ScoringError::TooFewCandidates { got: total });
    }
    let mut supported: usize = 0;
    for candidate in candidates.candidates() {
        supported += support_indicator(oracle, &hint.text, candidate)? as usize;
    }
    if supported == 0 {
        return Ok(0.0);
    }
    Ok((total - supported) as f64 / (total - 1) as f64)
}

/// Computes and attaches a convergence score to every hint, preserving
/// order and origin indices.
pub fn attach_convergence(
    hints: HintList,
    candidates: &CandidateSet,
    oracle: &dyn SupportOracle,
) -> Result<HintList, ScoringError> {
    hints
        .into_iter()
        .map(|mut hint| {
            let score = convergence_score(&hint, candidates, oracle)?;
            hint.set_convergence(score)
                .expect("convergence formula stays in [0,1]");
            Ok(hint)
        })
        .collect()
}

/// Per-sentence supported-candidate counts and their total, used for the
/// entity-count bucketing analysis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityCountProfile {
    pub per_sentence: Vec<usize>,
    pub total: usize,
}

pub fn entity_count_profile(
    context: &PreparedContext,
    candidates: &CandidateSet,
    oracle: &dyn SupportOracle,
) -> Result<EntityCountProfile, ScoringError> {
    if context.is_empty() {
        return Err(ScoringError::EmptyContext);
    }
    let sets = support_sets(oracle, context, candidates)?;
    let per_sentence: Vec<usize> = sets.iter().map(|s| s.supported.len()).collect();
    let total = per_sentence.iter().sum();
    Ok(EntityCountProfile {
        per_sentence,
        total,
    })
}
