//! Hint ordering strategies and top-k context assembly.
//!
//! Three orderings are supported: the generator's original order, descending
//! convergence score, and descending score from an external scoring service.
//! All sorts are stable with the origin index as the tie-break, so equal-key
//! hints keep their generation order.

use serde::{Deserialize, Serialize};
use std::time::Duration;
use thiserror::Error;

use crate::llm::{self, LlmError};
use crate::model::{Hint, HintList, PreparedContext, Provenance};

#[derive(Debug, Error)]
pub enum RerankError {
    #[error("convergence reranking requires a convergence score on every hint")]
    MissingConvergenceScores,
    #[error("external-score reranking requires a scorer")]
    MissingScorer,
    #[error("no hints to assemble a context from")]
    EmptyHintList,
    #[error("requested a context of zero hints")]
    EmptyContextRequested,
    #[error("external scorer failed: {0}")]
    Scorer(#[from] LlmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RerankMethod {
    /// The sequence in which the hints were originally generated.
    Default,
    /// Descending convergence score.
    Convergence,
    /// Descending score from an [`ExternalScorer`].
    ExternalScore,
}

impl std::fmt::Display for RerankMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            RerankMethod::Default => "default",
            RerankMethod::Convergence => "convergence",
            RerankMethod::ExternalScore => "external",
        };
        f.write_str(name)
    }
}

/// Relevance scorer for (question, hint) pairs; higher is more relevant.
/// Must be deterministic per configuration.
pub trait ExternalScorer: Send + Sync {
    fn score(&self, question: &str, hint: &str) -> Result<f64, RerankError>;
}

/// Adapter for closures, handy for constant mocks in tests.
pub struct FnScorer<F>(pub F);

impl<F> ExternalScorer for FnScorer<F>
where
    F: Fn(&str, &str) -> f64 + Send + Sync,
{
    fn score(&self, question: &str, hint: &str) -> Result<f64, RerankError> {
        Ok((self.0)(question, hint))
    }
}

/// Scorer backed by an HTTP endpoint: request `{question, hint}`, response
/// `{score}`.
pub struct HttpExternalScorer {
    endpoint: String,
    timeout: Duration,
}

impl HttpExternalScorer {
    pub fn new(endpoint: impl Into<String>) -> Self {
        HttpExternalScorer {
            endpoint: endpoint.into(),
            timeout: Duration::from_secs(60),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }
}

impl ExternalScorer for HttpExternalScorer {
    fn score(&self, question: &str, hint: &str) -> Result<f64, RerankError> {
        Ok(llm::post_score(
            self.timeout,
            &self.endpoint,
            question,
            hint,
        )?)
    }
}

fn sort_descending_by_key(mut hints: HintList, keys: Vec<f64>) -> HintList {
    let mut order: Vec<usize> = (0..hints.len()).collect();
    order.sort_by(|&a, &b| {
        keys[b]
            .total_cmp(&keys[a])
            .then_with(|| hints[a].origin_index.cmp(&hints[b].origin_index))
    });
    let mut out = Vec::with_capacity(hints.len());
    for index in order {
        out.push(std::mem::replace(&mut hints[index], Hint::new("", 0)));
    }
    out
}

/// Reorders hints by the chosen method. The output is always a permutation
/// of the input.
pub fn rerank(
    hints: HintList,
    method: RerankMethod,
    question: &str,
    scorer: Option<&dyn ExternalScorer>,
) -> Result<HintList, RerankError> {
    match method {
        RerankMethod::Default => {
            let mut hints = hints;
            hints.sort_by_key(|h| h.origin_index);
            Ok(hints)
        }
        RerankMethod::Convergence => {
            let keys = hints
                .iter()
                .map(|h| h.convergence.ok_or(RerankError::MissingConvergenceScores))
                .collect::<Result<Vec<f64>, _>>()?;
            Ok(sort_descending_by_key(hints, keys))
        }
        RerankMethod::ExternalScore => {
            let scorer = scorer.ok_or(RerankError::MissingScorer)?;
            let keys = hints
                .iter()
                .map(|h| scorer.score(question, &h.text))
                .collect::<Result<Vec<f64>, _>>()?;
            Ok(sort_descending_by_key(hints, keys))
        }
    }
}

/// Takes the first `min(k, |hints|)` hints in their current order as the
/// context sentences.
pub fn assemble_context(hints: &[Hint], k: usize) -> Result<PreparedContext, RerankError> {
    if k == 0 {
        return Err(RerankError::EmptyContextRequested);
    }
    if hints.is_empty() {
        return Err(RerankError::EmptyHintList);
    }
    let sentences: Vec<String> = hints.iter().take(k).map(|h| h.text.clone()).collect();
    Ok(PreparedContext::new(sentences, Provenance::Hints).expect("at least one hint"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hints_with_scores(scores: &[f64]) -> HintList {
        scores
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let mut h = Hint::new(format!("hint {i}"), i);
                h.set_convergence(s).unwrap();
                h
            })
            .collect()
    }

    #[test]
    fn convergence_sorts_descending_with_stable_ties() {
        let hints = hints_with_scores(&[0.4, 0.9, 0.9, 0.1]);
        let out = rerank(hints, RerankMethod::Convergence, "q", None).unwrap();
        let order: Vec<usize> = out.iter().map(|h| h.origin_index).collect();
        assert_eq!(order, vec![1, 2, 0, 3]);
    }

    #[test]
    fn default_restores_origin_order_from_any_permutation() {
        let mut hints = hints_with_scores(&[0.4, 0.9, 0.9, 0.1]);
        hints.reverse();
        let out = rerank(hints, RerankMethod::Default, "q", None).unwrap();
        let order: Vec<usize> = out.iter().map(|h| h.origin_index).collect();
        assert_eq!(order, vec![0, 1, 2, 3]);
    }

    #[test]
    fn top_scored_hints_come_first() {
        // seven hints, two carrying the maximal convergence of 1.0
        let hints = hints_with_scores(&[0.3, 1.0, 0.6, 0.8, 1.0, 0.0, 0.45]);
        let out = rerank(hints, RerankMethod::Convergence, "q", None).unwrap();
        assert_eq!(out[0].origin_index, 1);
        assert_eq!(out[1].origin_index, 4);
        assert_eq!(out[0].convergence, Some(1.0));
        assert_eq!(out[1].convergence, Some(1.0));
    }

    #[test]
    fn missing_scores_and_missing_scorer_are_errors() {
        let hints = vec![Hint::new("no score", 0)];
        assert!(matches!(
            rerank(hints.clone(), RerankMethod::Convergence, "q", None),
            Err(RerankError::MissingConvergenceScores)
        ));
        assert!(matches!(
            rerank(hints, RerankMethod::ExternalScore, "q", None),
            Err(RerankError::MissingScorer)
        ));
    }

    #[test]
    fn external_scorer_orders_by_score() {
        let hints: HintList = (0..4).map(|i| Hint::new(format!("h{i}"), i)).collect();
        let scorer = FnScorer(|_: &str, hint: &str| match hint {
            "h2" => 3.0,
            "h0" => 2.0,
            _ => 1.0,
        });
        let out = rerank(hints, RerankMethod::ExternalScore, "q", Some(&scorer)).unwrap();
        let order: Vec<usize> = out.iter().map(|h| h.origin_index).collect();
        assert_eq!(order, vec![2, 0, 1, 3]);
    }

    #[test]
    fn external_scorer_ties_stay_in_origin_order() {
        let hints: HintList = (0..7).map(|i| Hint::new(format!("h{i}"), i)).collect();
        let scorer = FnScorer(|_: &str, hint: &str| match hint {
            "h5" | "h2" => 2.0,
            _ => 1.0,
        });
        let out = rerank(hints, RerankMethod::ExternalScore, "q", Some(&scorer)).unwrap();
        let order: Vec<usize> = out.iter().map(|h| h.origin_index).collect();
        assert_eq!(order, vec![2, 5, 0, 1, 3, 4, 6]);
    }

    #[test]
    fn rerank_output_is_a_permutation() {
        let hints = hints_with_scores(&[0.2, 0.2, 0.9, 0.5, 0.2]);
        let mut before: Vec<String> = hints.iter().map(|h| h.text.clone()).collect();
        let out = rerank(hints, RerankMethod::Convergence, "q", None).unwrap();
        let mut after: Vec<String> = out.iter().map(|h| h.text.clone()).collect();
        before.sort();
        after.sort();
        assert_eq!(before, after);
    }

    #[test]
    fn assembly_takes_a_prefix_and_clamps() {
        let hints: HintList = (0..10).map(|i| Hint::new(format!("h{i}"), i)).collect();
        let ctx = assemble_context(&hints, 7).unwrap();
        assert_eq!(ctx.len(), 7);
        assert_eq!(ctx.sentences()[0], "h0");
        assert_eq!(ctx.sentences()[6], "h6");
        assert_eq!(ctx.provenance(), Provenance::Hints);

        let four: HintList = (0..4).map(|i| Hint::new(format!("h{i}"), i)).collect();
        assert_eq!(assemble_context(&four, 10).unwrap().len(), 4);

        assert!(matches!(
            assemble_context(&four, 0),
            Err(RerankError::EmptyContextRequested)
        ));
        assert!(matches!(
            assemble_context(&[], 3),
            Err(RerankError::EmptyHintList)
        ));
    }

    #[test]
    fn context_joins_with_single_space() {
        let hints = vec![Hint::new("One.", 0), Hint::new("Two.", 1)];
        let ctx = assemble_context(&hints, 2).unwrap();
        assert_eq!(ctx.joined(), "One. Two.");
        assert_eq!(ctx.joined_with("\n"), "One.\nTwo.");
    }
}
