//! Context-preparation baselines: a BM25 sparse retriever over a passage
//! corpus and an LLM-generated-context preparator.
//!
//! BM25 uses the Lucene-style IDF `ln((N - df + 0.5) / (df + 0.5) + 1)`,
//! which stays non-negative on common terms, with the usual k1 term
//! saturation and b length normalization. Tokens are lowercased,
//! punctuation-stripped, whitespace-split; repeated query terms count once.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

use crate::data::{Passage, PassageStore};
use crate::llm::{ChatClient, LlmError, RequestDefaults};
use crate::model::{PreparedContext, Provenance, Question};

/// Prompt for the generation-based baseline. Placeholder: `{question}`.
pub const GENERATION_PROMPT_TEMPLATE: &str =
    "Generate a short context passage that helps answer the following question: {question}";

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("invalid BM25 parameters: {0}")]
    InvalidParams(String),
    #[error("the passage index is empty")]
    EmptyIndex,
    #[error("generation returned no usable output")]
    EmptyOutput,
    #[error("passage text is empty")]
    EmptyPassage,
    #[error("generation call failed: {0}")]
    Client(#[from] LlmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<(), BaselineError> {
        if self.k1 <= 0.0 {
            return Err(BaselineError::InvalidParams(format!(
                "k1 must be positive, got {}",
                self.k1
            )));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(BaselineError::InvalidParams(format!(
                "b must lie in [0,1], got {}",
                self.b
            )));
        }
        Ok(())
    }
}

fn tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    lower
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect::<String>()
        .split_whitespace()
        .map(|t| t.to_string())
        .collect()
}

/// Inverted index over a passage store.
#[derive(Debug, Clone)]
pub struct Bm25Index {
    postings: HashMap<String, Vec<(usize, u32)>>,
    doc_lengths: Vec<usize>,
    doc_ids: Vec<String>,
    avgdl: f64,
}

impl Bm25Index {
    pub fn build(store: &PassageStore) -> Self {
        let mut postings: HashMap<String, Vec<(usize, u32)>> = HashMap::new();
        let mut doc_lengths = Vec::with_capacity(store.len());
        let mut doc_ids = Vec::with_capacity(store.len());
        for (doc_index, passage) in store.passages().iter().enumerate() {
            let tokens = tokenize(&passage.text);
            doc_lengths.push(tokens.len());
            doc_ids.push(passage.doc_id.clone());
            let mut counts: HashMap<String, u32> = HashMap::new();
            for token in tokens {
                *counts.entry(token).or_insert(0) += 1;
            }
            for (token, tf) in counts {
                postings.entry(token).or_default().push((doc_index, tf));
            }
        }
        let avgdl = if doc_lengths.is_empty() {
            0.0
        } else {
            doc_lengths.iter().sum::<usize>() as f64 / doc_lengths.len() as f64
        };
        Bm25Index {
            postings,
            doc_lengths,
            doc_ids,
            avgdl,
        }
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bm25Hit {
    pub doc_id: String,
    pub score: f64,
}

/// Scores the query against the index. Only documents matching at least
/// one query term are returned, sorted by descending score with ties
/// broken by ascending doc id.
pub fn bm25_retrieve(
    query: &str,
    index: &Bm25Index,
    params: &Bm25Params,
    top_k: usize,
) -> Result<Vec<Bm25Hit>, BaselineError> {
    params.validate()?;
    if top_k == 0 {
        return Err(BaselineError::InvalidParams(
            "top_k must be at least 1".to_string(),
        ));
    }
    if index.doc_count() == 0 {
        return Err(BaselineError::EmptyIndex);
    }
    let mut terms = tokenize(query);
    terms.sort();
    terms.dedup();

    let n = index.doc_count() as f64;
    let mut scores: HashMap<usize, f64> = HashMap::new();
    for term in &terms {
        let Some(postings) = index.postings.get(term) else {
            continue;
        };
        let df = postings.len() as f64;
        let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
        for &(doc_index, tf) in postings {
            let tf = f64::from(tf);
            let dl = index.doc_lengths[doc_index] as f64;
            let norm = tf * (params.k1 + 1.0)
                / (tf + params.k1 * (1.0 - params.b + params.b * dl / index.avgdl));
            *scores.entry(doc_index).or_insert(0.0) += idf * norm;
        }
    }

    let mut hits: Vec<Bm25Hit> = scores
        .into_iter()
        .map(|(doc_index, score)| Bm25Hit {
            doc_id: index.doc_ids[doc_index].clone(),
            score,
        })
        .collect();
    hits.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.doc_id.cmp(&b.doc_id))
    });
    hits.truncate(top_k);
    Ok(hits)
}

const ABBREVIATIONS: [&str; 20] = [
    "mr.", "mrs.", "ms.", "dr.", "prof.", "st.", "jr.", "sr.", "vs.", "etc.", "e.g.", "i.e.",
    "u.s.", "u.k.", "d.c.", "no.", "fig.", "inc.", "ltd.", "co.",
];

fn is_abbreviation(token: &str) -> bool {
    let lower = token.to_lowercase();
    if ABBREVIATIONS.contains(&lower.as_str()) {
        return true;
    }
    // single initials like "J."
    let mut chars = token.chars();
    matches!(
        (chars.next(), chars.next(), chars.next()),
        (Some(c), Some('.'), None) if c.is_uppercase()
    )
}

/// Splits text into sentences at `.`, `!`, or `?` followed by whitespace,
/// keeping terminal punctuation and skipping a small abbreviation
/// blocklist. No characters outside separating whitespace are dropped.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut sentences = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        if matches!(chars[i], '.' | '!' | '?') {
            let mut end = i;
            while end + 1 < chars.len() && matches!(chars[end + 1], '.' | '!' | '?') {
                end += 1;
            }
            let at_boundary = end + 1 >= chars.len() || chars[end + 1].is_whitespace();
            if at_boundary {
                // the token the punctuation run ends (for abbreviation checks)
                let mut tok_start = end + 1;
                while tok_start > start && !chars[tok_start - 1].is_whitespace() {
                    tok_start -= 1;
                }
                let token: String = chars[tok_start..=end].iter().collect();
                let ends_in_period = chars[end] == '.';
                if !(ends_in_period && is_abbreviation(&token)) {
                    let sentence: String = chars[start..=end].iter().collect();
                    let sentence = sentence.trim().to_string();
                    if !sentence.is_empty() {
                        sentences.push(sentence);
                    }
                    start = end + 1;
                }
            }
            i = end + 1;
        } else {
            i += 1;
        }
    }
    if start < chars.len() {
        let tail: String = chars[start..].iter().collect();
        let tail = tail.trim().to_string();
        if !tail.is_empty() {
            sentences.push(tail);
        }
    }
    sentences
}

/// Asks the model for a short helper passage and splits it into sentences.
pub fn generate_context(
    question: &Question,
    defaults: &RequestDefaults,
    client: &dyn ChatClient,
) -> Result<PreparedContext, BaselineError> {
    let prompt = GENERATION_PROMPT_TEMPLATE.replace("{question}", &question.text);
    let response = client.complete(&defaults.user_request(prompt))?;
    let sentences = split_sentences(&response.content);
    if sentences.is_empty() {
        return Err(BaselineError::EmptyOutput);
    }
    Ok(PreparedContext::new(sentences, Provenance::Generated).expect("non-empty"))
}

/// Sentence-splits a retrieved passage into a context.
pub fn passage_to_context(passage: &Passage) -> Result<PreparedContext, BaselineError> {
    let sentences = split_sentences(&passage.text);
    if sentences.is_empty() {
        return Err(BaselineError::EmptyPassage);
    }
    Ok(PreparedContext::new(sentences, Provenance::Retrieved).expect("non-empty"))
}
