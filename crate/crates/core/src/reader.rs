//! Reader prompting and answer extraction.
//!
//! The reader receives the prepared context and the question in a fixed
//! block layout and replies with an answer. Few-shot prompting prepends
//! exactly five completed exemplar blocks; answer extraction either keeps
//! the full reply (zero-shot replies are usually whole passages) or takes
//! the first line stripped of an `Answer:` label.

use serde::{Deserialize, Serialize};
use std::io::BufRead;
use std::path::Path;
use thiserror::Error;

use crate::llm::{ChatClient, LlmError, RequestDefaults};
use crate::model::{Prediction, PreparedContext, Question};

/// First line of every reader block.
pub const READER_HEADER: &str = "According to the following context, answer the question:";

/// Number of exemplars a few-shot prompt must carry.
pub const FEW_SHOT_COUNT: usize = 5;

#[derive(Debug, Error)]
pub enum ReaderError {
    #[error("few-shot prompting needs exactly {FEW_SHOT_COUNT} exemplars, got {got}")]
    WrongShotCount { got: usize },
    #[error("reader returned no usable output")]
    EmptyOutput,
    #[error("reader call failed: {0}")]
    Client(#[from] LlmError),
    #[error("bad exemplar file: {0}")]
    BadExemplarFile(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReaderStrategy {
    ZeroShot,
    FewShot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extraction {
    FullText,
    FirstLine,
}

/// A completed (context, question, answer) block used as a few-shot
/// exemplar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub context: String,
    pub question: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReaderConfig {
    pub strategy: ReaderStrategy,
    pub shots: Vec<Exemplar>,
    pub extraction: Extraction,
}

impl ReaderConfig {
    /// Zero-shot reading; replies are kept whole since they are usually
    /// passages rather than short answers.
    pub fn zero_shot() -> Self {
        ReaderConfig {
            strategy: ReaderStrategy::ZeroShot,
            shots: Vec::new(),
            extraction: Extraction::FullText,
        }
    }

    /// Few-shot reading with exactly five exemplars; replies are trimmed to
    /// their first line.
    pub fn few_shot(shots: Vec<Exemplar>) -> Result<Self, ReaderError> {
        if shots.len() != FEW_SHOT_COUNT {
            return Err(ReaderError::WrongShotCount { got: shots.len() });
        }
        Ok(ReaderConfig {
            strategy: ReaderStrategy::FewShot,
            shots,
            extraction: Extraction::FirstLine,
        })
    }

    pub fn with_extraction(mut self, extraction: Extraction) -> Self {
        self.extraction = extraction;
        self
    }
}

fn block(context: &str, question: &str, answer: Option<&str>) -> String {
    match answer {
        Some(answer) => {
            format!("{READER_HEADER}\nContext: {context}\nQuestion: {question}\nAnswer: {answer}")
        }
        None => format!("{READER_HEADER}\nContext: {context}\nQuestion: {question}\nAnswer:"),
    }
}

/// Renders the reader prompt: five filled exemplar blocks for few-shot,
/// then the live block ending in a bare `Answer:`.
pub fn build_reader_prompt(
    context: &PreparedContext,
    question: &Question,
    cfg: &ReaderConfig,
) -> Result<String, ReaderError> {
    let mut blocks = Vec::new();
    if cfg.strategy == ReaderStrategy::FewShot {
        if cfg.shots.len() != FEW_SHOT_COUNT {
            return Err(ReaderError::WrongShotCount {
                got: cfg.shots.len(),
            });
        }
        for shot in &cfg.shots {
            blocks.push(block(&shot.context, &shot.question, Some(&shot.answer)));
        }
    }
    blocks.push(block(&context.joined(), &question.text, None));
    Ok(blocks.join("\n\n"))
}

/// Applies the extraction rule to a raw reader reply.
pub fn extract_answer(raw: &str, cfg: &ReaderConfig) -> Result<String, ReaderError> {
    let extracted = match cfg.extraction {
        Extraction::FullText => raw.trim().to_string(),
        Extraction::FirstLine => {
            let line = raw
                .lines()
                .map(str::trim)
                .find(|l| !l.is_empty())
                .unwrap_or("");
            let line = line
                .strip_prefix("Answer:")
                .or_else(|| line.strip_prefix("answer:"))
                .unwrap_or(line);
            line.trim().to_string()
        }
    };
    if extracted.is_empty() {
        return Err(ReaderError::EmptyOutput);
    }
    Ok(extracted)
}

/// Prompt, one chat call, extraction. The raw reply is preserved on the
/// prediction.
pub fn answer(
    context: &PreparedContext,
    question: &Question,
    cfg: &ReaderConfig,
    defaults: &RequestDefaults,
    client: &dyn ChatClient,
) -> Result<Prediction, ReaderError> {
    let prompt = build_reader_prompt(context, question, cfg)?;
    let response = client.complete(&defaults.user_request(prompt))?;
    let answer_text = extract_answer(&response.content, cfg)?;
    Ok(Prediction {
        question_id: question.id.clone(),
        answer_text,
        raw_reader_output: response.content,
    })
}

/// Loads exemplars from a JSONL file of `{context, question, answer}`
/// records.
pub fn load_exemplars(path: impl AsRef<Path>) -> Result<Vec<Exemplar>, ReaderError> {
    let file = std::fs::File::open(path.as_ref())
        .map_err(|e| ReaderError::BadExemplarFile(e.to_string()))?;
    let mut shots = Vec::new();
    for (number, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| ReaderError::BadExemplarFile(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let shot: Exemplar = serde_json::from_str(&line)
            .map_err(|e| ReaderError::BadExemplarFile(format!("line {}: {e}", number + 1)))?;
        shots.push(shot);
    }
    Ok(shots)
}
