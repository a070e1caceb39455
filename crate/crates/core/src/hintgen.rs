//! Hint generation: prompt construction, model-output parsing, and
//! blank-mask filtering.
//!
//! Models are asked for a fixed number of one-line hints that do not reveal
//! the answer. Some replies mask the answer with blanks instead; those
//! hints are dropped, so a question may end up with fewer hints than asked
//! for.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{ChatClient, LlmError, RequestDefaults};
use crate::model::{Hint, HintList, Question};

/// Default hint-generation prompt. Placeholders: `{n}`, `{question}`.
pub const HINT_PROMPT_TEMPLATE: &str = "Generate {n} concise and relevant hint sentences for \
the following question. List the hints without revealing the answers within them.\n{question}";

pub const QUESTION_PLACEHOLDER: &str = "{question}";
pub const COUNT_PLACEHOLDER: &str = "{n}";

#[derive(Debug, Error)]
pub enum HintGenError {
    #[error("prompt template has no {QUESTION_PLACEHOLDER} placeholder")]
    MissingPlaceholder,
    #[error("no hints parsed from model output")]
    NoHintsParsed,
    #[error("hint generation call failed: {0}")]
    Client(#[from] LlmError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HintGenConfig {
    pub n_hints: u32,
    pub prompt_template: String,
    pub blank_tokens: Vec<String>,
}

impl Default for HintGenConfig {
    fn default() -> Self {
        HintGenConfig {
            n_hints: 10,
            prompt_template: HINT_PROMPT_TEMPLATE.to_string(),
            blank_tokens: ["____", "___", "__", "[blank]", "_____"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

/// Fills the template with the hint count and the question text.
pub fn build_hint_prompt(question: &Question, cfg: &HintGenConfig) -> Result<String, HintGenError> {
    if !cfg.prompt_template.contains(QUESTION_PLACEHOLDER) {
        return Err(HintGenError::MissingPlaceholder);
    }
    Ok(cfg
        .prompt_template
        .replace(COUNT_PLACEHOLDER, &cfg.n_hints.to_string())
        .replace(QUESTION_PLACEHOLDER, &question.text))
}

/// Strips a leading enumeration marker (`1.` / `1)`) or bullet (`- ` / `* `)
/// from a line. Returns the remainder and whether a marker was present.
fn strip_marker(line: &str) -> (&str, bool) {
    let trimmed = line.trim_start();
    let digits = trimmed.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let rest = &trimmed[digits..];
        if let Some(rest) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            return (rest.trim_start(), true);
        }
    }
    if let Some(rest) = trimmed
        .strip_prefix('-')
        .or_else(|| trimmed.strip_prefix('*'))
    {
        if rest.starts_with(char::is_whitespace) {
            return (rest.trim_start(), true);
        }
    }
    (trimmed, false)
}

/// Splits raw model output into hints: one per line, enumeration and bullet
/// markers stripped, empty lines dropped, and unenumerated preamble lines
/// ending in `:` dropped. Hints get origin indices in encounter order.
pub fn parse_hints(raw: &str) -> Result<HintList, HintGenError> {
    let mut hints = Vec::new();
    for line in raw.lines() {
        let line = line.trim_end_matches('\r');
        let (content, enumerated) = strip_marker(line);
        let content = content.trim();
        if content.is_empty() {
            continue;
        }
        if !enumerated && content.ends_with(':') {
            continue;
        }
        hints.push(Hint::new(content, hints.len()));
    }
    if hints.is_empty() {
        return Err(HintGenError::NoHintsParsed);
    }
    Ok(hints)
}

/// Drops hints containing any blank-mask token. Surviving hints keep their
/// origin indices; the result may be empty.
pub fn filter_blanked(hints: HintList, cfg: &HintGenConfig) -> HintList {
    hints
        .into_iter()
        .filter(|hint| !cfg.blank_tokens.iter().any(|tok| hint.text.contains(tok)))
        .collect()
}

/// One prompt, one chat call, parse, filter. Convergence scores are not
/// attached here; that is the scoring stage's job.
pub fn generate_hints(
    question: &Question,
    cfg: &HintGenConfig,
    defaults: &RequestDefaults,
    client: &dyn ChatClient,
) -> Result<HintList, HintGenError> {
    let prompt = build_hint_prompt(question, cfg)?;
    let response = client.complete(&defaults.user_request(prompt))?;
    let hints = parse_hints(&response.content)?;
    Ok(filter_blanked(hints, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::MockChatClient;

    fn texts(hints: &[Hint]) -> Vec<&str> {
        hints.iter().map(|h| h.text.as_str()).collect()
    }

    #[test]
    fn prompt_substitutes_count_and_question() {
        let q = Question::new(
            "t1",
            "what city in the USA has a neighborhood called Little Havana?",
        );
        let cfg = HintGenConfig::default();
        let prompt = build_hint_prompt(&q, &cfg).unwrap();
        assert!(prompt.starts_with("Generate 10 concise and relevant hint sentences"));
        assert!(prompt.ends_with(&format!("\n{}", q.text)));

        let one = HintGenConfig {
            n_hints: 1,
            ..HintGenConfig::default()
        };
        assert!(build_hint_prompt(&Question::new("x", "x?"), &one)
            .unwrap()
            .starts_with("Generate 1 concise"));
    }

    #[test]
    fn template_without_placeholder_is_rejected() {
        let cfg = HintGenConfig {
            prompt_template: "Give me {n} hints.".to_string(),
            ..HintGenConfig::default()
        };
        assert!(matches!(
            build_hint_prompt(&Question::new("x", "x?"), &cfg),
            Err(HintGenError::MissingPlaceholder)
        ));
    }

    #[test]
    fn parse_assigns_origin_indices_in_order() {
        let hints = parse_hints("1. A\n2. B").unwrap();
        assert_eq!(texts(&hints), vec!["A", "B"]);
        assert_eq!(hints[0].origin_index, 0);
        assert_eq!(hints[1].origin_index, 1);
    }

    #[test]
    fn parse_handles_bullets_and_blank_lines() {
        let hints = parse_hints("- A\n\n- B\n- C").unwrap();
        assert_eq!(texts(&hints), vec!["A", "B", "C"]);
    }

    #[test]
    fn parse_drops_colon_terminated_preamble() {
        let hints = parse_hints("Here are hints:\n1. A").unwrap();
        assert_eq!(texts(&hints), vec!["A"]);
    }

    #[test]
    fn parse_fixture_corpus() {
        #[derive(serde::Deserialize)]
        struct Case {
            name: String,
            raw: String,
            #[serde(default)]
            expect: Vec<String>,
            #[serde(default)]
            expect_error: bool,
        }
        let corpus: Vec<Case> =
            serde_json::from_str(include_str!("../tests/fixtures/hint_parse_corpus.json")).unwrap();
        assert_eq!(corpus.len(), 20);
        for case in corpus {
            match parse_hints(&case.raw) {
                Ok(hints) => {
                    assert!(!case.expect_error, "{}: expected an error", case.name);
                    assert_eq!(texts(&hints), case.expect, "{}", case.name);
                    for (i, h) in hints.iter().enumerate() {
                        assert_eq!(h.origin_index, i, "{}", case.name);
                    }
                }
                Err(HintGenError::NoHintsParsed) => {
                    assert!(case.expect_error, "{}: unexpected parse failure", case.name)
                }
                Err(other) => panic!("{}: unexpected error {other}", case.name),
            }
        }
    }

    #[test]
    fn render_then_parse_recovers_the_texts() {
        let original = vec!["First hint", "Second hint", "Third one."];
        let rendered = original
            .iter()
            .enumerate()
            .map(|(i, h)| format!("{}. {h}", i + 1))
            .collect::<Vec<_>>()
            .join("\n");
        let parsed = parse_hints(&rendered).unwrap();
        assert_eq!(texts(&parsed), original);
    }

    #[test]
    fn filter_removes_blanked_hints_and_keeps_indices() {
        let cfg = HintGenConfig::default();
        let hints = vec![
            Hint::new("The city is ____.", 0),
            Hint::new("It is in Florida.", 1),
        ];
        let kept = filter_blanked(hints, &cfg);
        assert_eq!(texts(&kept), vec!["It is in Florida."]);
        assert_eq!(kept[0].origin_index, 1);

        assert!(filter_blanked(vec![], &cfg).is_empty());

        let clean: Vec<Hint> = (0..10).map(|i| Hint::new(format!("hint {i}"), i)).collect();
        let kept = filter_blanked(clean.clone(), &cfg);
        assert_eq!(kept, clean);
        // idempotent
        assert_eq!(filter_blanked(kept.clone(), &cfg), kept);
    }

    #[test]
    fn generation_parses_and_filters_in_one_call() {
        let q = Question::new("t1", "what city?");
        let cfg = HintGenConfig::default();
        let defaults = RequestDefaults::default();

        let ten: String = (1..=10)
            .map(|i| format!("{i}. Hint number {i}."))
            .collect::<Vec<_>>()
            .join("\n");
        let mock = MockChatClient::new()
            .with_regex_rule("Generate 10 concise", &*ten)
            .unwrap();
        let hints = generate_hints(&q, &cfg, &defaults, &mock).unwrap();
        assert_eq!(hints.len(), 10);

        let empty = MockChatClient::new().with_regex_rule(".*", "").unwrap();
        assert!(matches!(
            generate_hints(&q, &cfg, &defaults, &empty),
            Err(HintGenError::NoHintsParsed)
        ));

        let three_blanked = "1. The city is ____.\n2. Good hint A.\n3. It is called __.\n\
                             4. Good hint B.\n5. [blank] is the place.\n6. Good hint C.\n\
                             7. Good hint D.\n8. Good hint E.\n9. Good hint F.\n10. Good hint G.";
        let mock = MockChatClient::new()
            .with_regex_rule(".*", three_blanked)
            .unwrap();
        let hints = generate_hints(&q, &cfg, &defaults, &mock).unwrap();
        assert_eq!(hints.len(), 7);
    }

    #[test]
    fn megabyte_input_parses_without_panic() {
        let line = "Some hint text that repeats. ";
        let mut big = String::new();
        while big.len() < 1_048_576 {
            big.push_str(line);
            big.push('\n');
        }
        let hints = parse_hints(&big).unwrap();
        assert!(!hints.is_empty());
    }
}
