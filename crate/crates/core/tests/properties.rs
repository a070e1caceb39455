//! Generative property tests for cross-cutting invariants.

use proptest::prelude::*;

use hintprep::baselines::split_sentences;
use hintprep::hintgen::{filter_blanked, parse_hints, HintGenConfig};
use hintprep::metrics::{contains, exact_match, normalize, token_prf};
use hintprep::model::{
    CandidateSet, CandidateSource, GoldAnswerSet, Hint, PreparedContext, Provenance,
};
use hintprep::rerank::{rerank, RerankMethod};
use hintprep::scoring::{score_candidates, FnOracle};

fn hint_text() -> impl Strategy<Value = String> {
    proptest::string::string_regex("[a-zA-Z0-9 ,.!?:;'()-]{1,60}")
        .unwrap()
        .prop_filter("non-empty after trim", |s| !s.trim().is_empty())
}

proptest! {
    #[test]
    fn normalize_is_idempotent(text in ".{0,120}") {
        let once = normalize(&text);
        prop_assert_eq!(normalize(&once), once);
    }

    #[test]
    fn metrics_stay_in_unit_range(pred in ".{0,60}", alias in ".{1,40}") {
        let gold = GoldAnswerSet::new(vec![alias]).unwrap();
        let prf = token_prf(&pred, &gold);
        for v in [prf.precision, prf.recall, prf.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(exact_match(&pred, &gold) <= 1);
        prop_assert!(contains(&pred, &gold) <= 1);
    }

    #[test]
    fn duplicate_alias_never_changes_prf(pred in ".{0,60}", alias in ".{1,40}") {
        let once = token_prf(&pred, &GoldAnswerSet::new(vec![alias.clone()]).unwrap());
        let twice = token_prf(
            &pred,
            &GoldAnswerSet::new(vec![alias.clone(), alias]).unwrap(),
        );
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn rendered_hint_lists_parse_back(texts in proptest::collection::vec(hint_text(), 1..10)) {
        let rendered = texts
            .iter()
            .enumerate()
            .map(|(i, t)| format!("{}. {t}", i + 1))
            .collect::<Vec<_>>()
            .join("\n");
        let parsed = parse_hints(&rendered).unwrap();
        let expected: Vec<String> = texts.iter().map(|t| t.trim().to_string()).collect();
        let got: Vec<String> = parsed.iter().map(|h| h.text.clone()).collect();
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn blank_filter_is_idempotent_and_order_preserving(
        texts in proptest::collection::vec("[a-z_ ]{1,30}", 0..12),
    ) {
        let cfg = HintGenConfig::default();
        let hints: Vec<Hint> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| Hint::new(t.clone(), i))
            .collect();
        let once = filter_blanked(hints, &cfg);
        let indices: Vec<usize> = once.iter().map(|h| h.origin_index).collect();
        let mut sorted = indices.clone();
        sorted.sort_unstable();
        prop_assert_eq!(&indices, &sorted, "order not preserved");
        let twice = filter_blanked(once.clone(), &cfg);
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn rerank_is_always_a_permutation(
        scores in proptest::collection::vec(0..=4u8, 1..8),
        method_pick in 0..2u8,
    ) {
        let hints: Vec<Hint> = scores
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let mut h = Hint::new(format!("text {i}"), i);
                h.set_convergence(f64::from(*s) / 4.0).unwrap();
                h
            })
            .collect();
        let method = if method_pick == 0 {
            RerankMethod::Default
        } else {
            RerankMethod::Convergence
        };
        let out = rerank(hints.clone(), method, "q", None).unwrap();
        let mut before: Vec<String> = hints.into_iter().map(|h| h.text).collect();
        let mut after: Vec<String> = out.into_iter().map(|h| h.text).collect();
        before.sort();
        after.sort();
        prop_assert_eq!(before, after);
    }

    #[test]
    fn sentence_splitting_drops_no_characters(text in "[A-Za-z0-9 .!?]{0,200}") {
        let sentences = split_sentences(&text);
        let squash = |s: &str| s.chars().filter(|c| !c.is_whitespace()).collect::<String>();
        let joined = sentences.join(" ");
        prop_assert_eq!(squash(&joined), squash(&text));
    }

    #[test]
    fn candidate_scores_are_multiples_of_one_over_s(
        bits in proptest::collection::vec(proptest::bool::ANY, 1..30),
        n_sentences in 1..6usize,
    ) {
        let n_candidates = (bits.len() / n_sentences).max(1);
        let sentences: Vec<String> = (0..n_sentences).map(|i| format!("s{i}")).collect();
        let names: Vec<String> = (0..n_candidates).map(|i| format!("a{i}")).collect();
        let ctx = PreparedContext::new(sentences, Provenance::Hints).unwrap();
        let cands = CandidateSet::new(names, CandidateSource::Provided).unwrap();
        let table = bits.clone();
        let nc = n_candidates;
        let oracle = FnOracle(move |s: &str, c: &str| {
            let si: usize = s[1..].parse().unwrap();
            let ci: usize = c[1..].parse().unwrap();
            table.get(si * nc + ci).copied().unwrap_or(false)
        });
        let scored = score_candidates(&ctx, &cands, &oracle).unwrap();
        for sc in scored {
            let k = (sc.score * n_sentences as f64).round();
            prop_assert!(sc.score == k / n_sentences as f64, "score {}", sc.score);
            prop_assert!((0.0..=1.0).contains(&sc.score));
        }
    }
}
