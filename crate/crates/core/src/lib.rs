//! # hintprep
//!
//! A library for hint-based context preparation in question answering.
//! Instead of retrieving passages or generating a free-form context, the
//! pipeline asks a language model for a list of hint sentences about the
//! answer, scores each hint by how sharply it narrows the candidate-answer
//! set (its convergence score), reranks and truncates the hints into a
//! context, and hands that context to a reader model that produces the
//! final answer.
//!
//! The crate is organized around the pipeline stages:
//!
//! - [`model`] — shared domain types (questions, gold answers, hints,
//!   contexts, predictions) and their validation.
//! - [`llm`] — the single gateway for model calls: a chat-completion HTTP
//!   client with retries, a deterministic script-driven mock, an on-disk
//!   response cache, and a concurrency limiter.
//! - [`scoring`] — candidate support counting, answer selection, and
//!   per-hint convergence scores.
//! - [`hintgen`] — hint-generation prompting, output parsing, and
//!   blank-mask filtering.
//! - [`rerank`] — hint ordering strategies and top-k context assembly.
//! - [`reader`] — zero-shot and few-shot reader prompts and answer
//!   extraction.
//! - [`baselines`] — a BM25 retriever over a passage corpus and an
//!   LLM-generated-context preparator.
//! - [`metrics`] — the evaluation suite (EM, token F1/PR/RC, Contains,
//!   LLM-judged accuracy, embedding similarity) and run aggregation.
//! - [`data`] — line-delimited dataset/corpus ingestion and run output
//!   persistence.
//! - [`pipeline`] — end-to-end experiment execution with bounded
//!   concurrency and deterministic, replayable outputs.
//!
//! Everything runs offline against the mock backend; the HTTP client is
//! only exercised when an endpoint is configured.

pub mod baselines;
pub mod data;
pub mod hintgen;
pub mod llm;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod reader;
pub mod rerank;
pub mod scoring;
