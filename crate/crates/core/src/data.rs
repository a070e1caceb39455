//! Dataset, corpus, and run-output files.
//!
//! Everything on disk is line-delimited JSON (UTF-8, one record per line):
//! question datasets (optionally carrying candidates and hints with
//! convergence scores), passage corpora for retrieval, per-question
//! evaluation records, and aggregate result tables. Loading validates all
//! domain invariants and reports the offending line.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use thiserror::Error;

use crate::metrics::{MetricReport, METRIC_ORDER};
use crate::model::{
    CandidateSet, CandidateSource, EvalRecord, GoldAnswerSet, Hint, Question, QuestionType,
    ValidationError,
};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("invalid record at line {line}: {source}")]
    Validation {
        line: usize,
        source: ValidationError,
    },
    #[error("duplicate question id `{id}` at line {line}")]
    DuplicateQuestionId { line: usize, id: String },
    #[error("duplicate doc id `{doc_id}` at line {line}")]
    DuplicateDocId { line: usize, doc_id: String },
    #[error("refusing to save a report with no metrics")]
    EmptyMetrics,
}

fn io_err(path: &Path, err: impl std::fmt::Display) -> DataError {
    DataError::Io {
        path: path.display().to_string(),
        reason: err.to_string(),
    }
}

/// One dataset entry: a question with gold answers and, optionally, its
/// candidate answers and pre-generated hints.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub question: Question,
    pub gold: GoldAnswerSet,
    pub candidates: Option<CandidateSet>,
    pub hints: Option<Vec<Hint>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawHint {
    text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    convergence: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawRecord {
    id: String,
    question: String,
    answers: Vec<String>,
    #[serde(rename = "type", skip_serializing_if = "Option::is_none")]
    type_tag: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    candidates: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    hints: Option<Vec<RawHint>>,
}

/// Field-name remapping for importing externally released files whose
/// schema differs only in naming: maps our canonical field names to the
/// source file's names.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FieldMap(pub BTreeMap<String, String>);

impl FieldMap {
    fn apply(&self, value: serde_json::Value) -> serde_json::Value {
        let serde_json::Value::Object(mut obj) = value else {
            return value;
        };
        for (canonical, source) in &self.0 {
            if canonical != source {
                if let Some(v) = obj.remove(source) {
                    obj.insert(canonical.clone(), v);
                }
            }
        }
        serde_json::Value::Object(obj)
    }
}

fn record_from_raw(raw: RawRecord, line: usize) -> Result<DatasetRecord, DataError> {
    let mut question = Question::new(raw.id, raw.question);
    if let Some(tag) = raw.type_tag {
        let parsed: QuestionType = tag
            .parse()
            .map_err(|source| DataError::Validation { line, source })?;
        question.type_tag = Some(parsed);
    }
    let gold =
        GoldAnswerSet::new(raw.answers).map_err(|source| DataError::Validation { line, source })?;
    let (question, gold) = crate::model::validate_record(question, gold)
        .map_err(|source| DataError::Validation { line, source })?;

    let candidates = raw
        .candidates
        .map(|c| CandidateSet::new(c, CandidateSource::Provided))
        .transpose()
        .map_err(|source| DataError::Validation { line, source })?;

    let hints = raw
        .hints
        .map(|raw_hints| {
            raw_hints
                .into_iter()
                .enumerate()
                .map(|(index, raw_hint)| {
                    let mut hint = Hint::new(raw_hint.text, index);
                    if let Some(value) = raw_hint.convergence {
                        hint.set_convergence(value)
                            .map_err(|source| DataError::Validation { line, source })?;
                    }
                    Ok(hint)
                })
                .collect::<Result<Vec<Hint>, DataError>>()
        })
        .transpose()?;

    Ok(DatasetRecord {
        question,
        gold,
        candidates,
        hints,
    })
}

/// Loads a dataset, preserving file order. Hints receive origin indices
/// from their position in the record's hint array.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<DatasetRecord>, DataError> {
    load_dataset_with_map(path, &FieldMap::default())
}

/// Like [`load_dataset`], but renames top-level fields through `map` first.
pub fn load_dataset_with_map(
    path: impl AsRef<Path>,
    map: &FieldMap,
) -> Result<Vec<DatasetRecord>, DataError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut records = Vec::new();
    let mut seen_ids: HashMap<String, usize> = HashMap::new();
    for (index, line) in BufReader::new(file).lines().enumerate() {
        let number = index + 1;
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| DataError::Parse {
                line: number,
                reason: e.to_string(),
            })?;
        let raw: RawRecord =
            serde_json::from_value(map.apply(value)).map_err(|e| DataError::Parse {
                line: number,
                reason: e.to_string(),
            })?;
        if seen_ids.insert(raw.id.clone(), number).is_some() {
            return Err(DataError::DuplicateQuestionId {
                line: number,
                id: raw.id,
            });
        }
        records.push(record_from_raw(raw, number)?);
    }
    Ok(records)
}

/// Writes a dataset back out in the canonical schema. Hints are written in
/// list order; reloading assigns origin indices from that order.
pub fn save_dataset(records: &[DatasetRecord], path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for record in records {
        let raw = RawRecord {
            id: record.question.id.clone(),
            question: record.question.text.clone(),
            answers: record.gold.aliases().to_vec(),
            type_tag: record.question.type_tag.map(|t| t.to_string()),
            candidates: record.candidates.as_ref().map(|c| c.candidates().to_vec()),
            hints: record.hints.as_ref().map(|hints| {
                hints
                    .iter()
                    .map(|h| RawHint {
                        text: h.text.clone(),
                        convergence: h.convergence,
                    })
                    .collect()
            }),
        };
        out.push(serde_json::to_string(&raw).expect("record serializes"));
    }
    std::fs::write(path, out.join("\n") + "\n").map_err(|e| io_err(path, e))
}

/// One corpus passage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Passage {
    pub doc_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    pub text: String,
}

/// An in-memory passage collection with id lookup, consumed by the BM25
/// index.
#[derive(Debug, Clone, Default)]
pub struct PassageStore {
    passages: Vec<Passage>,
    by_id: HashMap<String, usize>,
}

impl PassageStore {
    pub fn from_passages(passages: Vec<Passage>) -> Result<Self, DataError> {
        let mut store = PassageStore::default();
        for (index, passage) in passages.into_iter().enumerate() {
            store.insert(passage, index + 1)?;
        }
        Ok(store)
    }

    fn insert(&mut self, passage: Passage, line: usize) -> Result<(), DataError> {
        if self.by_id.contains_key(&passage.doc_id) {
            return Err(DataError::DuplicateDocId {
                line,
                doc_id: passage.doc_id,
            });
        }
        self.by_id
            .insert(passage.doc_id.clone(), self.passages.len());
        self.passages.push(passage);
        Ok(())
    }

    pub fn get(&self, doc_id: &str) -> Option<&Passage> {
        self.by_id.get(doc_id).map(|&i| &self.passages[i])
    }

    pub fn passages(&self) -> &[Passage] {
        &self.passages
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }
}

/// Loads a passage corpus: one `{doc_id, title?, text}` record per line.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<PassageStore, DataError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut store = PassageStore::default();
    for (index, line) in BufReader::new(file).lines().enumerate() {
        let number = index + 1;
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let passage: Passage = serde_json::from_str(&line).map_err(|e| DataError::Parse {
            line: number,
            reason: e.to_string(),
        })?;
        store.insert(passage, number)?;
    }
    Ok(store)
}

/// One aggregate table row: the run's configuration labels plus its metric
/// means (percent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    pub n_hints: Option<u32>,
    pub ranking: Option<String>,
    pub metrics: BTreeMap<String, f64>,
}

/// Self-describing run metadata: configuration snapshot (defaults filled
/// in), component versions, every prompt template used, and the
/// normalization rules the metrics applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub method: String,
    pub n_hints: Option<u32>,
    pub ranking: Option<String>,
    pub config: serde_json::Value,
    pub versions: BTreeMap<String, String>,
    pub prompts: BTreeMap<String, String>,
    pub normalization_rules: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct AggregateFile {
    rows: Vec<ResultRow>,
}

/// Renders rows as an aligned text table; also used for `aggregate.txt`.
pub fn render_rows_text(rows: &[ResultRow]) -> String {
    let headers: Vec<String> = ["Method", "#Hints", "Ranking"]
        .iter()
        .map(|s| s.to_string())
        .chain(METRIC_ORDER.iter().map(|m| m.to_string()))
        .collect();
    let mut body: Vec<Vec<String>> = Vec::new();
    for row in rows {
        let mut cells = vec![
            row.method.clone(),
            row.n_hints.map_or("-".to_string(), |k| k.to_string()),
            row.ranking.clone().unwrap_or_else(|| "-".to_string()),
        ];
        for metric in METRIC_ORDER {
            cells.push(
                row.metrics
                    .get(metric)
                    .map_or("-".to_string(), |v| format!("{v:.2}")),
            );
        }
        body.push(cells);
    }
    let widths: Vec<usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| {
            body.iter()
                .map(|r| r[i].len())
                .chain(std::iter::once(h.len()))
                .max()
                .unwrap_or(0)
        })
        .collect();
    let render_line = |cells: &[String]| {
        cells
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{:width$}", c, width = widths[i]))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut lines = vec![render_line(&headers)];
    lines.push(
        widths
            .iter()
            .map(|w| "-".repeat(*w))
            .collect::<Vec<_>>()
            .join("  "),
    );
    for row in &body {
        lines.push(render_line(row));
    }
    lines.join("\n") + "\n"
}

/// Writes a run directory: per-question records (sorted by question id),
/// the aggregate row in machine-readable and aligned-text forms, and the
/// run metadata.
pub fn save_run(
    report: &MetricReport,
    meta: &RunMeta,
    dir: impl AsRef<Path>,
) -> Result<(), DataError> {
    if report.aggregates.is_empty() {
        return Err(DataError::EmptyMetrics);
    }
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;

    let mut records = report.records.clone();
    records.sort_by(|a, b| a.question_id.cmp(&b.question_id));
    let per_question = dir.join("per_question.jsonl");
    let mut file = std::fs::File::create(&per_question).map_err(|e| io_err(&per_question, e))?;
    for record in &records {
        writeln!(
            file,
            "{}",
            serde_json::to_string(record).expect("record serializes")
        )
        .map_err(|e| io_err(&per_question, e))?;
    }

    let row = ResultRow {
        method: meta.method.clone(),
        n_hints: meta.n_hints,
        ranking: meta.ranking.clone(),
        metrics: report.aggregates.clone(),
    };
    let aggregate = AggregateFile { rows: vec![row] };
    let agg_json = dir.join("aggregate.json");
    std::fs::write(
        &agg_json,
        serde_json::to_string_pretty(&aggregate).expect("aggregate serializes") + "\n",
    )
    .map_err(|e| io_err(&agg_json, e))?;

    let agg_txt = dir.join("aggregate.txt");
    std::fs::write(&agg_txt, render_rows_text(&aggregate.rows)).map_err(|e| io_err(&agg_txt, e))?;

    let meta_path = dir.join("run_meta.json");
    std::fs::write(
        &meta_path,
        serde_json::to_string_pretty(meta).expect("meta serializes") + "\n",
    )
    .map_err(|e| io_err(&meta_path, e))?;
    Ok(())
}

/// Reads a run directory back: per-question records, aggregate rows, and
/// metadata.
pub fn load_run(
    dir: impl AsRef<Path>,
) -> Result<(MetricReport, Vec<ResultRow>, RunMeta), DataError> {
    let dir = dir.as_ref();
    let per_question = dir.join("per_question.jsonl");
    let file = std::fs::File::open(&per_question).map_err(|e| io_err(&per_question, e))?;
    let mut records: Vec<EvalRecord> = Vec::new();
    for (index, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(&per_question, e))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|e| DataError::Parse {
            line: index + 1,
            reason: e.to_string(),
        })?);
    }

    let agg_path = dir.join("aggregate.json");
    let agg_text = std::fs::read_to_string(&agg_path).map_err(|e| io_err(&agg_path, e))?;
    let aggregate: AggregateFile =
        serde_json::from_str(&agg_text).map_err(|e| DataError::Parse {
            line: 0,
            reason: e.to_string(),
        })?;

    let meta_path = dir.join("run_meta.json");
    let meta_text = std::fs::read_to_string(&meta_path).map_err(|e| io_err(&meta_path, e))?;
    let meta: RunMeta = serde_json::from_str(&meta_text).map_err(|e| DataError::Parse {
        line: 0,
        reason: e.to_string(),
    })?;

    let aggregates = aggregate
        .rows
        .first()
        .map(|r| r.metrics.clone())
        .unwrap_or_default();
    Ok((
        MetricReport {
            records,
            aggregates,
        },
        aggregate.rows,
        meta,
    ))
}
