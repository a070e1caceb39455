//! Result-table rendering in text, markdown, and TSV forms.
//!
//! Columns are fixed: Method, #Hints, Ranking, then the metric columns in
//! report order. Text and TSV print identical numbers; markdown bolds the
//! best value in each metric column.

use hintprep::data::{render_rows_text, ResultRow};
use hintprep::metrics::METRIC_ORDER;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("report has no rows")]
    EmptyReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ReportFormat {
    Text,
    Markdown,
    Tsv,
}

fn label_cells(row: &ResultRow) -> [String; 3] {
    [
        row.method.clone(),
        row.n_hints.map_or("-".to_string(), |k| k.to_string()),
        row.ranking.clone().unwrap_or_else(|| "-".to_string()),
    ]
}

fn render_tsv(rows: &[ResultRow]) -> String {
    let mut lines = Vec::with_capacity(rows.len() + 1);
    let header: Vec<&str> = ["Method", "#Hints", "Ranking"]
        .into_iter()
        .chain(METRIC_ORDER)
        .collect();
    lines.push(header.join("\t"));
    for row in rows {
        let mut cells: Vec<String> = label_cells(row).to_vec();
        for metric in METRIC_ORDER {
            cells.push(
                row.metrics
                    .get(metric)
                    .map_or("-".to_string(), |v| format!("{v:.2}")),
            );
        }
        lines.push(cells.join("\t"));
    }
    lines.join("\n") + "\n"
}

fn render_markdown(rows: &[ResultRow]) -> String {
    let best: Vec<Option<f64>> = METRIC_ORDER
        .iter()
        .map(|metric| {
            rows.iter()
                .filter_map(|r| r.metrics.get(*metric))
                .cloned()
                .fold(None, |acc: Option<f64>, v| {
                    Some(acc.map_or(v, |a| a.max(v)))
                })
        })
        .collect();

    let mut lines = Vec::with_capacity(rows.len() + 2);
    let header: Vec<&str> = ["Method", "#Hints", "Ranking"]
        .into_iter()
        .chain(METRIC_ORDER)
        .collect();
    lines.push(format!("| {} |", header.join(" | ")));
    lines.push(format!("|{}|", vec![" --- "; header.len()].join("|")));
    for row in rows {
        let mut cells: Vec<String> = label_cells(row).to_vec();
        for (i, metric) in METRIC_ORDER.iter().enumerate() {
            let cell = match row.metrics.get(*metric) {
                Some(v) if Some(*v) == best[i] => format!("**{v:.2}**"),
                Some(v) => format!("{v:.2}"),
                None => "-".to_string(),
            };
            cells.push(cell);
        }
        lines.push(format!("| {} |", cells.join(" | ")));
    }
    lines.join("\n") + "\n"
}

/// Renders the aggregate rows in the requested format.
pub fn render_table(rows: &[ResultRow], format: ReportFormat) -> Result<String, RenderError> {
    if rows.is_empty() {
        return Err(RenderError::EmptyReport);
    }
    Ok(match format {
        ReportFormat::Text => render_rows_text(rows),
        ReportFormat::Markdown => render_markdown(rows),
        ReportFormat::Tsv => render_tsv(rows),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn row(method: &str, em: f64) -> ResultRow {
        let mut metrics = BTreeMap::new();
        metrics.insert("ACC".to_string(), 58.06);
        metrics.insert("EM".to_string(), em);
        ResultRow {
            method: method.to_string(),
            n_hints: Some(7),
            ranking: Some("default".to_string()),
            metrics,
        }
    }

    #[test]
    fn text_contains_percentages() {
        let out = render_table(&[row("Hints", 54.62)], ReportFormat::Text).unwrap();
        assert!(out.contains("58.06"));
        assert!(out.contains("54.62"));
        assert!(out.contains("Method"));
    }

    #[test]
    fn markdown_header_and_best_bolding() {
        let rows = vec![row("A", 54.62), row("B", 50.76)];
        let out = render_table(&rows, ReportFormat::Markdown).unwrap();
        assert!(out
            .starts_with("| Method | #Hints | Ranking | ACC | EM | F1 | PR | RC | CON | SEMSIM |"));
        assert!(out.contains("**54.62**"));
        assert!(!out.contains("**50.76**"));
        // tie in ACC bolds both
        assert_eq!(out.matches("**58.06**").count(), 2);
    }

    #[test]
    fn tsv_and_text_carry_identical_numbers() {
        let rows = vec![row("A", 54.62), row("B", 50.76)];
        let text = render_table(&rows, ReportFormat::Text).unwrap();
        let tsv = render_table(&rows, ReportFormat::Tsv).unwrap();
        let pick_numbers = |s: &str| {
            s.split(|c: char| c.is_whitespace() || c == '|')
                .filter(|t| t.chars().next().is_some_and(|c| c.is_ascii_digit()))
                .map(|t| t.to_string())
                .collect::<Vec<_>>()
        };
        assert_eq!(pick_numbers(&text), pick_numbers(&tsv));
    }

    #[test]
    fn empty_report_errors() {
        assert!(matches!(
            render_table(&[], ReportFormat::Text),
            Err(RenderError::EmptyReport)
        ));
    }
}
