//! Command-line front end for the hint-based QA pipeline.
//!
//! Subcommands: `run` an experiment from a TOML config, `score-hints` to
//! attach convergence scores to a dataset's hints, `evaluate` a predictions
//! file against gold answers, and `report` to re-render a saved run.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on runtime errors.

mod render;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::PathBuf;
use std::sync::Arc;

use hintprep::data::{self, RunMeta};
use hintprep::llm::{ChatClient, MockChatClient, RequestDefaults};
use hintprep::metrics::{self, EvalConfig};
use hintprep::model::{GoldAnswerSet, Prediction, Question};
use hintprep::pipeline::{self, ExperimentConfig};
use hintprep::scoring::{self, ExactMatchOracle, LlmJudgeOracle, SupportOracle};

use render::{render_table, ReportFormat};

#[derive(Parser)]
#[command(
    name = "hintprep",
    version,
    about = "Hint-based context preparation for QA"
)]
struct Cli {
    /// Override the response cache directory from the config
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,

    /// Cache-only mode: never call the network or the mock backend
    #[arg(long, global = true)]
    offline: bool,

    /// Override the concurrency limit from the config
    #[arg(long, global = true)]
    concurrency: Option<usize>,

    /// Override the random seed from the config
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OracleArg {
    ExactMatch,
    LlmJudge,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a TOML config file
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Attach convergence scores to every hint in a dataset
    ScoreHints {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value = "exact-match")]
        oracle: OracleArg,
        #[arg(long)]
        out: PathBuf,
        /// Mock script backing the LLM judge oracle
        #[arg(long)]
        mock_script: Option<PathBuf>,
        /// Chat endpoint backing the LLM judge oracle
        #[arg(long)]
        endpoint: Option<String>,
    },
    /// Evaluate a predictions file against a dataset's gold answers
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render the aggregate table of a saved run directory
    Report {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: ReportFormat,
    },
}

fn main() {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            if matches!(
                err.kind(),
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion
            ) {
                print!("{err}");
                std::process::exit(0);
            }
            eprint!("{err}");
            std::process::exit(1);
        }
    };
    if let Err(err) = dispatch(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(2);
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run { ref config } => {
            let mut cfg = ExperimentConfig::from_toml_path(config)?;
            if let Some(dir) = &cli.cache_dir {
                cfg.client.cache_dir = Some(dir.clone());
            }
            if cli.offline {
                cfg.client.offline = true;
            }
            if let Some(n) = cli.concurrency {
                cfg.experiment.concurrency = n;
            }
            if let Some(seed) = cli.seed {
                cfg.experiment.seed = seed;
            }
            cfg.validate()?;
            let report = pipeline::run_experiment(&cfg)?;
            let (_, rows, _) = data::load_run(&cfg.experiment.output_dir)?;
            print!("{}", render_table(&rows, ReportFormat::Text)?);
            println!(
                "run written to {} ({} questions)",
                cfg.experiment.output_dir.display(),
                report.records.len()
            );
            Ok(())
        }
        Command::ScoreHints {
            dataset,
            oracle,
            out,
            mock_script,
            endpoint,
        } => score_hints(dataset, oracle, out, mock_script, endpoint),
        Command::Evaluate {
            predictions,
            dataset,
            out,
        } => evaluate(predictions, dataset, out),
        Command::Report { run_dir, format } => {
            let (_, rows, _) = data::load_run(&run_dir)?;
            print!("{}", render_table(&rows, format)?);
            Ok(())
        }
    }
}

fn judge_client(
    mock_script: Option<PathBuf>,
    endpoint: Option<String>,
) -> anyhow::Result<Arc<dyn ChatClient>> {
    match (mock_script, endpoint) {
        (Some(script), _) => Ok(Arc::new(MockChatClient::from_script_file(script)?)),
        (None, Some(endpoint)) => Ok(Arc::new(hintprep::llm::HttpChatClient::new(endpoint))),
        (None, None) => bail!("the llm-judge oracle needs --mock-script or --endpoint"),
    }
}

fn score_hints(
    dataset_path: PathBuf,
    oracle: OracleArg,
    out: PathBuf,
    mock_script: Option<PathBuf>,
    endpoint: Option<String>,
) -> anyhow::Result<()> {
    let mut records = data::load_dataset(&dataset_path)?;
    let defaults = RequestDefaults::default();
    let judge = match oracle {
        OracleArg::ExactMatch => None,
        OracleArg::LlmJudge => Some(judge_client(mock_script, endpoint)?),
    };

    let mut scored_hints = 0usize;
    for record in &mut records {
        let id = record.question.id.clone();
        let Some(hints) = record.hints.take() else {
            bail!("question `{id}` has no hints to score");
        };
        let Some(candidates) = record.candidates.as_ref() else {
            bail!("question `{id}` has no candidate answers");
        };
        let oracle: Box<dyn SupportOracle> = match &judge {
            None => Box::new(ExactMatchOracle),
            Some(client) => Box::new(LlmJudgeOracle::new(
                record.question.text.clone(),
                client.clone(),
                defaults.clone(),
            )),
        };
        let scored = scoring::attach_convergence(hints, candidates, oracle.as_ref())
            .with_context(|| format!("scoring hints for question `{id}`"))?;
        scored_hints += scored.len();
        record.hints = Some(scored);
    }

    data::save_dataset(&records, &out)?;
    write_side_meta(
        &out,
        "score-hints",
        serde_json::json!({
            "dataset": dataset_path,
            "oracle": format!("{oracle:?}"),
            "out": out,
        }),
    )?;
    println!(
        "scored {scored_hints} hints across {} questions -> {}",
        records.len(),
        out.display()
    );
    Ok(())
}

#[derive(serde::Deserialize)]
struct RawPrediction {
    question_id: String,
    answer_text: String,
    #[serde(default)]
    raw_reader_output: Option<String>,
}

fn evaluate(predictions: PathBuf, dataset: PathBuf, out: PathBuf) -> anyhow::Result<()> {
    let records = data::load_dataset(&dataset)?;
    let pairs: Vec<(Question, GoldAnswerSet)> = records
        .iter()
        .map(|r| (r.question.clone(), r.gold.clone()))
        .collect();

    let file = std::fs::File::open(&predictions)
        .with_context(|| format!("cannot open {}", predictions.display()))?;
    let mut preds = Vec::new();
    for (index, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawPrediction = serde_json::from_str(&line)
            .with_context(|| format!("bad prediction at line {}", index + 1))?;
        preds.push(Prediction {
            question_id: raw.question_id,
            raw_reader_output: raw
                .raw_reader_output
                .unwrap_or_else(|| raw.answer_text.clone()),
            answer_text: raw.answer_text,
        });
    }
    preds.sort_by(|a, b| a.question_id.cmp(&b.question_id));

    let report = metrics::evaluate_run(&preds, &pairs, &EvalConfig::default(), None, None)?;
    let meta = RunMeta {
        method: "Evaluate".to_string(),
        n_hints: None,
        ranking: None,
        config: serde_json::json!({
            "predictions": predictions,
            "dataset": dataset,
            "out": out,
        }),
        versions: versions(),
        prompts: BTreeMap::new(),
        normalization_rules: metrics::NORMALIZATION_RULES.to_string(),
    };
    data::save_run(&report, &meta, &out)?;
    let (_, rows, _) = data::load_run(&out)?;
    print!("{}", render_table(&rows, ReportFormat::Text)?);
    println!("evaluation written to {}", out.display());
    Ok(())
}

fn versions() -> BTreeMap<String, String> {
    [
        ("hintprep".to_string(), hintprep_version()),
        (
            env!("CARGO_PKG_NAME").to_string(),
            env!("CARGO_PKG_VERSION").to_string(),
        ),
    ]
    .into()
}

fn hintprep_version() -> String {
    // the library version travels in run metadata written by the pipeline;
    // the CLI records its own
    env!("CARGO_PKG_VERSION").to_string()
}

fn write_side_meta(
    out: &std::path::Path,
    command: &str,
    config: serde_json::Value,
) -> anyhow::Result<()> {
    let meta = serde_json::json!({
        "command": command,
        "config": config,
        "versions": versions(),
        "prompts": pipeline::prompt_catalog(),
        "normalization_rules": metrics::NORMALIZATION_RULES,
    });
    let path = out.with_extension("meta.json");
    std::fs::write(&path, serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}
