use std::fmt::Write as _;

use crate::error::{Error, Result};

use super::{ExperimentTask, RunResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err(Error::Config(format!(
                "unknown report format `{s}` (markdown|csv)"
            ))),
        }
    }
}

/// Column header and direction (higher is better) for a metric key.
fn header(key: &str) -> (String, bool) {
    let (head, up) = match key {
        "precision" => ("Precision".to_string(), true),
        "recall" => ("Recall".to_string(), true),
        "f1" => ("F1".to_string(), true),
        "mae" | "mse" | "rmse" => (key.to_uppercase(), false),
        other => (other.to_string(), true),
    };
    (format!("{head} {}", if up { "↑" } else { "↓" }), up)
}

/// (result key, column header, higher is better) for a task, in report order.
pub fn metric_columns(task: ExperimentTask, k_values: &[usize]) -> Vec<(String, String, bool)> {
    let keys: Vec<String> = match task {
        ExperimentTask::SingleClassification => {
            vec!["precision".into(), "recall".into(), "f1".into()]
        }
        ExperimentTask::MultiClassification => k_values
            .iter()
            .map(|k| format!("R@{k}"))
            .chain(k_values.iter().map(|k| format!("N@{k}")))
            .collect(),
        ExperimentTask::Regression => vec!["mae".into(), "mse".into(), "rmse".into()],
    };
    keys.into_iter()
        .map(|k| {
            let (h, up) = header(&k);
            (k, h, up)
        })
        .collect()
}

/// One row per result (in the given order), one column per metric; the
/// best value of each column is bold in markdown and starred in CSV.
pub fn emit_report(results: &[RunResult], format: ReportFormat) -> Result<String> {
    let first = results.first().ok_or(Error::Empty)?;
    if let Some(other) = results.iter().find(|r| r.task != first.task) {
        return Err(Error::MixedTasks(
            first.task.as_str().into(),
            other.task.as_str().into(),
        ));
    }
    let keys: Vec<String> = first.metrics.keys().cloned().collect();
    if results.iter().any(|r| r.metrics.keys().ne(keys.iter())) {
        return Err(Error::Data("results carry different metric sets".into()));
    }
    let directions: Vec<(String, bool)> = keys.iter().map(|k| header(k)).collect();

    let best: Vec<Option<f64>> = keys
        .iter()
        .zip(&directions)
        .map(|(k, (_, up))| {
            results.iter().filter_map(|r| r.metrics[k]).reduce(|a, b| {
                if (*up && b > a) || (!*up && b < a) {
                    b
                } else {
                    a
                }
            })
        })
        .collect();

    let mut out = String::new();
    match format {
        ReportFormat::Markdown => {
            out += "| Imputer |";
            for (h, _) in &directions {
                write!(out, " {h} |").unwrap();
            }
            out += "\n|---|";
            out += &"---:|".repeat(keys.len());
            out.push('\n');
            for r in results {
                write!(out, "| {} |", r.imputer.display()).unwrap();
                for (k, b) in keys.iter().zip(&best) {
                    match r.metrics[k] {
                        Some(v) if Some(v) == *b => write!(out, " **{v:.4}** |").unwrap(),
                        Some(v) => write!(out, " {v:.4} |").unwrap(),
                        None => out += " n/a |",
                    }
                }
                out.push('\n');
            }
        }
        ReportFormat::Csv => {
            out += "imputer";
            for (h, _) in &directions {
                write!(out, ",{h}").unwrap();
            }
            out.push('\n');
            for r in results {
                out += r.imputer.display();
                for (k, b) in keys.iter().zip(&best) {
                    match r.metrics[k] {
                        Some(v) if Some(v) == *b => write!(out, ",{v:.4}*").unwrap(),
                        Some(v) => write!(out, ",{v:.4}").unwrap(),
                        None => out += ",",
                    }
                }
                out.push('\n');
            }
        }
    }
    Ok(out)
}
