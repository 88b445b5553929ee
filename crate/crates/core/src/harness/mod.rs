//! Experiment pipeline: inject → impute → train → evaluate → report.
//!
//! Each stage reads the artifacts of the previous one from the run directory
//! and writes its own, so stages can be re-run independently and the fused
//! [`run_experiment`] is exactly the four stages in sequence.
//!
//! Run directory layout:
//!
//! ```text
//! schema.toml                 dataset schema after `drop_columns`
//! injected.csv, ledger.json   inject
//! imputed_<name>.csv          impute (deletion: the surviving rows)
//! imputation_<name>.json      masked-cell scores and imputer diagnostics
//! model_<name>.json           train (checkpoint)
//! training_<name>.json        per-epoch loss, row counts
//! results.jsonl               evaluate, one RunResult per line
//! report.md, report.csv       evaluate / report
//! timings.json                wall-clock seconds per stage and imputer
//! ```
//!
//! Imputation runs on the whole dataset before the 60/20/20 split. Scores
//! are computed against the pre-injection values of the evaluated rows.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genimpute::{
    GenerativeBackend, GenerativeImputer, LocalBackend, PromptTemplate, RemoteBackend,
};
use crate::impute::{
    casewise_delete, Imputer, ImputerName, IterativeImputer, IterativeReport, KnnImputer,
    MeanImputer, ZeroImputer,
};
use crate::metrics::{precision_recall_f1, regression_errors, BinaryConfusion};
use crate::missingness::{inject_mcar, masked_cell_score, restore, MaskLedger, MaskedCellScore};
use crate::recsys::{
    self, evaluate_ranking, ranking_training_table, user_holdout, ItemCatalog, RecModel,
};
use crate::table::{split_indices, Table, TableSchema};

pub mod cli;
mod config;
mod report;

pub use config::{ExperimentConfig, ExperimentTask, LlmBackendKind, Seeds, ENDPOINT_ENV};
pub use report::{emit_report, metric_columns, ReportFormat};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerativeSummary {
    pub n_prompts: usize,
    pub n_parse_fallbacks: usize,
    pub n_generated: usize,
    pub n_non_target: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ImputationSummary {
    pub masked_cells: usize,
    pub rows_in: usize,
    pub rows_out: usize,
    pub score: Option<MaskedCellScore>,
    pub iterative: Option<IterativeReport>,
    pub generative: Option<GenerativeSummary>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub n_train: usize,
    pub n_eval: usize,
    pub epoch_loss: Vec<f64>,
}

/// Outcome of one imputer in one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub imputer: ImputerName,
    pub task: ExperimentTask,
    /// Headline metrics in report column order; `None` when no rows could be
    /// evaluated (e.g. deletion removed everything).
    pub metrics: IndexMap<String, Option<f64>>,
    /// Per-class precision/recall/F1 for the click task.
    pub per_class: Option<IndexMap<String, Option<f64>>>,
    pub imputation: ImputationSummary,
    pub training: TrainingSummary,
    pub seeds: Seeds,
}

/// Paths of a run directory.
#[derive(Clone, Debug)]
pub struct RunDir(pub PathBuf);

impl RunDir {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        RunDir(path.into())
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }

    pub fn schema(&self) -> PathBuf {
        self.path("schema.toml")
    }
    pub fn injected(&self) -> PathBuf {
        self.path("injected.csv")
    }
    pub fn ledger(&self) -> PathBuf {
        self.path("ledger.json")
    }
    pub fn imputed(&self, n: ImputerName) -> PathBuf {
        self.path(&format!("imputed_{n}.csv"))
    }
    pub fn imputation(&self, n: ImputerName) -> PathBuf {
        self.path(&format!("imputation_{n}.json"))
    }
    pub fn model(&self, n: ImputerName) -> PathBuf {
        self.path(&format!("model_{n}.json"))
    }
    pub fn training(&self, n: ImputerName) -> PathBuf {
        self.path(&format!("training_{n}.json"))
    }
    pub fn results(&self) -> PathBuf {
        self.path("results.jsonl")
    }
    pub fn timings(&self) -> PathBuf {
        self.path("timings.json")
    }
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(v).map_err(|e| Error::Serde(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Serde(format!("{}: {e}", path.display())))
}

fn record_timing(
    run: &RunDir,
    stage: &str,
    imputer: Option<ImputerName>,
    seconds: f64,
) -> Result<()> {
    let path = run.timings();
    let mut all: BTreeMap<String, f64> = if path.exists() {
        read_json(&path)?
    } else {
        BTreeMap::new()
    };
    let key = match imputer {
        Some(n) => format!("{stage}/{n}"),
        None => stage.to_string(),
    };
    all.insert(key, seconds);
    write_json(&path, &all)
}

fn load_run_schema(run: &RunDir) -> Result<TableSchema> {
    TableSchema::from_file(run.schema())
}

fn load_table(path: &Path, schema: &TableSchema) -> Result<Table> {
    // Imputed CSVs use the default dialect regardless of the dataset's tokens.
    Table::load_csv(path, schema, &["".to_string()])
}

/// Stage 1: load the dataset, drop configured columns, inject MCAR gaps.
pub fn stage_inject(cfg: &ExperimentConfig, run: &RunDir) -> Result<MaskLedger> {
    let start = Instant::now();
    std::fs::create_dir_all(&run.0).map_err(|e| Error::io(&run.0, e))?;
    let schema = TableSchema::from_file(&cfg.schema)?;
    let data = Table::load_csv(&cfg.dataset, &schema, &cfg.missing_tokens())?;
    let data = if cfg.drop_columns.is_empty() {
        data
    } else {
        data.drop_columns(&cfg.drop_columns)?
    };
    // Imputed tables may hold values outside declared vocabularies (`UNK`).
    let mut run_schema = data.schema().clone();
    for c in &mut run_schema.columns {
        c.vocabulary = None;
    }
    std::fs::write(run.schema(), run_schema.to_toml()).map_err(|e| Error::io(run.schema(), e))?;

    let columns = match &cfg.inject_columns {
        Some(c) => c.clone(),
        None => {
            crate::missingness::default_injection_columns(data.schema(), cfg.inject_identifiers)
        }
    };
    let (injected, ledger) = inject_mcar(&data, cfg.missing_p, cfg.seed_injection, Some(&columns))?;
    injected.write_csv(run.injected())?;
    ledger.write(run.ledger())?;
    record_timing(run, "inject", None, start.elapsed().as_secs_f64())?;
    Ok(ledger)
}

fn generative_backend(
    cfg: &ExperimentConfig,
    tpl: &PromptTemplate,
) -> Result<Box<dyn GenerativeBackend>> {
    Ok(match cfg.llm_backend {
        LlmBackendKind::Local => Box::new(LocalBackend::new(tpl.clone(), cfg.seed_training)),
        LlmBackendKind::Remote => Box::new(RemoteBackend::new(cfg.remote_config()?)),
    })
}

/// Fill (or, for deletion, drop) the masked cells of `injected` with one
/// imputer fitted on the complete rows.
pub fn impute_one(
    cfg: &ExperimentConfig,
    name: ImputerName,
    injected: &Table,
) -> Result<(Table, ImputationSummary)> {
    let (complete, _) = crate::table::split_complete_incomplete(injected);
    let mut summary = ImputationSummary {
        masked_cells: injected.n_missing(),
        rows_in: injected.n_rows(),
        ..Default::default()
    };
    let fitted = |mut imp: Box<dyn Imputer>| -> Result<Box<dyn Imputer>> {
        imp.fit(&complete)?;
        Ok(imp)
    };
    let out = match name {
        ImputerName::Deletion => casewise_delete(injected),
        ImputerName::Zero => fitted(Box::new(ZeroImputer))?.impute(injected)?,
        ImputerName::Mean => fitted(Box::new(MeanImputer::new()))?.impute(injected)?,
        ImputerName::Knn => {
            fitted(Box::new(KnnImputer::new(cfg.knn_config())?))?.impute(injected)?
        }
        ImputerName::Iterative => {
            let mut imp = IterativeImputer::new(cfg.iterative_config())?;
            imp.fit(&complete)?;
            let (t, report) = imp.impute_with_report(injected)?;
            summary.iterative = Some(report);
            t
        }
        ImputerName::Llm => {
            let tpl = PromptTemplate::for_table(&complete);
            let mut imp = GenerativeImputer::new(generative_backend(cfg, &tpl)?, tpl);
            imp.temperature = cfg.llm_temperature;
            imp.max_in_flight = cfg.llm_max_in_flight;
            imp.fit(&complete)?;
            let (t, audit) = imp.impute_with_audit(injected)?;
            summary.generative = Some(GenerativeSummary {
                n_prompts: audit.n_prompts,
                n_parse_fallbacks: audit.n_parse_fallbacks,
                n_generated: audit.n_generated,
                n_non_target: audit.non_target_cells.len(),
            });
            t
        }
    };
    summary.rows_out = out.n_rows();
    Ok((out, summary))
}

/// Stage 2: one imputed table per configured imputer.
pub fn stage_impute(cfg: &ExperimentConfig, run: &RunDir) -> Result<()> {
    let schema = load_run_schema(run)?;
    let injected = load_table(&run.injected(), &schema)?;
    let ledger = MaskLedger::read(run.ledger(), &schema)?;
    for name in cfg.imputer_names()? {
        let start = Instant::now();
        let (imputed, mut summary) = impute_one(cfg, name, &injected)?;
        if name != ImputerName::Deletion {
            summary.score = Some(masked_cell_score(&imputed, &ledger)?);
        }
        imputed.write_csv(run.imputed(name))?;
        write_json(&run.imputation(name), &summary)?;
        record_timing(run, "impute", Some(name), start.elapsed().as_secs_f64())?;
    }
    Ok(())
}

/// Rows of the injected table that a given imputer's output holds, in order.
fn surviving_rows(name: ImputerName, injected: &Table) -> Vec<usize> {
    (0..injected.n_rows())
        .filter(|&r| name != ImputerName::Deletion || !injected.row_has_missing(r))
        .collect()
}

/// Train and evaluation row positions within the imputed table. Every
/// imputer shares the split of the injected table's row indices; deletion
/// keeps the surviving rows of each part.
fn partition(
    cfg: &ExperimentConfig,
    name: ImputerName,
    injected: &Table,
) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let split = split_indices(injected.n_rows(), &cfg.split_spec())?;
    let rows = surviving_rows(name, injected);
    let mut pos = vec![usize::MAX; injected.n_rows()];
    for (i, &r) in rows.iter().enumerate() {
        pos[r] = i;
    }
    let map = |idx: &[usize]| -> Vec<usize> {
        idx.iter()
            .map(|&r| pos[r])
            .filter(|&p| p != usize::MAX)
            .collect()
    };
    Ok((map(&split.train), map(&split.test), rows))
}

struct RankingSetup {
    holdout: crate::recsys::UserHoldout,
    catalog: ItemCatalog,
    user_col: usize,
}

fn ranking_setup(cfg: &ExperimentConfig, imputed: &Table) -> Result<RankingSetup> {
    let col = |name: &Option<String>| -> Result<Option<usize>> {
        name.as_deref().map(|n| imputed.col_index(n)).transpose()
    };
    let user_col =
        col(&cfg.user_column)?.ok_or_else(|| Error::Config("user_column is required".into()))?;
    let item_col =
        col(&cfg.item_column)?.ok_or_else(|| Error::Config("item_column is required".into()))?;
    let ts_col = col(&cfg.timestamp_column)?;
    let label_col = imputed
        .col_index(&cfg.label)
        .map_err(|_| Error::MissingLabel(cfg.label.clone()))?;
    Ok(RankingSetup {
        holdout: user_holdout(imputed, user_col, ts_col, cfg.holdout_frac)?,
        catalog: ItemCatalog::build(imputed, item_col, label_col)?,
        user_col,
    })
}

/// Stage 3: train one recommender per imputed table.
pub fn stage_train(cfg: &ExperimentConfig, run: &RunDir) -> Result<()> {
    let schema = load_run_schema(run)?;
    let injected = load_table(&run.injected(), &schema)?;
    for name in cfg.imputer_names()? {
        let start = Instant::now();
        let imputed = load_table(&run.imputed(name), &schema)?;
        let (train_table, n_eval) = match cfg.task {
            ExperimentTask::MultiClassification => {
                let s = ranking_setup(cfg, &imputed)?;
                let label_col = imputed.col_index(&cfg.label)?;
                let t = ranking_training_table(
                    &imputed,
                    &s.holdout.train,
                    s.user_col,
                    label_col,
                    &s.catalog,
                    cfg.train_negatives,
                    cfg.seed_ranking,
                )?;
                (t, s.holdout.test.len())
            }
            _ => {
                let (train, test, _) = partition(cfg, name, &injected)?;
                (imputed.take_rows(&train), test.len())
            }
        };
        let (model, log) = recsys::train(&train_table, &cfg.rec_config())?;
        model.save(run.model(name))?;
        write_json(
            &run.training(name),
            &TrainingSummary {
                n_train: train_table.n_rows(),
                n_eval,
                epoch_loss: log.epoch_loss,
            },
        )?;
        record_timing(run, "train", Some(name), start.elapsed().as_secs_f64())?;
    }
    Ok(())
}

type Metrics = IndexMap<String, Option<f64>>;

fn evaluate_one(
    cfg: &ExperimentConfig,
    name: ImputerName,
    injected: &Table,
    original: &Table,
    imputed: &Table,
    model: &RecModel,
) -> Result<(Metrics, Option<Metrics>)> {
    let mut metrics = IndexMap::new();
    if cfg.task == ExperimentTask::MultiClassification {
        let s = ranking_setup(cfg, imputed)?;
        let scores = evaluate_ranking(
            model,
            imputed,
            &s.holdout,
            s.user_col,
            &s.catalog,
            &cfg.ranking_protocol(),
            cfg.seed_ranking,
        )?;
        let empty = s.holdout.test.is_empty();
        for (k, v) in scores {
            metrics.insert(k, (!empty).then_some(v));
        }
        return Ok((metrics, None));
    }

    let (_, test, rows) = partition(cfg, name, injected)?;
    let label_col = original.col_index(&cfg.label)?;
    let truth: Vec<f64> = test
        .iter()
        .map(|&p| original.num(rows[p], label_col).ok_or(Error::MaskedInput))
        .collect::<Result<_>>()?;
    let pred = if test.is_empty() {
        Vec::new()
    } else {
        model.predict(&imputed.take_rows(&test))?
    };
    let names = metric_columns(cfg.task, &cfg.k_values);
    if cfg.task == ExperimentTask::Regression {
        let e = regression_errors(&pred, &truth).ok();
        for (key, v) in names
            .iter()
            .zip([e.map(|e| e.mae), e.map(|e| e.mse), e.map(|e| e.rmse)])
        {
            metrics.insert(key.0.clone(), v);
        }
        return Ok((metrics, None));
    }

    let truth: Vec<bool> = truth.iter().map(|&y| y >= 0.5).collect();
    let any = !truth.is_empty();
    let conf = BinaryConfusion::from_scores(&pred, &truth, cfg.threshold)?;
    let (p, r, f) = precision_recall_f1(&conf);
    for (key, v) in names.iter().zip([p, r, f]) {
        metrics.insert(key.0.clone(), any.then_some(v));
    }
    let mut per_class = IndexMap::new();
    for (label, c) in [("0", conf.flipped()), ("1", conf)] {
        let (p, r, f) = precision_recall_f1(&c);
        per_class.insert(format!("precision_{label}"), any.then_some(p));
        per_class.insert(format!("recall_{label}"), any.then_some(r));
        per_class.insert(format!("f1_{label}"), any.then_some(f));
    }
    Ok((metrics, Some(per_class)))
}

/// Stage 4: score every trained model, write `results.jsonl` and the reports.
pub fn stage_evaluate(cfg: &ExperimentConfig, run: &RunDir) -> Result<Vec<RunResult>> {
    let schema = load_run_schema(run)?;
    let injected = load_table(&run.injected(), &schema)?;
    let ledger = MaskLedger::read(run.ledger(), &schema)?;
    let original = restore(&injected, &ledger)?;
    let mut results = Vec::new();
    for name in cfg.imputer_names()? {
        let start = Instant::now();
        let imputed = load_table(&run.imputed(name), &schema)?;
        let model = RecModel::load(run.model(name))?;
        let (metrics, per_class) = evaluate_one(cfg, name, &injected, &original, &imputed, &model)?;
        results.push(RunResult {
            imputer: name,
            task: cfg.task,
            metrics,
            per_class,
            imputation: read_json(&run.imputation(name))?,
            training: read_json(&run.training(name))?,
            seeds: cfg.seeds(),
        });
        record_timing(run, "evaluate", Some(name), start.elapsed().as_secs_f64())?;
    }
    write_results(&run.results(), &results)?;
    write_reports(run, &results)?;
    Ok(results)
}

pub fn write_results(path: &Path, results: &[RunResult]) -> Result<()> {
    let mut text = String::new();
    for r in results {
        text += &serde_json::to_string(r).map_err(|e| Error::Serde(e.to_string()))?;
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_results(path: &Path) -> Result<Vec<RunResult>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| Error::Serde(format!("{}: {e}", path.display())))
        })
        .collect()
}

pub fn write_reports(run: &RunDir, results: &[RunResult]) -> Result<()> {
    for (fmt, file) in [
        (ReportFormat::Markdown, "report.md"),
        (ReportFormat::Csv, "report.csv"),
    ] {
        let path = run.path(file);
        std::fs::write(&path, emit_report(results, fmt)?).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// The whole grid: every stage in order, through the run directory.
pub fn run_experiment(cfg: &ExperimentConfig, out: impl Into<PathBuf>) -> Result<Vec<RunResult>> {
    let run = RunDir::new(out);
    stage_inject(cfg, &run)?;
    stage_impute(cfg, &run)?;
    stage_train(cfg, &run)?;
    stage_evaluate(cfg, &run)
}
