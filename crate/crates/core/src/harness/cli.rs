//! Command-line front end. Exit codes: 0 success, 1 user error (bad flags,
//! config, data or unreachable backend), 2 internal error.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};

use super::{
    emit_report, read_results, stage_evaluate, stage_impute, stage_inject, stage_train,
    write_reports, ExperimentConfig, ReportFormat, RunDir,
};

#[derive(Parser, Debug)]
#[command(
    name = "imputebench",
    version,
    about = "Missing-data imputation benchmark for recommender datasets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory; overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use this value for the injection, split, training and ranking seeds.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Inject MCAR gaps; writes injected.csv and ledger.json.
    Inject(Common),
    /// Impute the injected table with every configured imputer.
    Impute(Common),
    /// Train one recommender per imputed table.
    Train(Common),
    /// Score the trained models; writes results.jsonl and reports.
    Evaluate(Common),
    /// All stages in sequence.
    Run(Common),
    /// Re-render report.md / report.csv from results.jsonl and print one.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "markdown")]
        format: String,
    },
}

fn load(common: &Common) -> Result<(ExperimentConfig, RunDir)> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    if !path.exists() {
        return Err(Error::Config(format!(
            "config file {} not found",
            path.display()
        )));
    }
    let mut cfg = ExperimentConfig::from_file(path)?;
    if let Some(s) = common.seed {
        cfg.set_seed(s);
    }
    let out = common
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| Error::Config("no --out given and no output_dir in the config".into()))?;
    Ok((cfg, RunDir::new(out)))
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Inject(c) => {
            let (cfg, run) = load(&c)?;
            let ledger = stage_inject(&cfg, &run)?;
            println!(
                "masked {} cells; wrote {}",
                ledger.len(),
                run.injected().display()
            );
        }
        Command::Impute(c) => {
            let (cfg, run) = load(&c)?;
            stage_impute(&cfg, &run)?;
        }
        Command::Train(c) => {
            let (cfg, run) = load(&c)?;
            stage_train(&cfg, &run)?;
        }
        Command::Evaluate(c) => {
            let (cfg, run) = load(&c)?;
            let results = stage_evaluate(&cfg, &run)?;
            print!("{}", emit_report(&results, ReportFormat::Markdown)?);
        }
        Command::Run(c) => {
            let (cfg, run) = load(&c)?;
            stage_inject(&cfg, &run)?;
            stage_impute(&cfg, &run)?;
            stage_train(&cfg, &run)?;
            let results = stage_evaluate(&cfg, &run)?;
            print!("{}", emit_report(&results, ReportFormat::Markdown)?);
        }
        Command::Report { common, format } => {
            let format: ReportFormat = format.parse()?;
            let run = match (&common.out, &common.config) {
                (Some(o), _) => RunDir::new(o),
                (None, Some(_)) => load(&common)?.1,
                (None, None) => return Err(Error::Config("report needs --out or --config".into())),
            };
            let results = read_results(&run.results())?;
            write_reports(&run, &results)?;
            print!("{}", emit_report(&results, format)?);
        }
    }
    Ok(())
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_user_error() {
                1
            } else {
                2
            }
        }
    }
}
