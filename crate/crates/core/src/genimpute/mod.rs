//! Generative imputation: rows are serialized into questions, a backend
//! trained on (question, answer) pairs from the complete rows answers the
//! questions for incomplete rows, and validated answers replace the masked
//! cells. Answers that cannot be parsed fall back to a mean/mode imputer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::impute::{Imputer, MeanImputer};
use crate::table::{CellRef, ColumnKind, Table};

mod local;
mod prompt;
mod remote;

pub use local::LocalBackend;
pub use prompt::{
    build_finetune_pairs, join_and, parse_completion, parse_prompt, serialize_row_to_prompt,
    ParsedPrompt, PromptPair, PromptTemplate,
};
pub use remote::{
    CompleteRequest, CompleteResponse, FinetuneRequest, FinetuneResponse, JobState, JobStatus,
    RemoteBackend, RemoteConfig, WirePair,
};

/// Maximum new tokens requested per target column.
pub const TOKENS_PER_TARGET: usize = 16;

/// A text model that can be adapted on prompt/completion pairs.
pub trait GenerativeBackend: Send + Sync {
    fn fit(&mut self, pairs: &[PromptPair]) -> Result<()>;

    /// Temperature 0 must be deterministic given the fitted state.
    fn generate(&self, prompt: &str, max_new_tokens: usize, temperature: f64) -> Result<String>;
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImputationAudit {
    pub n_prompts: usize,
    /// Target cells filled by the fallback because the completion was unusable.
    pub n_parse_fallbacks: usize,
    pub fallback_cells: Vec<CellRef>,
    /// Cells filled by the backend.
    pub n_generated: usize,
    /// Masked Identifier cells (never generation targets), filled by the fallback.
    pub non_target_cells: Vec<CellRef>,
}

pub struct GenerativeImputer {
    backend: Box<dyn GenerativeBackend>,
    tpl: PromptTemplate,
    fallback: MeanImputer,
    fitted: bool,
    pub temperature: f64,
    /// Concurrent generate calls.
    pub max_in_flight: usize,
}

impl GenerativeImputer {
    pub fn new(backend: Box<dyn GenerativeBackend>, tpl: PromptTemplate) -> Self {
        GenerativeImputer {
            backend,
            tpl,
            fallback: MeanImputer::new(),
            fitted: false,
            temperature: 0.0,
            max_in_flight: 4,
        }
    }

    pub fn template(&self) -> &PromptTemplate {
        &self.tpl
    }

    /// Fill every masked cell of `t`, one prompt per incomplete row.
    pub fn impute_with_audit(&self, t: &Table) -> Result<(Table, ImputationAudit)> {
        if !self.fitted {
            return Err(Error::NotFitted);
        }
        let jobs: Vec<(usize, Vec<usize>, String)> = (0..t.n_rows())
            .filter_map(|r| {
                let targets: Vec<usize> = t
                    .missing_in_row(r)
                    .into_iter()
                    .filter(|&c| t.kind(c) != ColumnKind::Identifier)
                    .collect();
                (!targets.is_empty()).then_some((r, targets))
            })
            .map(|(r, targets)| {
                serialize_row_to_prompt(t, r, &targets, &self.tpl).map(|p| (r, targets, p))
            })
            .collect::<Result<_>>()?;

        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.max_in_flight.max(1))
            .build()
            .map_err(|e| Error::Data(e.to_string()))?;
        let completions: Vec<String> = pool.install(|| {
            use rayon::prelude::*;
            jobs.par_iter()
                .map(|(_, targets, p)| {
                    self.backend
                        .generate(p, TOKENS_PER_TARGET * targets.len(), self.temperature)
                })
                .collect::<Result<_>>()
        })?;

        let mut out = t.clone();
        let mut audit = ImputationAudit {
            n_prompts: jobs.len(),
            ..Default::default()
        };
        for ((r, targets, _), raw) in jobs.iter().zip(&completions) {
            match parse_completion(raw, targets, t) {
                Some(values) => {
                    for (&c, v) in targets.iter().zip(values) {
                        out.fill(CellRef::new(*r, c), v)?;
                        audit.n_generated += 1;
                    }
                }
                None => {
                    for &c in targets {
                        audit.fallback_cells.push(CellRef::new(*r, c));
                    }
                }
            }
        }
        audit.n_parse_fallbacks = audit.fallback_cells.len();
        audit.non_target_cells = out
            .masked_cells()
            .into_iter()
            .filter(|cell| t.kind(cell.col) == ColumnKind::Identifier)
            .collect();
        let rest = out.masked_cells();
        crate::impute::fill_with(&mut out, &self.fallback, &rest)?;
        Ok((out, audit))
    }
}

impl Imputer for GenerativeImputer {
    fn name(&self) -> &'static str {
        "llm"
    }

    /// Build single-target pairs from the complete rows, adapt the backend on
    /// them and fit the mean/mode fallback.
    fn fit(&mut self, complete: &Table) -> Result<()> {
        let pairs = build_finetune_pairs(complete, &self.tpl)?;
        self.backend.fit(&pairs)?;
        self.fallback.fit(complete)?;
        self.fitted = true;
        Ok(())
    }

    fn impute(&self, t: &Table) -> Result<Table> {
        self.impute_with_audit(t).map(|(t, _)| t)
    }
}
