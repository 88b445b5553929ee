//! Built-in generative backend: a smoothed conditional frequency model over
//! completions.
//!
//! For each target column it counts completions under three conditionings:
//! the full prompt context, each single context field, and nothing. A query
//! uses, in order of preference:
//!
//! 1. the counts of training prompts whose context contains every queried
//!    field (an exact match when the query is as rich as the training prompts);
//! 2. a naive-Bayes combination of the per-field conditionals of the fields
//!    that were seen;
//! 3. the column-wide counts.
//!
//! The column-wide distribution uses add-one smoothing; every conditional is
//! smoothed toward it with a single pseudo-count, so rare completions never
//! gain weight from sparse evidence.

use std::collections::HashMap;

use indexmap::IndexSet;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng;

use super::prompt::{join_and, parse_prompt, PromptPair, PromptTemplate};
use super::GenerativeBackend;

type Counts = HashMap<usize, u64>;
type Context = Vec<(usize, String)>;

#[derive(Clone, Debug, Default)]
struct ColumnModel {
    completions: IndexSet<String>,
    full: HashMap<Context, Counts>,
    single: HashMap<(usize, String), Counts>,
    global: Counts,
}

#[derive(Clone, Debug)]
pub struct LocalBackend {
    tpl: PromptTemplate,
    seed: u64,
    models: Option<HashMap<usize, ColumnModel>>,
}

fn bump(counts: &mut Counts, id: usize) {
    *counts.entry(id).or_default() += 1;
}

fn total(counts: &Counts) -> u64 {
    counts.values().sum()
}

/// FNV-1a, used to derive a per-prompt sampling stream.
fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

impl LocalBackend {
    pub fn new(tpl: PromptTemplate, seed: u64) -> Self {
        LocalBackend {
            tpl,
            seed,
            models: None,
        }
    }

    /// Log-probabilities over the completion vocabulary of `target`.
    fn log_probs(&self, model: &ColumnModel, context: &Context) -> Vec<f64> {
        let v = model.completions.len();
        let denom = total(&model.global) as f64 + v as f64;
        let prior: Vec<f64> = (0..v)
            .map(|id| (model.global.get(&id).copied().unwrap_or(0) as f64 + 1.0) / denom)
            .collect();
        let conditional = |counts: &Counts| -> Vec<f64> {
            let n = total(counts) as f64;
            (0..v)
                .map(|id| {
                    ((counts.get(&id).copied().unwrap_or(0) as f64 + prior[id]) / (n + 1.0)).ln()
                })
                .collect()
        };
        if let Some(counts) = model.full.get(context) {
            return conditional(counts);
        }
        let mut matched = Counts::new();
        for (ctx, counts) in &model.full {
            if context.iter().all(|field| ctx.contains(field)) {
                for (&id, &n) in counts {
                    *matched.entry(id).or_default() += n;
                }
            }
        }
        if !matched.is_empty() {
            return conditional(&matched);
        }
        let log_prior: Vec<f64> = prior.iter().map(|p| p.ln()).collect();
        let mut acc = log_prior.clone();
        for counts in context.iter().filter_map(|field| model.single.get(field)) {
            for ((a, lp), p) in acc.iter_mut().zip(conditional(counts)).zip(&log_prior) {
                *a += lp - p;
            }
        }
        acc
    }

    fn complete_one(
        &self,
        model: &ColumnModel,
        context: &Context,
        temperature: f64,
        rng: &mut rng::Rng,
    ) -> String {
        let lp = self.log_probs(model, context);
        let id = if temperature <= 0.0 {
            // First maximum: ties go to the completion seen first in training.
            let mut best = 0;
            for (i, &x) in lp.iter().enumerate() {
                if x > lp[best] {
                    best = i;
                }
            }
            best
        } else {
            let top = lp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = lp
                .iter()
                .map(|&x| ((x - top) / temperature).exp())
                .collect();
            let mut u = rng.random::<f64>() * weights.iter().sum::<f64>();
            let mut pick = weights.len() - 1;
            for (i, w) in weights.iter().enumerate() {
                if u < *w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        };
        model.completions[id].clone()
    }
}

impl GenerativeBackend for LocalBackend {
    fn fit(&mut self, pairs: &[PromptPair]) -> Result<()> {
        if pairs.is_empty() {
            return Err(Error::Data("no fine-tuning pairs".into()));
        }
        let mut models: HashMap<usize, ColumnModel> = HashMap::new();
        for pair in pairs {
            let parsed = parse_prompt(&pair.prompt, &self.tpl)?;
            let [target] = parsed.targets[..] else {
                return Err(Error::Data(format!(
                    "training prompt must have one target: `{}`",
                    pair.prompt
                )));
            };
            let m = models.entry(target).or_default();
            let (id, _) = m.completions.insert_full(pair.completion.clone());
            bump(m.full.entry(parsed.context.clone()).or_default(), id);
            for field in parsed.context {
                bump(m.single.entry(field).or_default(), id);
            }
            bump(&mut m.global, id);
        }
        self.models = Some(models);
        Ok(())
    }

    fn generate(&self, prompt: &str, max_new_tokens: usize, temperature: f64) -> Result<String> {
        let models = self.models.as_ref().ok_or(Error::NotFitted)?;
        let parsed = parse_prompt(prompt, &self.tpl)?;
        let mut rng = rng::substream(self.seed, fnv1a(prompt));
        let values: Vec<String> = parsed
            .targets
            .iter()
            .map(|t| match models.get(t) {
                Some(m) => self.complete_one(m, &parsed.context, temperature, &mut rng),
                None => String::new(),
            })
            .collect();
        let text = join_and(&values);
        Ok(text
            .split_whitespace()
            .take(max_new_tokens)
            .collect::<Vec<_>>()
            .join(" "))
    }
}
