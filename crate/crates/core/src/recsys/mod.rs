//! A small DLRM-style recommender: embeddings for categorical and identifier
//! columns, an affine projection of standardized numeric columns, pairwise
//! dot-product interactions and a tanh MLP.
//!
//! Training is plain minibatch gradient descent (`θ ← θ − lr·∇L`) over rows
//! shuffled each epoch by the seeded generator, so a fixed seed reproduces the
//! exact parameters. Loss is log-loss for click prediction and mean squared
//! error for rating regression and ranking.

use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::table::{ColumnKind, Table, TableSchema};

mod net;
mod ranking;

pub use net::Layout;
pub use ranking::{
    evaluate_ranking, item_order, rank_topk, ranking_training_table, user_holdout, ItemCatalog,
    RankingProtocol, UserHoldout,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    BinaryClick,
    RatingRegression,
    TopKRanking,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecModelConfig {
    pub embedding_dim: usize,
    pub hidden_layers: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub task: Task,
    /// Label column (click indicator, rating or interaction strength).
    pub label: String,
}

impl RecModelConfig {
    pub fn new(task: Task, label: &str) -> Self {
        RecModelConfig {
            embedding_dim: 16,
            hidden_layers: vec![64, 32],
            learning_rate: 1e-3,
            epochs: 5,
            batch_size: 256,
            seed: 0,
            task,
            label: label.to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 || self.hidden_layers.contains(&0) || self.batch_size == 0 {
            return Err(Error::Config(
                "embedding_dim, hidden widths and batch_size must be ≥ 1".into(),
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// How one input column is encoded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Encoder {
    Embedding { vocab: Vec<String> },
    Standardize { mean: f64, std: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    pub kind: ColumnKind,
    pub encoder: Encoder,
}

/// Encoded inputs of a batch of rows.
struct Encoded {
    cats: Vec<Vec<u32>>,
    dense: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecModel {
    pub config: RecModelConfig,
    pub features: Vec<Feature>,
    /// Clamp range for rating predictions.
    pub rating_range: [f64; 2],
    pub layout: Layout,
    pub params: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    /// Mean per-example training loss of each epoch.
    pub epoch_loss: Vec<f64>,
}

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    model: RecModel,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 1.0);
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64;
    (m, if v > 0.0 { v.sqrt() } else { 1.0 })
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl RecModel {
    /// Features are every column except the label; the model is initialized
    /// but not trained.
    pub fn init(data: &Table, cfg: &RecModelConfig) -> Result<RecModel> {
        cfg.validate()?;
        let label_col = data
            .col_index(&cfg.label)
            .map_err(|_| Error::MissingLabel(cfg.label.clone()))?;
        if data.kind(label_col) != ColumnKind::Numeric {
            return Err(Error::MissingLabel(format!(
                "{} (label must be numeric)",
                cfg.label
            )));
        }
        let mut features = Vec::new();
        for (c, cs) in data.schema().columns.iter().enumerate() {
            if c == label_col {
                continue;
            }
            let encoder = match cs.kind {
                ColumnKind::Numeric => {
                    let (mean, std) = mean_std(&data.observed_nums(c));
                    Encoder::Standardize { mean, std }
                }
                _ => Encoder::Embedding {
                    vocab: data
                        .vocab(c)
                        .expect("categorical")
                        .iter()
                        .cloned()
                        .collect(),
                },
            };
            features.push(Feature {
                name: cs.name.clone(),
                kind: cs.kind,
                encoder,
            });
        }
        let vocab_sizes: Vec<usize> = features
            .iter()
            .filter_map(|f| match &f.encoder {
                Encoder::Embedding { vocab } => Some(vocab.len()),
                _ => None,
            })
            .collect();
        let n_dense = features.len() - vocab_sizes.len();
        let layout = Layout::new(cfg.embedding_dim, &vocab_sizes, n_dense, &cfg.hidden_layers);

        let mut rng = rng::substream(cfg.seed, 0);
        let mut params = vec![0.0; layout.total];
        for (range, fan_in) in layout.init_groups() {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in &mut params[range] {
                *p = rng.random_range(-bound..bound);
            }
        }
        // Start the output at the label mean (log-odds for clicks).
        let labels = data.observed_nums(label_col);
        if !labels.is_empty() {
            let m = labels.iter().sum::<f64>() / labels.len() as f64;
            params[layout.output_bias()] = match cfg.task {
                Task::BinaryClick => {
                    let p = m.clamp(1e-3, 1.0 - 1e-3);
                    (p / (1.0 - p)).ln()
                }
                _ => m,
            };
        }
        let rating_range = data.schema().columns[label_col].range.unwrap_or([0.0, 5.0]);
        Ok(RecModel {
            config: cfg.clone(),
            features,
            rating_range,
            layout,
            params,
        })
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn encode(&self, rows: &Table) -> Result<Encoded> {
        let mut cols = Vec::with_capacity(self.features.len());
        for f in &self.features {
            let c = rows.col_index(&f.name).map_err(|_| {
                Error::SchemaMismatch(format!("missing feature column `{}`", f.name))
            })?;
            let same_family =
                (rows.kind(c) == ColumnKind::Numeric) == (f.kind == ColumnKind::Numeric);
            if !same_family {
                return Err(Error::SchemaMismatch(format!(
                    "feature column `{}` changed kind",
                    f.name
                )));
            }
            if rows.column(c).n_missing() > 0 {
                return Err(Error::MaskedInput);
            }
            cols.push(c);
        }
        let n = rows.n_rows();
        let mut cats = vec![Vec::new(); n];
        let mut dense = vec![Vec::new(); n];
        for (f, &c) in self.features.iter().zip(&cols) {
            match &f.encoder {
                Encoder::Standardize { mean, std } => {
                    for (r, d) in dense.iter_mut().enumerate() {
                        d.push((rows.num(r, c).expect("observed") - mean) / std);
                    }
                }
                Encoder::Embedding { vocab } => {
                    // Map the table's codes onto the model vocabulary by string.
                    let oov = vocab.len() as u32;
                    let lookup: std::collections::HashMap<&str, u32> = vocab
                        .iter()
                        .enumerate()
                        .map(|(i, s)| (s.as_str(), i as u32))
                        .collect();
                    let table_vocab = rows.vocab(c).expect("categorical");
                    let map: Vec<u32> = table_vocab
                        .iter()
                        .map(|s| lookup.get(s.as_str()).copied().unwrap_or(oov))
                        .collect();
                    for (r, k) in cats.iter_mut().enumerate() {
                        k.push(map[rows.code(r, c).expect("observed") as usize]);
                    }
                }
            }
        }
        Ok(Encoded { cats, dense })
    }

    fn labels(&self, data: &Table) -> Result<Vec<f64>> {
        let c = data
            .col_index(&self.config.label)
            .map_err(|_| Error::MissingLabel(self.config.label.clone()))?;
        (0..data.n_rows())
            .map(|r| data.num(r, c).ok_or(Error::MaskedInput))
            .collect()
    }

    fn head(&self, z: f64) -> f64 {
        match self.config.task {
            Task::BinaryClick => sigmoid(z),
            Task::RatingRegression => z.clamp(self.rating_range[0], self.rating_range[1]),
            Task::TopKRanking => z,
        }
    }

    /// Per-example loss and its derivative with respect to the raw output.
    fn loss(&self, z: f64, y: f64) -> (f64, f64) {
        match self.config.task {
            Task::BinaryClick => {
                let loss = z.max(0.0) - y * z + (-z.abs()).exp().ln_1p();
                (loss, sigmoid(z) - y)
            }
            Task::RatingRegression | Task::TopKRanking => ((z - y) * (z - y), 2.0 * (z - y)),
        }
    }

    /// Mean loss and its gradient over the given rows of an encoded batch.
    fn loss_and_grad(
        &self,
        enc: &Encoded,
        labels: &[f64],
        rows: &[usize],
        grad: &mut [f64],
    ) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut cache = net::Cache::default();
        let scale = 1.0 / rows.len() as f64;
        let mut total = 0.0;
        for &r in rows {
            let z = net::forward(
                &self.layout,
                &self.params,
                &enc.cats[r],
                &enc.dense[r],
                &mut cache,
            );
            let (l, dz) = self.loss(z, labels[r]);
            total += l;
            net::backward(
                &self.layout,
                &self.params,
                &enc.cats[r],
                &enc.dense[r],
                &cache,
                dz * scale,
                grad,
            );
        }
        total * scale
    }

    fn mean_loss(&self, enc: &Encoded, labels: &[f64], rows: &[usize]) -> f64 {
        let mut cache = net::Cache::default();
        rows.iter()
            .map(|&r| {
                let z = net::forward(
                    &self.layout,
                    &self.params,
                    &enc.cats[r],
                    &enc.dense[r],
                    &mut cache,
                );
                self.loss(z, labels[r]).0
            })
            .sum::<f64>()
            / rows.len() as f64
    }

    pub fn predict(&self, rows: &Table) -> Result<Vec<f64>> {
        let enc = self.encode(rows)?;
        let mut cache = net::Cache::default();
        Ok((0..rows.n_rows())
            .map(|r| {
                self.head(net::forward(
                    &self.layout,
                    &self.params,
                    &enc.cats[r],
                    &enc.dense[r],
                    &mut cache,
                ))
            })
            .collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&Checkpoint {
            version: CHECKPOINT_VERSION,
            model: self.clone(),
        })
        .expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<RecModel> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Serde(e.to_string()))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Serde(format!(
                "unsupported checkpoint version {}",
                ck.version
            )));
        }
        if ck.model.params.len() != ck.model.layout.total {
            return Err(Error::Serde(
                "checkpoint parameter count does not match its layout".into(),
            ));
        }
        Ok(ck.model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<RecModel> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Feature schema the model expects (label excluded).
    pub fn feature_schema(&self) -> TableSchema {
        TableSchema {
            columns: self
                .features
                .iter()
                .map(|f| crate::table::ColumnSchema::new(&f.name, f.kind))
                .collect(),
        }
    }
}

/// Train a model on `data` (every column but the label is a feature).
pub fn train(data: &Table, cfg: &RecModelConfig) -> Result<(RecModel, TrainingLog)> {
    if data.n_missing() > 0 {
        return Err(Error::MaskedInput);
    }
    let mut model = RecModel::init(data, cfg)?;
    let enc = model.encode(data)?;
    let labels = model.labels(data)?;
    let mut log = TrainingLog::default();
    if data.n_rows() == 0 {
        return Ok((model, log));
    }
    let mut order: Vec<usize> = (0..data.n_rows()).collect();
    let mut shuffle_rng = rng::substream(cfg.seed, 1);
    let mut grad = vec![0.0; model.params.len()];
    for _ in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let loss = model.loss_and_grad(&enc, &labels, batch, &mut grad);
            epoch_total += loss * batch.len() as f64;
            for (p, g) in model.params.iter_mut().zip(&grad) {
                *p -= cfg.learning_rate * g;
            }
            if !model.params.iter().all(|p| p.is_finite()) {
                return Err(Error::Data(
                    "training diverged (non-finite parameters); lower the learning rate".into(),
                ));
            }
        }
        log.epoch_loss.push(epoch_total / data.n_rows() as f64);
    }
    Ok((model, log))
}

/// Largest relative error between backpropagated gradients and central
/// finite differences (step `1e-4`) over up to `n_checks` parameters sampled
/// with the config seed. Relative error is `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn grad_check_model(model: &RecModel, sample: &Table, n_checks: usize) -> Result<f64> {
    if sample.n_rows() > 32 {
        return Err(Error::Data(
            "gradient check sample must have at most 32 rows".into(),
        ));
    }
    let enc = model.encode(sample)?;
    let labels = model.labels(sample)?;
    let rows: Vec<usize> = (0..sample.n_rows()).collect();
    let mut grad = vec![0.0; model.params.len()];
    model.loss_and_grad(&enc, &labels, &rows, &mut grad);

    let n = model.params.len();
    let picks = index::sample(
        &mut rng::substream(model.config.seed, 2),
        n,
        n_checks.min(n),
    )
    .into_vec();
    let h = 1e-4;
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for i in picks {
        let orig = probe.params[i];
        probe.params[i] = orig + h;
        let up = probe.mean_loss(&enc, &labels, &rows);
        probe.params[i] = orig - h;
        let down = probe.mean_loss(&enc, &labels, &rows);
        probe.params[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let analytic = grad[i];
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// Gradient check of a freshly initialized model.
pub fn grad_check(cfg: &RecModelConfig, sample: &Table) -> Result<f64> {
    let model = RecModel::init(sample, cfg)?;
    grad_check_model(&model, sample, 128)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{ColumnSchema, Value};

    fn click_data(n: usize) -> Table {
        let schema = TableSchema::new(vec![
            ColumnSchema::categorical("site"),
            ColumnSchema::numeric("hour"),
            ColumnSchema::numeric("click").with_range(0.0, 1.0),
        ])
        .unwrap();
        let rows: Vec<Vec<Option<Value>>> = (0..n)
            .map(|i| {
                let site = ["a", "b", "c", "d"][i % 4];
                vec![
                    Some(Value::Cat(site.into())),
                    Some(Value::Num((i % 24) as f64)),
                    Some(Value::Num(if site == "b" { 1.0 } else { 0.0 })),
                ]
            })
            .collect();
        Table::from_rows(schema, &rows).unwrap()
    }

    #[test]
    fn separable_clicks() {
        let data = click_data(400);
        let mut cfg = RecModelConfig::new(Task::BinaryClick, "click");
        cfg.epochs = 2;
        cfg.batch_size = 8;
        cfg.learning_rate = 0.1;
        let (model, log) = train(&data, &cfg).unwrap();
        let scores = model.predict(&data).unwrap();
        let acc = scores
            .iter()
            .zip(0..)
            .filter(|(s, r)| (**s >= 0.5) == (data.num(*r, 2).unwrap() >= 0.5))
            .count() as f64
            / data.n_rows() as f64;
        assert!(acc >= 0.95, "accuracy {acc}, log {:?}", log);
    }

    #[test]
    fn zero_epochs_predictions_in_range() {
        let data = click_data(20);
        let mut cfg = RecModelConfig::new(Task::BinaryClick, "click");
        cfg.epochs = 0;
        let (model, log) = train(&data, &cfg).unwrap();
        assert!(log.epoch_loss.is_empty());
        assert!(model
            .predict(&data)
            .unwrap()
            .iter()
            .all(|s| (0.0..=1.0).contains(s)));
    }

    #[test]
    fn masked_input_and_missing_label() {
        let mut data = click_data(10);
        let cfg = RecModelConfig::new(Task::BinaryClick, "nope");
        assert!(matches!(train(&data, &cfg), Err(Error::MissingLabel(_))));
        data.mask_cell(crate::table::CellRef::new(0, 0));
        let cfg = RecModelConfig::new(Task::BinaryClick, "click");
        assert!(matches!(train(&data, &cfg), Err(Error::MaskedInput)));
    }

    #[test]
    fn schema_mismatch() {
        let data = click_data(10);
        let (model, _) = train(&data, &RecModelConfig::new(Task::BinaryClick, "click")).unwrap();
        let other = data.select_columns(&["hour", "click"]).unwrap();
        assert!(matches!(
            model.predict(&other),
            Err(Error::SchemaMismatch(_))
        ));
    }

    #[test]
    fn checkpoint_roundtrip() {
        let data = click_data(50);
        let (model, _) =
            train(&data, &RecModelConfig::new(Task::RatingRegression, "click")).unwrap();
        let back = RecModel::from_json(&model.to_json()).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.predict(&data).unwrap(), model.predict(&data).unwrap());
    }

    #[test]
    fn small_gradient_check() {
        let data = click_data(16);
        for task in [Task::BinaryClick, Task::RatingRegression] {
            let mut cfg = RecModelConfig::new(task, "click");
            cfg.embedding_dim = 4;
            cfg.hidden_layers = vec![8, 4];
            let err = grad_check(&cfg, &data).unwrap();
            assert!(err <= 1e-4, "{task:?}: {err}");
        }
    }
}
