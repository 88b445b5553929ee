//! Python bindings: tables, injection, imputers, metrics, the recommender and
//! the experiment runner.

use std::collections::HashSet;
use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use imputebench::genimpute::{
    serialize_row_to_prompt, GenerativeImputer, LocalBackend, PromptTemplate,
};
use imputebench::harness::{self, emit_report, ExperimentConfig, ReportFormat, RunDir};
use imputebench::impute::{
    casewise_delete, Imputer, ImputerName, IterativeConfig, IterativeImputer, KnnConfig,
    KnnImputer, MeanImputer, ZeroImputer,
};
use imputebench::metrics::{self, BinaryConfusion, RankedEval};
use imputebench::missingness::{self, MaskLedger};
use imputebench::recsys::{self, RecModelConfig, Task};
use imputebench::table::{self, default_missing_tokens, TableSchema, Value};

create_exception!(imputebench_py, ImputeBenchError, PyException);

fn err(e: imputebench::Error) -> PyErr {
    ImputeBenchError::new_err(e.to_string())
}

fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(name = "Table", module = "imputebench_py", skip_from_py_object)]
#[derive(Clone)]
struct PyTable {
    inner: table::Table,
}

#[pymethods]
impl PyTable {
    /// Read a CSV file typed by a schema TOML file.
    #[staticmethod]
    #[pyo3(signature = (path, schema_path, missing_tokens=None))]
    fn load_csv(
        path: PathBuf,
        schema_path: PathBuf,
        missing_tokens: Option<Vec<String>>,
    ) -> PyResult<Self> {
        let schema = TableSchema::from_file(schema_path).map_err(err)?;
        let tokens = missing_tokens.unwrap_or_else(default_missing_tokens);
        Ok(PyTable {
            inner: table::Table::load_csv(path, &schema, &tokens).map_err(err)?,
        })
    }

    /// Parse CSV text typed by schema TOML text.
    #[staticmethod]
    #[pyo3(signature = (csv, schema_toml, missing_tokens=None))]
    fn from_csv(
        csv: &str,
        schema_toml: &str,
        missing_tokens: Option<Vec<String>>,
    ) -> PyResult<Self> {
        let schema = TableSchema::from_toml(schema_toml).map_err(err)?;
        let tokens = missing_tokens.unwrap_or_else(default_missing_tokens);
        Ok(PyTable {
            inner: table::Table::parse_csv(csv, &schema, &tokens).map_err(err)?,
        })
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv_string()
    }

    fn schema_toml(&self) -> String {
        self.inner.schema().to_toml()
    }

    #[getter]
    fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }

    #[getter]
    fn n_cols(&self) -> usize {
        self.inner.n_cols()
    }

    #[getter]
    fn columns(&self) -> Vec<String> {
        self.inner.schema().names()
    }

    fn n_missing(&self) -> usize {
        self.inner.n_missing()
    }

    /// Cell value: float, str, or None when masked.
    fn get<'py>(&self, py: Python<'py>, row: usize, column: &str) -> PyResult<Bound<'py, PyAny>> {
        let c = self.inner.col_index(column).map_err(err)?;
        if row >= self.inner.n_rows() {
            return Err(PyValueError::new_err(format!("row {row} out of range")));
        }
        Ok(match self.inner.value(row, c) {
            Some(Value::Num(x)) => x.into_pyobject(py)?.into_any(),
            Some(Value::Cat(s)) => s.into_pyobject(py)?.into_any(),
            None => py.None().into_bound(py),
        })
    }

    fn drop_columns(&self, names: Vec<String>) -> PyResult<Self> {
        Ok(PyTable {
            inner: self.inner.drop_columns(&names).map_err(err)?,
        })
    }

    /// The question asked of the generative imputer for `targets` in `row`.
    fn prompt(&self, row: usize, targets: Vec<String>) -> PyResult<String> {
        let idx: Vec<usize> = targets
            .iter()
            .map(|t| self.inner.col_index(t))
            .collect::<Result<_, _>>()
            .map_err(err)?;
        let tpl = PromptTemplate::for_table(&self.inner);
        serialize_row_to_prompt(&self.inner, row, &idx, &tpl).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.n_rows()
    }

    fn __eq__(&self, other: &PyTable) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!(
            "Table({} rows, {} columns, {} missing)",
            self.inner.n_rows(),
            self.inner.n_cols(),
            self.inner.n_missing()
        )
    }
}

#[pyclass(name = "MaskLedger", module = "imputebench_py", skip_from_py_object)]
#[derive(Clone)]
struct PyLedger {
    inner: MaskLedger,
}

#[pymethods]
impl PyLedger {
    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyfunction]
#[pyo3(signature = (table, p, seed, columns=None))]
fn inject_mcar(
    table: &PyTable,
    p: f64,
    seed: u64,
    columns: Option<Vec<String>>,
) -> PyResult<(PyTable, PyLedger)> {
    let (t, l) =
        missingness::inject_mcar(&table.inner, p, seed, columns.as_deref()).map_err(err)?;
    Ok((PyTable { inner: t }, PyLedger { inner: l }))
}

#[pyfunction]
fn restore(table: &PyTable, ledger: &PyLedger) -> PyResult<PyTable> {
    Ok(PyTable {
        inner: missingness::restore(&table.inner, &ledger.inner).map_err(err)?,
    })
}

/// Numeric RMSE and categorical accuracy over the ledger's cells.
#[pyfunction]
fn masked_cell_score<'py>(
    py: Python<'py>,
    imputed: &PyTable,
    ledger: &PyLedger,
) -> PyResult<Bound<'py, PyAny>> {
    let s = missingness::masked_cell_score(&imputed.inner, &ledger.inner).map_err(err)?;
    json_to_py(
        py,
        &serde_json::to_string(&s).map_err(|e| PyValueError::new_err(e.to_string()))?,
    )
}

/// Fit `method` on the complete rows of `table` and fill its gaps.
#[pyfunction]
#[pyo3(signature = (table, method, k=5, seed=0))]
fn impute(py: Python<'_>, table: &PyTable, method: &str, k: usize, seed: u64) -> PyResult<PyTable> {
    let name: ImputerName = method.parse().map_err(err)?;
    let t = table.inner.clone();
    let out = py.detach(move || -> imputebench::Result<table::Table> {
        let (complete, _) = table::split_complete_incomplete(&t);
        let mut imp: Box<dyn Imputer> = match name {
            ImputerName::Deletion => return Ok(casewise_delete(&t)),
            ImputerName::Zero => Box::new(ZeroImputer),
            ImputerName::Mean => Box::new(MeanImputer::new()),
            ImputerName::Knn => Box::new(KnnImputer::new(KnnConfig {
                k,
                standardize: true,
            })?),
            ImputerName::Iterative => Box::new(IterativeImputer::new(IterativeConfig::default())?),
            ImputerName::Llm => {
                let tpl = PromptTemplate::for_table(&complete);
                Box::new(GenerativeImputer::new(
                    Box::new(LocalBackend::new(tpl.clone(), seed)),
                    tpl,
                ))
            }
        };
        imp.fit(&complete)?;
        imp.impute(&t)
    });
    Ok(PyTable {
        inner: out.map_err(err)?,
    })
}

#[pyfunction]
#[pyo3(signature = (scores, truth, threshold=0.5))]
fn precision_recall_f1(
    scores: Vec<f64>,
    truth: Vec<bool>,
    threshold: f64,
) -> PyResult<(f64, f64, f64)> {
    let c = BinaryConfusion::from_scores(&scores, &truth, threshold).map_err(err)?;
    Ok(metrics::precision_recall_f1(&c))
}

#[pyfunction]
fn recall_at_k(ranked: Vec<String>, relevant: HashSet<String>, k: usize) -> PyResult<f64> {
    metrics::recall_at_k(&RankedEval::new(ranked, relevant, k).map_err(err)?).map_err(err)
}

#[pyfunction]
fn ndcg_at_k(ranked: Vec<String>, relevant: HashSet<String>, k: usize) -> PyResult<f64> {
    metrics::ndcg_at_k(&RankedEval::new(ranked, relevant, k).map_err(err)?).map_err(err)
}

/// (mae, mse, rmse)
#[pyfunction]
fn regression_errors(pred: Vec<f64>, truth: Vec<f64>) -> PyResult<(f64, f64, f64)> {
    let e = metrics::regression_errors(&pred, &truth).map_err(err)?;
    Ok((e.mae, e.mse, e.rmse))
}

#[pyclass(name = "RecModel", module = "imputebench_py")]
struct PyRecModel {
    inner: recsys::RecModel,
    #[pyo3(get)]
    epoch_loss: Vec<f64>,
}

#[pymethods]
impl PyRecModel {
    fn predict(&self, rows: &PyTable) -> PyResult<Vec<f64>> {
        self.inner.predict(&rows.inner).map_err(err)
    }

    #[getter]
    fn n_params(&self) -> usize {
        self.inner.n_params()
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyRecModel {
            inner: recsys::RecModel::load(path).map_err(err)?,
            epoch_loss: Vec::new(),
        })
    }
}

/// Train the recommender. `task` is "click", "rating" or "ranking".
#[pyfunction]
#[pyo3(signature = (data, label, task="rating", embedding_dim=16, hidden_layers=vec![64, 32], learning_rate=1e-3, epochs=5, batch_size=256, seed=0))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    data: &PyTable,
    label: &str,
    task: &str,
    embedding_dim: usize,
    hidden_layers: Vec<usize>,
    learning_rate: f64,
    epochs: usize,
    batch_size: usize,
    seed: u64,
) -> PyResult<PyRecModel> {
    let task = match task {
        "click" => Task::BinaryClick,
        "rating" => Task::RatingRegression,
        "ranking" => Task::TopKRanking,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown task `{other}` (click|rating|ranking)"
            )))
        }
    };
    let mut cfg = RecModelConfig::new(task, label);
    cfg.embedding_dim = embedding_dim;
    cfg.hidden_layers = hidden_layers;
    cfg.learning_rate = learning_rate;
    cfg.epochs = epochs;
    cfg.batch_size = batch_size;
    cfg.seed = seed;
    let t = data.inner.clone();
    let (model, log) = py.detach(move || recsys::train(&t, &cfg)).map_err(err)?;
    Ok(PyRecModel {
        inner: model,
        epoch_loss: log.epoch_loss,
    })
}

/// Run every stage of an experiment config; returns the results as dicts.
#[pyfunction]
#[pyo3(signature = (config_path, out_dir, seed=None))]
fn run_experiment<'py>(
    py: Python<'py>,
    config_path: PathBuf,
    out_dir: PathBuf,
    seed: Option<u64>,
) -> PyResult<Vec<Bound<'py, PyAny>>> {
    let mut cfg = ExperimentConfig::from_file(&config_path).map_err(err)?;
    if let Some(s) = seed {
        cfg.set_seed(s);
    }
    let results = py
        .detach(|| harness::run_experiment(&cfg, out_dir))
        .map_err(err)?;
    results
        .iter()
        .map(|r| {
            json_to_py(
                py,
                &serde_json::to_string(r).map_err(|e| PyValueError::new_err(e.to_string()))?,
            )
        })
        .collect()
}

/// Render the results of a run directory as "markdown" or "csv".
#[pyfunction]
#[pyo3(signature = (out_dir, format="markdown"))]
fn report(out_dir: PathBuf, format: &str) -> PyResult<String> {
    let format: ReportFormat = format.parse().map_err(err)?;
    let results = harness::read_results(&RunDir::new(out_dir).results()).map_err(err)?;
    emit_report(&results, format).map_err(err)
}

#[pymodule]
fn imputebench_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ImputeBenchError", m.py().get_type::<ImputeBenchError>())?;
    m.add_class::<PyTable>()?;
    m.add_class::<PyLedger>()?;
    m.add_class::<PyRecModel>()?;
    m.add_function(wrap_pyfunction!(inject_mcar, m)?)?;
    m.add_function(wrap_pyfunction!(restore, m)?)?;
    m.add_function(wrap_pyfunction!(masked_cell_score, m)?)?;
    m.add_function(wrap_pyfunction!(impute, m)?)?;
    m.add_function(wrap_pyfunction!(precision_recall_f1, m)?)?;
    m.add_function(wrap_pyfunction!(recall_at_k, m)?)?;
    m.add_function(wrap_pyfunction!(ndcg_at_k, m)?)?;
    m.add_function(wrap_pyfunction!(regression_errors, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(report, m)?)?;
    Ok(())
}
