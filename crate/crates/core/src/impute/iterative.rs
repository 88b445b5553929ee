use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{CellRef, ColumnKind, Table, Value};

use super::knn::mean_std;
use super::simple::{fill_cells, MeanImputer};
use super::Imputer;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterativeConfig {
    pub max_iters: usize,
    pub tol: f64,
    pub ridge: f64,
}

impl Default for IterativeConfig {
    fn default() -> Self {
        IterativeConfig {
            max_iters: 10,
            tol: 1e-3,
            ridge: 1e-3,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IterativeReport {
    /// Completed round-robin sweeps.
    pub iterations: usize,
    /// The last sweep moved no imputed numeric cell by `tol` or more
    /// (standardized units).
    pub converged: bool,
    /// Fewer than two non-Identifier columns: plain mean/mode was used.
    pub fell_back_to_mean: bool,
}

/// Round-robin multivariate imputation with ridge least squares.
///
/// Masked cells start at the fit-table mean/mode. Each sweep visits the
/// columns that have masked cells, fewest first, regresses the column on all
/// other non-Identifier columns (numeric predictors standardized with
/// fit-table statistics, categorical predictors one-hot) over the rows where
/// it is observed, and overwrites its masked cells. Categorical columns use
/// one-vs-rest scores and take the argmax.
#[derive(Clone, Debug)]
pub struct IterativeImputer {
    cfg: IterativeConfig,
    fit: Option<Table>,
}

impl IterativeImputer {
    pub fn new(cfg: IterativeConfig) -> Result<Self> {
        if !(cfg.tol > 0.0) {
            return Err(Error::Config("iterative tol must be positive".into()));
        }
        if !(cfg.ridge >= 0.0) {
            return Err(Error::Config("iterative ridge must be nonnegative".into()));
        }
        Ok(IterativeImputer { cfg, fit: None })
    }

    pub fn impute_with_report(&self, t: &Table) -> Result<(Table, IterativeReport)> {
        let fit = self.fit.as_ref().ok_or(Error::NotFitted)?;
        if fit.schema().names() != t.schema().names() {
            return Err(Error::SchemaMismatch(
                "iterative: table columns differ from fit table".into(),
            ));
        }
        let mean_imp = MeanImputer::fitted(fit)?;
        let features = t.schema().non_identifier();
        let mut report = IterativeReport::default();
        if features.len() < 2 {
            report.fell_back_to_mean = true;
            return Ok((mean_imp.impute(t)?, report));
        }

        let n_fit = fit.n_rows();
        let mut work = Table::concat(&[fit, t])?;
        let missing: Vec<Vec<bool>> = (0..work.n_cols())
            .map(|c| work.column(c).mask().to_vec())
            .collect();
        let cells = work.masked_cells();
        fill_cells(&mut work, &mean_imp, &cells)?;

        let scales: Vec<Option<(f64, f64)>> = (0..t.n_cols())
            .map(|c| (t.kind(c) == ColumnKind::Numeric).then(|| mean_std(&fit.observed_nums(c))))
            .collect();

        let mut order: Vec<(usize, usize)> = features
            .iter()
            .map(|&c| (t.column(c).n_missing(), c))
            .filter(|&(n, _)| n > 0)
            .collect();
        order.sort_unstable();

        for _ in 0..self.cfg.max_iters {
            let mut max_change = 0.0f64;
            for &(_, c) in &order {
                let change = self.sweep_column(&mut work, c, &features, &scales, &missing[c])?;
                max_change = max_change.max(change);
            }
            report.iterations += 1;
            if max_change < self.cfg.tol {
                report.converged = true;
                break;
            }
        }

        let idx: Vec<usize> = (n_fit..n_fit + t.n_rows()).collect();
        Ok((work.take_rows(&idx), report))
    }

    /// Refit the model for column `c` and overwrite its masked cells. Returns
    /// the largest standardized change among numeric cells.
    fn sweep_column(
        &self,
        work: &mut Table,
        c: usize,
        features: &[usize],
        scales: &[Option<(f64, f64)>],
        missing: &[bool],
    ) -> Result<f64> {
        let train: Vec<usize> = (0..work.n_rows()).filter(|&r| !missing[r]).collect();
        let predict: Vec<usize> = (0..work.n_rows()).filter(|&r| missing[r]).collect();
        if train.is_empty() || predict.is_empty() {
            return Ok(0.0);
        }
        let predictors: Vec<usize> = features.iter().copied().filter(|&j| j != c).collect();
        let x_train = design(work, &train, &predictors, scales);
        let x_pred = design(work, &predict, &predictors, scales);
        let name = &work.schema().columns[c].name;

        let mut gram = x_train.tr_mul(&x_train);
        for i in 1..gram.nrows() {
            gram[(i, i)] += self.cfg.ridge;
        }
        let chol = gram
            .cholesky()
            .ok_or_else(|| Error::SingularSystem(name.clone()))?;
        let diag = chol.l_dirty().diagonal();
        let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| {
            (lo.min(d * d), hi.max(d * d))
        });
        if !(lo > hi * 1e-13) {
            return Err(Error::SingularSystem(name.clone()));
        }

        let mut max_change = 0.0f64;
        if let Some((_, sd)) = scales[c] {
            let y = DVector::from_iterator(
                train.len(),
                train.iter().map(|&r| work.num(r, c).expect("filled")),
            );
            let beta = chol.solve(&x_train.tr_mul(&y));
            let pred = &x_pred * beta;
            let cs = work.schema().columns[c].clone();
            for (i, &r) in predict.iter().enumerate() {
                let new = cs.clamp(pred[i]);
                let old = work.num(r, c).expect("filled");
                max_change = max_change.max((new - old).abs() / sd);
                work.fill(CellRef::new(r, c), Value::Num(new))?;
            }
        } else {
            let k = work.vocab(c).map_or(0, |v| v.len());
            let mut y = DMatrix::<f64>::zeros(train.len(), k);
            for (i, &r) in train.iter().enumerate() {
                y[(i, work.code(r, c).expect("filled") as usize)] = 1.0;
            }
            let coef = chol.solve(&x_train.tr_mul(&y));
            let scores = &x_pred * coef;
            for (i, &r) in predict.iter().enumerate() {
                let row = scores.row(i);
                let mut best = 0usize;
                for j in 1..k {
                    if row[j] > row[best] {
                        best = j;
                    }
                }
                work.fill_code(CellRef::new(r, c), best as u32);
            }
        }
        Ok(max_change)
    }
}

/// Intercept, standardized numeric predictors and one-hot categorical
/// predictors for the given rows.
fn design(
    work: &Table,
    rows: &[usize],
    predictors: &[usize],
    scales: &[Option<(f64, f64)>],
) -> DMatrix<f64> {
    let widths: Vec<usize> = predictors
        .iter()
        .map(|&j| match scales[j] {
            Some(_) => 1,
            None => work.vocab(j).map_or(0, |v| v.len()),
        })
        .collect();
    let p = 1 + widths.iter().sum::<usize>();
    let mut x = DMatrix::<f64>::zeros(rows.len(), p);
    for (i, &r) in rows.iter().enumerate() {
        x[(i, 0)] = 1.0;
        let mut off = 1;
        for (&j, &w) in predictors.iter().zip(&widths) {
            match scales[j] {
                Some((m, sd)) => x[(i, off)] = (work.num(r, j).expect("filled") - m) / sd,
                None => x[(i, off + work.code(r, j).expect("filled") as usize)] = 1.0,
            }
            off += w;
        }
    }
    x
}

impl Imputer for IterativeImputer {
    fn name(&self) -> &'static str {
        "iterative"
    }

    fn fit(&mut self, fit: &Table) -> Result<()> {
        if fit.n_rows() == 0 {
            return Err(Error::EmptyFitTable);
        }
        self.fit = Some(fit.clone());
        Ok(())
    }

    fn impute(&self, t: &Table) -> Result<Table> {
        self.impute_with_report(t).map(|(t, _)| t)
    }
}
