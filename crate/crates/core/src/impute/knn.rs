use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{CellRef, ColumnKind, Table, Value};

use super::simple::{mean, mode_first_occurrence};
use super::Imputer;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnnConfig {
    pub k: usize,
    pub standardize: bool,
}

impl Default for KnnConfig {
    fn default() -> Self {
        KnnConfig {
            k: 5,
            standardize: true,
        }
    }
}

/// Nearest-neighbour imputation against the fit rows.
///
/// The distance between a query row and a fit row is the mean, over the
/// non-Identifier columns observed in both, of the squared difference of
/// standardized values (numeric) or the 0/1 mismatch (categorical). The `k`
/// closest fit rows that observe the target column (ties by fit-row index)
/// supply the mean or, for categorical targets, the mode with ties broken by
/// fit-row order.
#[derive(Clone, Debug)]
pub struct KnnImputer {
    cfg: KnnConfig,
    fit: Option<Table>,
    /// Per column: (mean, std) for numeric columns.
    scale: Vec<Option<(f64, f64)>>,
}

impl KnnImputer {
    pub fn new(cfg: KnnConfig) -> Result<Self> {
        if cfg.k == 0 {
            return Err(Error::Config("knn k must be at least 1".into()));
        }
        Ok(KnnImputer {
            cfg,
            fit: None,
            scale: Vec::new(),
        })
    }
}

/// Population mean and standard deviation; a zero deviation becomes 1.
pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 1.0);
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64;
    let sd = var.sqrt();
    (m, if sd > 0.0 { sd } else { 1.0 })
}

impl Imputer for KnnImputer {
    fn name(&self) -> &'static str {
        "knn"
    }

    fn fit(&mut self, fit: &Table) -> Result<()> {
        if fit.n_rows() == 0 {
            return Err(Error::EmptyFitTable);
        }
        self.scale = (0..fit.n_cols())
            .map(|c| {
                (fit.kind(c) == ColumnKind::Numeric).then(|| {
                    if self.cfg.standardize {
                        mean_std(&fit.observed_nums(c))
                    } else {
                        (0.0, 1.0)
                    }
                })
            })
            .collect();
        self.fit = Some(fit.clone());
        Ok(())
    }

    fn impute(&self, t: &Table) -> Result<Table> {
        let fit = self.fit.as_ref().ok_or(Error::NotFitted)?;
        if fit.schema().names() != t.schema().names() {
            return Err(Error::SchemaMismatch(
                "knn: table columns differ from fit table".into(),
            ));
        }
        let features: Vec<usize> = t.schema().non_identifier();
        // Map query categorical codes to fit codes by string.
        let code_map: Vec<Option<Vec<Option<u32>>>> = (0..t.n_cols())
            .map(|c| {
                t.vocab(c).map(|v| {
                    let fv = fit.vocab(c).expect("same kinds");
                    v.iter()
                        .map(|s| fv.get_index_of(s).map(|i| i as u32))
                        .collect()
                })
            })
            .collect();

        let rows: Vec<usize> = (0..t.n_rows()).filter(|&r| t.row_has_missing(r)).collect();
        let fills: Vec<Vec<(CellRef, Value)>> = rows
            .par_iter()
            .map(|&r| self.impute_row(fit, t, r, &features, &code_map))
            .collect::<Result<_>>()?;

        let mut out = t.clone();
        for (cell, v) in fills.into_iter().flatten() {
            out.fill(cell, v)?;
        }
        Ok(out)
    }
}

impl KnnImputer {
    fn distance(
        &self,
        fit: &Table,
        t: &Table,
        r: usize,
        f: usize,
        features: &[usize],
        code_map: &[Option<Vec<Option<u32>>>],
    ) -> f64 {
        let mut sum = 0.0;
        let mut used = 0usize;
        for &c in features {
            match self.scale[c] {
                Some((m, sd)) => {
                    if let (Some(a), Some(b)) = (t.num(r, c), fit.num(f, c)) {
                        let d = (a - m) / sd - (b - m) / sd;
                        sum += d * d;
                        used += 1;
                    }
                }
                None => {
                    if let (Some(a), Some(b)) = (t.code(r, c), fit.code(f, c)) {
                        let mapped = code_map[c].as_ref().expect("categorical")[a as usize];
                        if mapped != Some(b) {
                            sum += 1.0;
                        }
                        used += 1;
                    }
                }
            }
        }
        if used == 0 {
            0.0
        } else {
            sum / used as f64
        }
    }

    fn impute_row(
        &self,
        fit: &Table,
        t: &Table,
        r: usize,
        features: &[usize],
        code_map: &[Option<Vec<Option<u32>>>],
    ) -> Result<Vec<(CellRef, Value)>> {
        let dists: Vec<f64> = (0..fit.n_rows())
            .map(|f| self.distance(fit, t, r, f, features, code_map))
            .collect();
        let mut fills = Vec::new();
        for c in t.missing_in_row(r) {
            let mut candidates: Vec<usize> = (0..fit.n_rows())
                .filter(|&f| !fit.is_missing(f, c))
                .collect();
            if candidates.is_empty() {
                return Err(Error::EmptyColumn(t.schema().columns[c].name.clone()));
            }
            candidates.sort_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(a.cmp(&b)));
            candidates.truncate(self.cfg.k);
            candidates.sort_unstable();
            let v = if fit.kind(c) == ColumnKind::Numeric {
                let xs: Vec<f64> = candidates.iter().map(|&f| fit.num(f, c).unwrap()).collect();
                Value::Num(t.schema().columns[c].clamp(mean(&xs)))
            } else {
                let code =
                    mode_first_occurrence(candidates.iter().map(|&f| fit.code(f, c).unwrap()))
                        .expect("non-empty");
                Value::Cat(fit.category(c, code).to_string())
            };
            fills.push((CellRef::new(r, c), v));
        }
        Ok(fills)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::impute::MeanImputer;
    use crate::table::{default_missing_tokens, ColumnSchema, TableSchema};

    fn xy() -> TableSchema {
        TableSchema::new(vec![ColumnSchema::numeric("x"), ColumnSchema::numeric("y")]).unwrap()
    }

    fn parse(text: &str) -> Table {
        Table::parse_csv(text, &xy(), &default_missing_tokens()).unwrap()
    }

    fn knn(k: usize, fit: &Table) -> KnnImputer {
        let mut imp = KnnImputer::new(KnnConfig {
            k,
            standardize: true,
        })
        .unwrap();
        imp.fit(fit).unwrap();
        imp
    }

    #[test]
    fn two_nearest() {
        let fit = parse("x,y\n0,0\n1,1\n2,2");
        let out = knn(2, &fit).impute(&parse("x,y\n1.1,")).unwrap();
        assert_eq!(out.num(0, 1), Some(1.5));
    }

    #[test]
    fn k_beyond_fit_rows_is_mean() {
        let fit = parse("x,y\n0,0.3\n1,1.7\n2,2.9\n5,0.1");
        let t = parse("x,y\n1.1,\n,3");
        let a = knn(10, &fit).impute(&t).unwrap();
        let b = MeanImputer::fitted(&fit).unwrap().impute(&t).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn exact_copy_with_k1() {
        let fit = parse("x,y\n0,5\n1,7\n2,9");
        let out = knn(1, &fit).impute(&parse("x,y\n1,")).unwrap();
        assert_eq!(out.num(0, 1), Some(7.0));
    }

    #[test]
    fn errors() {
        assert!(KnnImputer::new(KnnConfig {
            k: 0,
            standardize: true
        })
        .is_err());
        let mut imp = KnnImputer::new(KnnConfig::default()).unwrap();
        assert!(matches!(imp.fit(&parse("x,y")), Err(Error::EmptyFitTable)));
    }

    #[test]
    fn categorical_mode() {
        let s = TableSchema::new(vec![
            ColumnSchema::categorical("g"),
            ColumnSchema::categorical("h"),
        ])
        .unwrap();
        let fit =
            Table::parse_csv("g,h\nA,p\nA,q\nA,q\nB,p", &s, &default_missing_tokens()).unwrap();
        let t = Table::parse_csv("g,h\nA,", &s, &default_missing_tokens()).unwrap();
        let mut imp = KnnImputer::new(KnnConfig {
            k: 3,
            standardize: true,
        })
        .unwrap();
        imp.fit(&fit).unwrap();
        assert_eq!(
            imp.impute(&t).unwrap().value(0, 1),
            Some(Value::Cat("q".into()))
        );
    }
}
