//! Missing-completely-at-random injection with a ground-truth ledger.

use std::path::Path;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::table::{CellRef, ColumnKind, Table, TableSchema, Value};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InjectionParams {
    pub p: f64,
    pub seed: u64,
    pub columns: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub row: usize,
    pub col: usize,
    pub column: String,
    pub value: Value,
}

impl LedgerEntry {
    pub fn cell(&self) -> CellRef {
        CellRef::new(self.row, self.col)
    }
}

/// Cells removed by [`inject_mcar`] together with their true values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskLedger {
    #[serde(flatten)]
    pub params: InjectionParams,
    pub entries: Vec<LedgerEntry>,
}

impl MaskLedger {
    pub fn empty() -> Self {
        MaskLedger {
            params: InjectionParams {
                p: 0.0,
                seed: 0,
                columns: Vec::new(),
            },
            entries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ledger serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    /// Read a ledger and check its column names and indices against `schema`.
    pub fn read(path: impl AsRef<Path>, schema: &TableSchema) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ledger = Self::from_json(&text)?;
        for e in &ledger.entries {
            if schema.index_of(&e.column) != Some(e.col) {
                return Err(Error::Data(format!(
                    "ledger column `{}` (index {}) does not match the schema",
                    e.column, e.col
                )));
            }
        }
        Ok(ledger)
    }
}

/// Non-Identifier columns, plus Identifier columns when `include_identifiers`.
pub fn default_injection_columns(schema: &TableSchema, include_identifiers: bool) -> Vec<String> {
    schema
        .columns
        .iter()
        .filter(|c| include_identifiers || c.kind != ColumnKind::Identifier)
        .map(|c| c.name.clone())
        .collect()
}

/// Mask exactly `floor(p * n_rows)` distinct cells in each targeted column.
///
/// Each column samples without replacement from its own PRNG stream (stream
/// id = column index), so the choice for one column does not depend on which
/// other columns are targeted. `columns = None` targets every non-Identifier
/// column.
pub fn inject_mcar(
    t: &Table,
    p: f64,
    seed: u64,
    columns: Option<&[String]>,
) -> Result<(Table, MaskLedger)> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::BadFraction(p));
    }
    let names = match columns {
        Some(c) => c.to_vec(),
        None => default_injection_columns(t.schema(), false),
    };
    let mut targets = Vec::with_capacity(names.len());
    for name in &names {
        let c = t.col_index(name)?;
        if t.column(c).n_missing() > 0 {
            return Err(Error::AlreadyMissing(name.clone()));
        }
        targets.push(c);
    }

    let n = t.n_rows();
    let count = rng::floor_count(p, n);
    let mut out = t.clone();
    let mut entries = Vec::with_capacity(count * targets.len());
    for &c in &targets {
        if count == 0 {
            continue;
        }
        let mut rows = index::sample(&mut rng::substream(seed, c as u64), n, count).into_vec();
        rows.sort_unstable();
        for r in rows {
            let value = out
                .mask_cell(CellRef::new(r, c))
                .expect("targeted column had no masked cells");
            entries.push(LedgerEntry {
                row: r,
                col: c,
                column: t.schema().columns[c].name.clone(),
                value,
            });
        }
    }
    entries.sort_by_key(|e| (e.row, e.col));
    Ok((
        out,
        MaskLedger {
            params: InjectionParams {
                p,
                seed,
                columns: names,
            },
            entries,
        },
    ))
}

/// Put every ledger value back into its cell.
pub fn restore(t: &Table, ledger: &MaskLedger) -> Result<Table> {
    let mut out = t.clone();
    for e in &ledger.entries {
        if e.row >= t.n_rows() || e.col >= t.n_cols() || !t.is_missing(e.row, e.col) {
            return Err(Error::CellNotMasked {
                row: e.row,
                column: e.column.clone(),
            });
        }
        out.fill(e.cell(), e.value.clone())?;
    }
    Ok(out)
}

/// Intrinsic imputation quality on the injected cells.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MaskedCellScore {
    /// RMSE over ledger entries in Numeric columns; `None` if there are none.
    pub numeric_rmse: Option<f64>,
    /// Exact-match rate over Categorical/Identifier entries; `None` if none.
    pub categorical_accuracy: Option<f64>,
    pub n_numeric: usize,
    pub n_categorical: usize,
}

pub fn masked_cell_score(imputed: &Table, ledger: &MaskLedger) -> Result<MaskedCellScore> {
    let mut sq = 0.0;
    let mut n_num = 0usize;
    let mut hits = 0usize;
    let mut n_cat = 0usize;
    for e in &ledger.entries {
        let got = imputed
            .value(e.row, e.col)
            .ok_or_else(|| Error::CellStillMissing {
                row: e.row,
                column: e.column.clone(),
            })?;
        match (&e.value, got) {
            (Value::Num(truth), Value::Num(x)) => {
                sq += (x - truth) * (x - truth);
                n_num += 1;
            }
            (Value::Cat(truth), Value::Cat(x)) => {
                hits += usize::from(*truth == x);
                n_cat += 1;
            }
            _ => {
                return Err(Error::Data(format!(
                    "type mismatch in column `{}`",
                    e.column
                )))
            }
        }
    }
    Ok(MaskedCellScore {
        numeric_rmse: (n_num > 0).then(|| (sq / n_num as f64).sqrt()),
        categorical_accuracy: (n_cat > 0).then(|| hits as f64 / n_cat as f64),
        n_numeric: n_num,
        n_categorical: n_cat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{ColumnSchema, TableSchema};

    fn table(n: usize) -> Table {
        let schema = TableSchema::new(vec![
            ColumnSchema::identifier("id"),
            ColumnSchema::numeric("x"),
            ColumnSchema::categorical("g"),
            ColumnSchema::numeric("y"),
        ])
        .unwrap();
        let rows: Vec<Vec<Option<Value>>> = (0..n)
            .map(|i| {
                vec![
                    Some(Value::Cat(i.to_string())),
                    Some(Value::Num(i as f64 * 0.5)),
                    Some(Value::Cat(["a", "b", "c"][i % 3].into())),
                    Some(Value::Num((i % 7) as f64)),
                ]
            })
            .collect();
        Table::from_rows(schema, &rows).unwrap()
    }

    #[test]
    fn exact_counts_and_identifier_excluded() {
        let t = table(1000);
        let (inj, ledger) = inject_mcar(&t, 0.05, 1, None).unwrap();
        assert_eq!(inj.column(0).n_missing(), 0);
        for c in 1..4 {
            assert_eq!(inj.column(c).n_missing(), 50);
        }
        assert_eq!(ledger.len(), 150);
        for e in &ledger.entries {
            assert!(inj.is_missing(e.row, e.col));
            assert!(e.value.bit_eq(&t.value(e.row, e.col).unwrap()));
        }
    }

    #[test]
    fn p_zero_is_identity() {
        let t = table(20);
        let (inj, ledger) = inject_mcar(&t, 0.0, 5, None).unwrap();
        assert_eq!(inj, t);
        assert!(ledger.is_empty());
    }

    #[test]
    fn errors() {
        let t = table(20);
        assert!(matches!(
            inject_mcar(&t, 1.5, 0, None),
            Err(Error::BadFraction(_))
        ));
        let (inj, _) = inject_mcar(&t, 0.1, 0, None).unwrap();
        assert!(matches!(
            inject_mcar(&inj, 0.1, 0, None),
            Err(Error::AlreadyMissing(_))
        ));
    }

    #[test]
    fn column_choice_independent_of_subset() {
        let t = table(200);
        let all = inject_mcar(&t, 0.1, 3, None).unwrap().0;
        let only_y = inject_mcar(&t, 0.1, 3, Some(&["y".to_string()])).unwrap().0;
        assert_eq!(all.column(3).mask(), only_y.column(3).mask());
    }

    #[test]
    fn restore_roundtrip_and_errors() {
        let t = table(100);
        let (inj, ledger) = inject_mcar(&t, 0.2, 11, None).unwrap();
        assert_eq!(restore(&inj, &ledger).unwrap(), t);
        assert_eq!(restore(&t, &MaskLedger::empty()).unwrap(), t);
        assert!(matches!(
            restore(&t, &ledger),
            Err(Error::CellNotMasked { .. })
        ));
    }

    #[test]
    fn scores() {
        let t = table(100);
        let (inj, ledger) = inject_mcar(&t, 0.1, 2, None).unwrap();
        let s = masked_cell_score(&t, &ledger).unwrap();
        assert_eq!(s.numeric_rmse, Some(0.0));
        assert_eq!(s.categorical_accuracy, Some(1.0));
        assert!(matches!(
            masked_cell_score(&inj, &ledger),
            Err(Error::CellStillMissing { .. })
        ));

        // truths [2, 4], imputed [1, 2] -> sqrt(5/2)
        let schema = TableSchema::new(vec![ColumnSchema::numeric("v")]).unwrap();
        let truth = Table::from_rows(
            schema.clone(),
            &[vec![Some(Value::Num(2.0))], vec![Some(Value::Num(4.0))]],
        )
        .unwrap();
        let (_, ledger) = inject_mcar(&truth, 1.0, 0, None).unwrap();
        let imputed = Table::from_rows(
            schema,
            &[vec![Some(Value::Num(1.0))], vec![Some(Value::Num(2.0))]],
        )
        .unwrap();
        let s = masked_cell_score(&imputed, &ledger).unwrap();
        assert!((s.numeric_rmse.unwrap() - 1.5811388300841898).abs() < 1e-12);
        assert_eq!(s.categorical_accuracy, None);

        let cat_only = inject_mcar(&t, 0.1, 2, Some(&["g".to_string()])).unwrap().1;
        let s = masked_cell_score(&t, &cat_only).unwrap();
        assert_eq!(s.numeric_rmse, None);
    }

    #[test]
    fn ledger_json_roundtrip() {
        let t = table(50);
        let (_, ledger) = inject_mcar(&t, 0.1, 4, None).unwrap();
        let back = MaskLedger::from_json(&ledger.to_json()).unwrap();
        assert_eq!(back, ledger);
    }
}
