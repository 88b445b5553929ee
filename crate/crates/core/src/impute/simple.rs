use crate::error::{Error, Result};
use crate::table::{CellRef, ColumnKind, Table, Value, UNK};

use super::Imputer;

/// Numeric cells become 0 (or the nearest domain bound); categorical cells
/// become the reserved `UNK` token.
#[derive(Clone, Debug, Default)]
pub struct ZeroImputer;

impl Imputer for ZeroImputer {
    fn name(&self) -> &'static str {
        "zero"
    }

    fn fit(&mut self, _fit: &Table) -> Result<()> {
        Ok(())
    }

    fn impute(&self, t: &Table) -> Result<Table> {
        let mut out = t.clone();
        for cell in t.masked_cells() {
            let cs = &t.schema().columns[cell.col];
            let v = match cs.kind {
                ColumnKind::Numeric => Value::Num(cs.clamp(0.0)),
                _ => Value::Cat(UNK.to_string()),
            };
            out.fill(cell, v)?;
        }
        Ok(out)
    }
}

/// Column mean for numeric columns, column mode for the rest.
#[derive(Clone, Debug, Default)]
pub struct MeanImputer {
    fills: Option<Vec<Value>>,
}

impl MeanImputer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fitted(fit: &Table) -> Result<Self> {
        let mut m = Self::new();
        m.fit(fit)?;
        Ok(m)
    }

    /// Fill value for column `col` (after fit).
    pub fn fill_value(&self, col: usize) -> Option<&Value> {
        self.fills.as_ref().map(|f| &f[col])
    }
}

/// Mode of `codes` with ties broken by first occurrence.
pub(crate) fn mode_first_occurrence(codes: impl IntoIterator<Item = u32>) -> Option<u32> {
    // (count, first position)
    let mut stats: Vec<(u32, usize, usize)> = Vec::new();
    for (pos, k) in codes.into_iter().enumerate() {
        match stats.iter_mut().find(|s| s.0 == k) {
            Some(s) => s.1 += 1,
            None => stats.push((k, 1, pos)),
        }
    }
    stats
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.2.cmp(&a.2)))
        .map(|s| s.0)
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

impl Imputer for MeanImputer {
    fn name(&self) -> &'static str {
        "mean"
    }

    fn fit(&mut self, fit: &Table) -> Result<()> {
        let mut fills = Vec::with_capacity(fit.n_cols());
        for c in 0..fit.n_cols() {
            let cs = &fit.schema().columns[c];
            let v = if cs.kind.is_numeric() {
                let xs = fit.observed_nums(c);
                if xs.is_empty() {
                    return Err(Error::EmptyColumn(cs.name.clone()));
                }
                Value::Num(cs.clamp(mean(&xs)))
            } else {
                let code = mode_first_occurrence(fit.observed_codes(c))
                    .ok_or_else(|| Error::EmptyColumn(cs.name.clone()))?;
                Value::Cat(fit.category(c, code).to_string())
            };
            fills.push(v);
        }
        self.fills = Some(fills);
        Ok(())
    }

    fn impute(&self, t: &Table) -> Result<Table> {
        let fills = self.fills.as_ref().ok_or(Error::NotFitted)?;
        if fills.len() != t.n_cols() {
            return Err(Error::SchemaMismatch(
                "column count differs from fit table".into(),
            ));
        }
        let mut out = t.clone();
        for cell in t.masked_cells() {
            out.fill(cell, fills[cell.col].clone())?;
        }
        Ok(out)
    }
}

/// Fill only the cells in `cells` with the column fills of `imp`.
pub(crate) fn fill_cells(out: &mut Table, imp: &MeanImputer, cells: &[CellRef]) -> Result<()> {
    for &cell in cells {
        let v = imp.fill_value(cell.col).ok_or(Error::NotFitted)?.clone();
        out.fill(cell, v)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{default_missing_tokens, ColumnSchema, TableSchema};

    fn parse(schema: &TableSchema, text: &str) -> Table {
        Table::parse_csv(text, schema, &default_missing_tokens()).unwrap()
    }

    #[test]
    fn zero_fill() {
        let s = TableSchema::new(vec![
            ColumnSchema::numeric("x"),
            ColumnSchema::categorical("g"),
            ColumnSchema::numeric("r").with_range(0.0, 5.0),
            ColumnSchema::numeric("b").with_range(1.0, 5.0),
        ])
        .unwrap();
        let t = parse(&s, "x,g,r,b\n1,A,2,3\n,,,\n3,B,4,5");
        let out = ZeroImputer.impute(&t).unwrap();
        assert_eq!(out.value(1, 0), Some(Value::Num(0.0)));
        assert_eq!(out.value(1, 1), Some(Value::Cat("UNK".into())));
        assert_eq!(out.value(1, 2), Some(Value::Num(0.0)));
        assert_eq!(out.value(1, 3), Some(Value::Num(1.0)));
        assert!(out.vocab(1).unwrap().contains("UNK"));
        assert_eq!(out.n_missing(), 0);
    }

    #[test]
    fn mean_and_mode() {
        let s = TableSchema::new(vec![
            ColumnSchema::numeric("x"),
            ColumnSchema::categorical("g"),
        ])
        .unwrap();
        let fit = parse(&s, "x,g\n1,A\n2,A\n3,B");
        let t = parse(&s, "x,g\n,\n5,B");
        let out = MeanImputer::fitted(&fit).unwrap().impute(&t).unwrap();
        assert_eq!(out.value(0, 0), Some(Value::Num(2.0)));
        assert_eq!(out.value(0, 1), Some(Value::Cat("A".into())));
        assert_eq!(out.value(1, 0), Some(Value::Num(5.0)));
    }

    #[test]
    fn mode_tie_first_occurrence() {
        assert_eq!(mode_first_occurrence([2, 1, 1, 2]), Some(2));
        assert_eq!(mode_first_occurrence([3, 1, 1]), Some(1));
        assert_eq!(mode_first_occurrence([]), None);
    }

    #[test]
    fn empty_column() {
        let s =
            TableSchema::new(vec![ColumnSchema::numeric("x"), ColumnSchema::numeric("y")]).unwrap();
        let fit = parse(&s, "x,y\n,1\n,2");
        assert!(matches!(MeanImputer::fitted(&fit), Err(Error::EmptyColumn(c)) if c == "x"));
    }

    #[test]
    fn not_fitted() {
        let s = TableSchema::new(vec![ColumnSchema::numeric("x")]).unwrap();
        let t = parse(&s, "x\n1");
        assert!(matches!(
            MeanImputer::new().impute(&t),
            Err(Error::NotFitted)
        ));
    }
}
