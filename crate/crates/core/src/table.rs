//! Column-major typed tables with an explicit per-cell missingness mask.
//!
//! Values are never stored as sentinels: a masked cell's slot holds a
//! placeholder (`NaN` for numeric columns, [`NO_CODE`] for categorical ones)
//! that no accessor ever returns. Reads go through [`Table::value`],
//! [`Table::num`] or [`Table::code`], which yield `None` for masked cells.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use indexmap::IndexSet;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Placeholder code stored in masked categorical slots.
pub const NO_CODE: u32 = u32::MAX;

/// Token used by the zero imputer for masked categorical cells.
pub const UNK: &str = "UNK";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    /// High-cardinality key (user, item, ad). Modeled as categorical, never
    /// part of numeric statistics.
    Identifier,
    Categorical,
    Numeric,
}

impl ColumnKind {
    pub fn is_numeric(self) -> bool {
        self == ColumnKind::Numeric
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    /// Inclusive numeric domain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
    /// Declared vocabulary; values outside it are rejected at load time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocabulary: Option<Vec<String>>,
}

impl ColumnSchema {
    pub fn identifier(name: &str) -> Self {
        Self::new(name, ColumnKind::Identifier)
    }

    pub fn categorical(name: &str) -> Self {
        Self::new(name, ColumnKind::Categorical)
    }

    pub fn numeric(name: &str) -> Self {
        Self::new(name, ColumnKind::Numeric)
    }

    pub fn new(name: &str, kind: ColumnKind) -> Self {
        ColumnSchema {
            name: name.to_string(),
            kind,
            range: None,
            vocabulary: None,
        }
    }

    pub fn with_range(mut self, lo: f64, hi: f64) -> Self {
        self.range = Some([lo, hi]);
        self
    }

    pub fn with_vocabulary<S: AsRef<str>>(mut self, vocab: &[S]) -> Self {
        self.vocabulary = Some(vocab.iter().map(|s| s.as_ref().to_string()).collect());
        self
    }

    /// Clamp `x` into the declared range, if any.
    pub fn clamp(&self, x: f64) -> f64 {
        match self.range {
            Some([lo, hi]) => x.clamp(lo, hi),
            None => x,
        }
    }

    pub fn in_domain(&self, x: f64) -> bool {
        match self.range {
            Some([lo, hi]) => x >= lo && x <= hi,
            None => x.is_finite(),
        }
    }
}

/// Ordered list of column descriptors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSchema {
    pub columns: Vec<ColumnSchema>,
}

impl TableSchema {
    pub fn new(columns: Vec<ColumnSchema>) -> Result<Self> {
        let schema = TableSchema { columns };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for col in &self.columns {
            if col.name.is_empty() {
                return Err(Error::Schema("column name is empty".into()));
            }
            if !seen.insert(col.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column `{}`", col.name)));
            }
            if let Some([lo, hi]) = col.range {
                if !col.kind.is_numeric() {
                    return Err(Error::Schema(format!(
                        "column `{}`: range is only valid for numeric columns",
                        col.name
                    )));
                }
                if lo.is_nan() || hi.is_nan() || lo > hi {
                    return Err(Error::Schema(format!(
                        "column `{}`: range [{lo}, {hi}] is empty",
                        col.name
                    )));
                }
            }
            if col.vocabulary.is_some() && col.kind.is_numeric() {
                return Err(Error::Schema(format!(
                    "column `{}`: vocabulary is only valid for categorical columns",
                    col.name
                )));
            }
        }
        Ok(())
    }

    /// Read a schema descriptor (TOML, one `[[columns]]` table per column with
    /// keys `name`, `kind`, `range`, `vocabulary`).
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let schema: TableSchema = toml::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("schema serializes")
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    /// Indices of all non-Identifier columns.
    pub fn non_identifier(&self) -> Vec<usize> {
        (0..self.columns.len())
            .filter(|&c| self.columns[c].kind != ColumnKind::Identifier)
            .collect()
    }
}

/// A single typed cell value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Num(f64),
    Cat(String),
}

impl Value {
    pub fn as_num(&self) -> Option<f64> {
        match self {
            Value::Num(x) => Some(*x),
            Value::Cat(_) => None,
        }
    }

    pub fn as_cat(&self) -> Option<&str> {
        match self {
            Value::Cat(s) => Some(s),
            Value::Num(_) => None,
        }
    }

    /// Bitwise equality (numbers compared by bit pattern).
    pub fn bit_eq(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Num(a), Value::Num(b)) => a.to_bits() == b.to_bits(),
            (Value::Cat(a), Value::Cat(b)) => a == b,
            _ => false,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(x) => write!(f, "{x}"),
            Value::Cat(s) => f.write_str(s),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellRef {
    pub row: usize,
    pub col: usize,
}

impl CellRef {
    pub fn new(row: usize, col: usize) -> Self {
        CellRef { row, col }
    }
}

#[derive(Clone, Debug)]
pub enum ColumnData {
    Numeric(Vec<f64>),
    Categorical {
        vocab: IndexSet<String>,
        codes: Vec<u32>,
    },
}

#[derive(Clone, Debug)]
pub struct Column {
    pub(crate) data: ColumnData,
    pub(crate) mask: Vec<bool>,
}

impl Column {
    pub fn data(&self) -> &ColumnData {
        &self.data
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn n_missing(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Vocabulary of a categorical column (empty slice for numeric).
    pub fn vocab(&self) -> Option<&IndexSet<String>> {
        match &self.data {
            ColumnData::Categorical { vocab, .. } => Some(vocab),
            ColumnData::Numeric(_) => None,
        }
    }
}

/// Column-major table with a boolean mask per column (`true` = missing).
#[derive(Clone, Debug)]
pub struct Table {
    schema: TableSchema,
    columns: Vec<Column>,
    n_rows: usize,
}

/// Incrementally builds a [`Table`] row by row.
pub struct TableBuilder {
    schema: TableSchema,
    columns: Vec<Column>,
    n_rows: usize,
}

impl TableBuilder {
    pub fn new(schema: TableSchema) -> Self {
        let columns = schema
            .columns
            .iter()
            .map(|c| Column {
                data: match c.kind {
                    ColumnKind::Numeric => ColumnData::Numeric(Vec::new()),
                    _ => ColumnData::Categorical {
                        vocab: c
                            .vocabulary
                            .as_ref()
                            .map(|v| v.iter().cloned().collect())
                            .unwrap_or_default(),
                        codes: Vec::new(),
                    },
                },
                mask: Vec::new(),
            })
            .collect();
        TableBuilder {
            schema,
            columns,
            n_rows: 0,
        }
    }

    /// Append one row; `None` marks a missing cell.
    pub fn push_row(&mut self, row: &[Option<Value>]) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::MalformedRow {
                line: self.n_rows + 1,
                expected: self.columns.len(),
                found: row.len(),
            });
        }
        // Validate everything first so a failed push leaves the builder intact.
        for (c, cell) in row.iter().enumerate() {
            if let Some(v) = cell {
                self.check(c, v)?;
            }
        }
        for (c, cell) in row.iter().enumerate() {
            let col = &mut self.columns[c];
            col.mask.push(cell.is_none());
            match (&mut col.data, cell) {
                (ColumnData::Numeric(xs), Some(Value::Num(x))) => xs.push(*x),
                (ColumnData::Numeric(xs), None) => xs.push(f64::NAN),
                (ColumnData::Categorical { vocab, codes }, Some(Value::Cat(s))) => {
                    let (code, _) = vocab.insert_full(s.clone());
                    codes.push(code as u32);
                }
                (ColumnData::Categorical { codes, .. }, None) => codes.push(NO_CODE),
                _ => unreachable!("checked above"),
            }
        }
        self.n_rows += 1;
        Ok(())
    }

    fn check(&self, c: usize, v: &Value) -> Result<()> {
        let cs = &self.schema.columns[c];
        let line = self.n_rows + 1;
        match (cs.kind, v) {
            (ColumnKind::Numeric, Value::Num(x)) => {
                if !x.is_finite() || !cs.in_domain(*x) {
                    return Err(Error::TypeError {
                        line,
                        column: cs.name.clone(),
                        message: format!("value {x} outside domain"),
                    });
                }
            }
            (ColumnKind::Numeric, Value::Cat(s)) => {
                return Err(Error::TypeError {
                    line,
                    column: cs.name.clone(),
                    message: format!("expected a number, found `{s}`"),
                })
            }
            (_, Value::Cat(s)) => {
                if let Some(vocab) = &cs.vocabulary {
                    if !vocab.iter().any(|v| v == s) {
                        return Err(Error::TypeError {
                            line,
                            column: cs.name.clone(),
                            message: format!("`{s}` is not in the declared vocabulary"),
                        });
                    }
                }
            }
            (_, Value::Num(x)) => {
                return Err(Error::TypeError {
                    line,
                    column: cs.name.clone(),
                    message: format!("expected a category, found number {x}"),
                })
            }
        }
        Ok(())
    }

    pub fn finish(self) -> Table {
        Table {
            schema: self.schema,
            columns: self.columns,
            n_rows: self.n_rows,
        }
    }
}

impl Table {
    /// Build a table from rows of optional values.
    pub fn from_rows(schema: TableSchema, rows: &[Vec<Option<Value>>]) -> Result<Table> {
        schema.validate()?;
        let mut b = TableBuilder::new(schema);
        for r in rows {
            b.push_row(r)?;
        }
        Ok(b.finish())
    }

    pub fn empty(schema: TableSchema) -> Table {
        TableBuilder::new(schema).finish()
    }

    pub fn schema(&self) -> &TableSchema {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, c: usize) -> &Column {
        &self.columns[c]
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn col_index(&self, name: &str) -> Result<usize> {
        self.schema
            .index_of(name)
            .ok_or_else(|| Error::Schema(format!("unknown column `{name}`")))
    }

    pub fn kind(&self, c: usize) -> ColumnKind {
        self.schema.columns[c].kind
    }

    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.columns[col].mask[row]
    }

    /// Observed value of a cell; `None` when masked.
    pub fn value(&self, row: usize, col: usize) -> Option<Value> {
        let column = &self.columns[col];
        if column.mask[row] {
            return None;
        }
        Some(match &column.data {
            ColumnData::Numeric(xs) => Value::Num(xs[row]),
            ColumnData::Categorical { vocab, codes } => {
                Value::Cat(vocab[codes[row] as usize].clone())
            }
        })
    }

    pub fn num(&self, row: usize, col: usize) -> Option<f64> {
        let column = &self.columns[col];
        match &column.data {
            ColumnData::Numeric(xs) if !column.mask[row] => Some(xs[row]),
            _ => None,
        }
    }

    pub fn code(&self, row: usize, col: usize) -> Option<u32> {
        let column = &self.columns[col];
        match &column.data {
            ColumnData::Categorical { codes, .. } if !column.mask[row] => Some(codes[row]),
            _ => None,
        }
    }

    /// Category string for a code in column `col`.
    pub fn category(&self, col: usize, code: u32) -> &str {
        match &self.columns[col].data {
            ColumnData::Categorical { vocab, .. } => &vocab[code as usize],
            ColumnData::Numeric(_) => panic!("column {col} is numeric"),
        }
    }

    pub fn vocab(&self, col: usize) -> Option<&IndexSet<String>> {
        self.columns[col].vocab()
    }

    pub fn row(&self, row: usize) -> Vec<Option<Value>> {
        (0..self.n_cols()).map(|c| self.value(row, c)).collect()
    }

    pub fn row_has_missing(&self, row: usize) -> bool {
        self.columns.iter().any(|c| c.mask[row])
    }

    pub fn missing_in_row(&self, row: usize) -> Vec<usize> {
        (0..self.n_cols())
            .filter(|&c| self.columns[c].mask[row])
            .collect()
    }

    pub fn n_missing(&self) -> usize {
        self.columns.iter().map(Column::n_missing).sum()
    }

    pub fn masked_cells(&self) -> Vec<CellRef> {
        let mut cells = Vec::new();
        for r in 0..self.n_rows {
            for c in 0..self.n_cols() {
                if self.columns[c].mask[r] {
                    cells.push(CellRef::new(r, c));
                }
            }
        }
        cells
    }

    /// Mask a cell, returning the value it held.
    pub fn mask_cell(&mut self, cell: CellRef) -> Option<Value> {
        let old = self.value(cell.row, cell.col)?;
        let column = &mut self.columns[cell.col];
        column.mask[cell.row] = true;
        match &mut column.data {
            ColumnData::Numeric(xs) => xs[cell.row] = f64::NAN,
            ColumnData::Categorical { codes, .. } => codes[cell.row] = NO_CODE,
        }
        Some(old)
    }

    /// Write a value into a cell and clear its mask. Categorical values not yet
    /// in the vocabulary are appended to it (and to a declared schema
    /// vocabulary).
    pub fn fill(&mut self, cell: CellRef, value: Value) -> Result<()> {
        let cs = &mut self.schema.columns[cell.col];
        let column = &mut self.columns[cell.col];
        match (&mut column.data, value) {
            (ColumnData::Numeric(xs), Value::Num(x)) => {
                if !x.is_finite() {
                    return Err(Error::Data(format!(
                        "non-finite fill for column `{}`",
                        cs.name
                    )));
                }
                xs[cell.row] = x;
            }
            (ColumnData::Categorical { vocab, codes }, Value::Cat(s)) => {
                if let Some(declared) = &mut cs.vocabulary {
                    if !declared.contains(&s) {
                        declared.push(s.clone());
                    }
                }
                let (code, _) = vocab.insert_full(s);
                codes[cell.row] = code as u32;
            }
            (_, v) => {
                return Err(Error::Data(format!(
                    "value {v} has the wrong type for column `{}`",
                    cs.name
                )))
            }
        }
        column.mask[cell.row] = false;
        Ok(())
    }

    /// Fill a categorical cell by code (must be a valid code of the column).
    pub fn fill_code(&mut self, cell: CellRef, code: u32) {
        let column = &mut self.columns[cell.col];
        match &mut column.data {
            ColumnData::Categorical { vocab, codes } => {
                assert!((code as usize) < vocab.len(), "code out of range");
                codes[cell.row] = code;
            }
            ColumnData::Numeric(_) => panic!("fill_code on numeric column"),
        }
        column.mask[cell.row] = false;
    }

    /// New table holding rows `idx` in the given order. Vocabularies are kept
    /// whole so codes stay comparable across derived tables.
    pub fn take_rows(&self, idx: &[usize]) -> Table {
        let columns = self
            .columns
            .iter()
            .map(|col| Column {
                data: match &col.data {
                    ColumnData::Numeric(xs) => {
                        ColumnData::Numeric(idx.iter().map(|&i| xs[i]).collect())
                    }
                    ColumnData::Categorical { vocab, codes } => ColumnData::Categorical {
                        vocab: vocab.clone(),
                        codes: idx.iter().map(|&i| codes[i]).collect(),
                    },
                },
                mask: idx.iter().map(|&i| col.mask[i]).collect(),
            })
            .collect();
        Table {
            schema: self.schema.clone(),
            columns,
            n_rows: idx.len(),
        }
    }

    /// Keep only the named columns, in the given order.
    pub fn select_columns(&self, names: &[&str]) -> Result<Table> {
        let mut schema_cols = Vec::new();
        let mut columns = Vec::new();
        for name in names {
            let c = self.col_index(name)?;
            schema_cols.push(self.schema.columns[c].clone());
            columns.push(self.columns[c].clone());
        }
        Ok(Table {
            schema: TableSchema::new(schema_cols)?,
            columns,
            n_rows: self.n_rows,
        })
    }

    /// Drop the named columns.
    pub fn drop_columns(&self, names: &[String]) -> Result<Table> {
        for n in names {
            self.col_index(n)?;
        }
        let keep: Vec<&str> = self
            .schema
            .columns
            .iter()
            .map(|c| c.name.as_str())
            .filter(|n| !names.iter().any(|d| d == n))
            .collect();
        self.select_columns(&keep)
    }

    /// Row-wise concatenation. Parts must share column names and kinds;
    /// categorical codes are remapped onto the union vocabulary (first part's
    /// order, then new entries in order of appearance).
    pub fn concat(parts: &[&Table]) -> Result<Table> {
        let first = parts.first().ok_or(Error::Empty)?;
        for p in &parts[1..] {
            if p.schema.names() != first.schema.names()
                || p.schema
                    .columns
                    .iter()
                    .zip(&first.schema.columns)
                    .any(|(a, b)| a.kind != b.kind)
            {
                return Err(Error::SchemaMismatch(
                    "concatenated tables differ in schema".into(),
                ));
            }
        }
        let mut out = first.take_rows(&(0..first.n_rows).collect::<Vec<_>>());
        for p in &parts[1..] {
            for (c, col) in p.columns.iter().enumerate() {
                let dst = &mut out.columns[c];
                dst.mask.extend_from_slice(&col.mask);
                match (&mut dst.data, &col.data) {
                    (ColumnData::Numeric(a), ColumnData::Numeric(b)) => a.extend_from_slice(b),
                    (
                        ColumnData::Categorical { vocab, codes },
                        ColumnData::Categorical {
                            vocab: v2,
                            codes: c2,
                        },
                    ) => {
                        let remap: Vec<u32> = v2
                            .iter()
                            .map(|s| vocab.insert_full(s.clone()).0 as u32)
                            .collect();
                        codes.extend(c2.iter().map(|&k| {
                            if k == NO_CODE {
                                NO_CODE
                            } else {
                                remap[k as usize]
                            }
                        }));
                    }
                    _ => unreachable!("kinds checked"),
                }
                if let (Some(decl), Some(v)) = (
                    &mut out.schema.columns[c].vocabulary,
                    p.schema.columns[c].vocabulary.as_ref(),
                ) {
                    for s in v {
                        if !decl.contains(s) {
                            decl.push(s.clone());
                        }
                    }
                }
            }
            out.n_rows += p.n_rows;
        }
        Ok(out)
    }

    /// Observed numeric values of a column in row order.
    pub fn observed_nums(&self, col: usize) -> Vec<f64> {
        match &self.columns[col].data {
            ColumnData::Numeric(xs) => xs
                .iter()
                .zip(&self.columns[col].mask)
                .filter(|(_, &m)| !m)
                .map(|(&x, _)| x)
                .collect(),
            ColumnData::Categorical { .. } => Vec::new(),
        }
    }

    /// Observed codes of a categorical column in row order.
    pub fn observed_codes(&self, col: usize) -> Vec<u32> {
        match &self.columns[col].data {
            ColumnData::Categorical { codes, .. } => codes
                .iter()
                .zip(&self.columns[col].mask)
                .filter(|(_, &m)| !m)
                .map(|(&k, _)| k)
                .collect(),
            ColumnData::Numeric(_) => Vec::new(),
        }
    }

    pub fn load_csv(
        path: impl AsRef<Path>,
        schema: &TableSchema,
        missing_tokens: &[String],
    ) -> Result<Table> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Table::parse_csv(&text, schema, missing_tokens)
    }

    /// Parse CSV text. The first line must list the schema's column names in
    /// order. Cells whose raw text is one of `missing_tokens` are masked.
    pub fn parse_csv(text: &str, schema: &TableSchema, missing_tokens: &[String]) -> Result<Table> {
        schema.validate()?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(text.as_bytes());
        let mut records = reader.records();
        let header = match records.next() {
            Some(h) => h.map_err(|e| Error::Data(e.to_string()))?,
            None => {
                return Err(Error::HeaderMismatch {
                    expected: schema.names(),
                    found: Vec::new(),
                })
            }
        };
        let found: Vec<String> = header.iter().map(|s| s.trim().to_string()).collect();
        if found != schema.names() {
            return Err(Error::HeaderMismatch {
                expected: schema.names(),
                found,
            });
        }
        let mut builder = TableBuilder::new(schema.clone());
        let mut row = Vec::with_capacity(schema.len());
        for (i, rec) in records.enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::Data(e.to_string()))?;
            if rec.len() != schema.len() {
                return Err(Error::MalformedRow {
                    line,
                    expected: schema.len(),
                    found: rec.len(),
                });
            }
            row.clear();
            for (raw, cs) in rec.iter().zip(&schema.columns) {
                if missing_tokens.iter().any(|t| t == raw) {
                    row.push(None);
                    continue;
                }
                let v = match cs.kind {
                    ColumnKind::Numeric => {
                        let x: f64 = raw.trim().parse().map_err(|_| Error::TypeError {
                            line,
                            column: cs.name.clone(),
                            message: format!("cannot parse `{raw}` as a number"),
                        })?;
                        Value::Num(x)
                    }
                    _ => Value::Cat(raw.to_string()),
                };
                row.push(Some(v));
            }
            builder.push_row(&row).map_err(|e| match e {
                Error::TypeError {
                    column, message, ..
                } => Error::TypeError {
                    line,
                    column,
                    message,
                },
                other => other,
            })?;
        }
        Ok(builder.finish())
    }

    /// Render as CSV; masked cells are written as empty fields. Numbers use the
    /// shortest representation that parses back to the same bits.
    pub fn to_csv_string(&self) -> String {
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        w.write_record(self.schema.names())
            .expect("in-memory write");
        let mut rec: Vec<String> = Vec::with_capacity(self.n_cols());
        for r in 0..self.n_rows {
            rec.clear();
            for c in 0..self.n_cols() {
                rec.push(match self.value(r, c) {
                    Some(v) => v.to_string(),
                    None => String::new(),
                });
            }
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }
}

impl PartialEq for Table {
    /// Same schema, same masks and bitwise-equal observed values.
    fn eq(&self, other: &Self) -> bool {
        if self.n_rows != other.n_rows || self.schema != other.schema {
            return false;
        }
        for c in 0..self.n_cols() {
            if self.columns[c].mask != other.columns[c].mask {
                return false;
            }
            for r in 0..self.n_rows {
                match (self.value(r, c), other.value(r, c)) {
                    (Some(a), Some(b)) if !a.bit_eq(&b) => return false,
                    _ => {}
                }
            }
        }
        true
    }
}

/// Default tokens treated as missing when reading CSV.
pub fn default_missing_tokens() -> Vec<String> {
    vec![String::new(), "NA".into(), "NaN".into()]
}

/// Split into rows with no masked cells and rows with at least one, order
/// preserved. Also returns the original row indices of each part.
pub fn split_complete_incomplete_indexed(t: &Table) -> ((Table, Vec<usize>), (Table, Vec<usize>)) {
    let (incomplete, complete): (Vec<usize>, Vec<usize>) =
        (0..t.n_rows()).partition(|&r| t.row_has_missing(r));
    (
        (t.take_rows(&complete), complete),
        (t.take_rows(&incomplete), incomplete),
    )
}

pub fn split_complete_incomplete(t: &Table) -> (Table, Table) {
    let ((c, _), (i, _)) = split_complete_incomplete_indexed(t);
    (c, i)
}

/// Fractions for the train/test/validation partition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub test_frac: f64,
    pub valid_frac: f64,
    pub seed: u64,
}

impl SplitSpec {
    /// The 60/20/20 split.
    pub fn standard(seed: u64) -> Self {
        SplitSpec {
            train_frac: 0.6,
            test_frac: 0.2,
            valid_frac: 0.2,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fr = [self.train_frac, self.test_frac, self.valid_frac];
        if fr.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::BadSplit(format!(
                "fractions {fr:?} must lie in [0, 1]"
            )));
        }
        if (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::BadSplit(format!("fractions {fr:?} must sum to 1")));
        }
        Ok(())
    }
}

/// Row indices of each part: (train, test, valid).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub valid: Vec<usize>,
}

/// Shuffle `0..n` with the split seed; the first `floor(test_frac * n)`
/// indices form the test part, the next `floor(valid_frac * n)` the
/// validation part and the remainder the training part.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<SplitIndices> {
    spec.validate()?;
    if n < 3 {
        return Err(Error::EmptyTable(format!(
            "need at least 3 rows to split, have {n}"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng::seeded(spec.seed));
    let n_test = rng::floor_count(spec.test_frac, n);
    let n_valid = rng::floor_count(spec.valid_frac, n).min(n - n_test);
    let test = perm[..n_test].to_vec();
    let valid = perm[n_test..n_test + n_valid].to_vec();
    let train = perm[n_test + n_valid..].to_vec();
    Ok(SplitIndices { train, test, valid })
}

pub fn split_train_test_valid(t: &Table, spec: &SplitSpec) -> Result<(Table, Table, Table)> {
    let idx = split_indices(t.n_rows(), spec)?;
    Ok((
        t.take_rows(&idx.train),
        t.take_rows(&idx.test),
        t.take_rows(&idx.valid),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ur_schema() -> TableSchema {
        TableSchema::new(vec![
            ColumnSchema::identifier("u"),
            ColumnSchema::numeric("r"),
        ])
        .unwrap()
    }

    fn toks() -> Vec<String> {
        default_missing_tokens()
    }

    #[test]
    fn load_simple() {
        let t = Table::parse_csv("u,r\n1,4.0", &ur_schema(), &toks()).unwrap();
        assert_eq!(t.n_rows(), 1);
        assert_eq!(t.n_missing(), 0);
        assert_eq!(t.value(0, 1), Some(Value::Num(4.0)));
        assert_eq!(t.value(0, 0), Some(Value::Cat("1".into())));
    }

    #[test]
    fn load_missing_cell() {
        let t = Table::parse_csv("u,r\n1,", &ur_schema(), &toks()).unwrap();
        assert!(t.is_missing(0, 1));
        assert_eq!(t.value(0, 1), None);
        assert_eq!(t.num(0, 1), None);
    }

    #[test]
    fn load_errors() {
        assert!(matches!(
            Table::parse_csv("u,r\n1,4.0,9", &ur_schema(), &toks()),
            Err(Error::MalformedRow {
                line: 2,
                expected: 2,
                found: 3
            })
        ));
        assert!(matches!(
            Table::parse_csv("r,u\n1,4.0", &ur_schema(), &toks()),
            Err(Error::HeaderMismatch { .. })
        ));
        assert!(matches!(
            Table::parse_csv("u,r\n1,abc", &ur_schema(), &toks()),
            Err(Error::TypeError { line: 2, .. })
        ));
    }

    #[test]
    fn domain_and_vocabulary_enforced() {
        let schema = TableSchema::new(vec![
            ColumnSchema::categorical("g").with_vocabulary(&["A", "B"]),
            ColumnSchema::numeric("r").with_range(0.0, 5.0),
        ])
        .unwrap();
        assert!(Table::parse_csv("g,r\nA,6", &schema, &toks()).is_err());
        assert!(Table::parse_csv("g,r\nC,1", &schema, &toks()).is_err());
        assert!(Table::parse_csv("g,r\nB,5", &schema, &toks()).is_ok());
    }

    #[test]
    fn schema_validation() {
        assert!(
            TableSchema::new(vec![ColumnSchema::numeric("a"), ColumnSchema::numeric("a")]).is_err()
        );
        assert!(TableSchema::new(vec![ColumnSchema::numeric("")]).is_err());
        assert!(TableSchema::new(vec![ColumnSchema::numeric("a").with_range(2.0, 1.0)]).is_err());
    }

    #[test]
    fn schema_descriptor_toml() {
        let text = r#"
[[columns]]
name = "user"
kind = "identifier"

[[columns]]
name = "genre"
kind = "categorical"
vocabulary = ["Action", "Sci-Fi"]

[[columns]]
name = "rating"
kind = "numeric"
range = [0.0, 5.0]
"#;
        let s = TableSchema::from_toml(text).unwrap();
        assert_eq!(s.columns[2].range, Some([0.0, 5.0]));
        assert_eq!(s.columns[0].kind, ColumnKind::Identifier);
        assert_eq!(TableSchema::from_toml(&s.to_toml()).unwrap(), s);
        assert!(TableSchema::from_toml("[[columns]]\nname='a'\nkind='numeric'\nbogus=1").is_err());
    }

    fn ten_rows_three_incomplete() -> Table {
        let text = "u,r\n0,1\n1,\n2,3\n3,4\n4,\n5,6\n6,7\n7,\n8,9\n9,10";
        Table::parse_csv(text, &ur_schema(), &toks()).unwrap()
    }

    #[test]
    fn complete_incomplete() {
        let t = ten_rows_three_incomplete();
        let (c, i) = split_complete_incomplete(&t);
        assert_eq!((c.n_rows(), i.n_rows()), (7, 3));
        assert_eq!(i.value(0, 0), Some(Value::Cat("1".into())));
        assert_eq!(c.value(1, 0), Some(Value::Cat("2".into())));

        let full = Table::parse_csv("u,r\n0,1\n1,2", &ur_schema(), &toks()).unwrap();
        let (c, i) = split_complete_incomplete(&full);
        assert_eq!(c, full);
        assert_eq!(i.n_rows(), 0);

        let none = Table::parse_csv("u,r\n0,\n1,", &ur_schema(), &toks()).unwrap();
        let (c, i) = split_complete_incomplete(&none);
        assert_eq!(c.n_rows(), 0);
        assert_eq!(i, none);
    }

    #[test]
    fn split_sizes() {
        for (n, want) in [(100, (60, 20, 20)), (10, (6, 2, 2)), (101, (61, 20, 20))] {
            let idx = split_indices(n, &SplitSpec::standard(3)).unwrap();
            assert_eq!((idx.train.len(), idx.test.len(), idx.valid.len()), want);
            let mut all: Vec<usize> = idx
                .train
                .iter()
                .chain(&idx.test)
                .chain(&idx.valid)
                .copied()
                .collect();
            all.sort_unstable();
            assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
        assert!(matches!(
            split_indices(2, &SplitSpec::standard(0)),
            Err(Error::EmptyTable(_))
        ));
        let bad = SplitSpec {
            train_frac: 0.5,
            test_frac: 0.2,
            valid_frac: 0.2,
            seed: 0,
        };
        assert!(matches!(split_indices(10, &bad), Err(Error::BadSplit(_))));
    }

    #[test]
    fn split_is_seed_deterministic() {
        let a = split_indices(50, &SplitSpec::standard(9)).unwrap();
        let b = split_indices(50, &SplitSpec::standard(9)).unwrap();
        let c = split_indices(50, &SplitSpec::standard(10)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn concat_remaps_codes() {
        let schema = TableSchema::new(vec![ColumnSchema::categorical("g")]).unwrap();
        let a = Table::parse_csv("g\nA\nB", &schema, &toks()).unwrap();
        let b = Table::parse_csv("g\nB\nC\n", &schema, &toks()).unwrap();
        let t = Table::concat(&[&a, &b]).unwrap();
        let vals: Vec<_> = (0..4).map(|r| t.value(r, 0).unwrap().to_string()).collect();
        assert_eq!(vals, ["A", "B", "B", "C"]);
    }

    #[test]
    fn mask_and_fill() {
        let mut t = Table::parse_csv("u,r\n1,4.5", &ur_schema(), &toks()).unwrap();
        let old = t.mask_cell(CellRef::new(0, 1));
        assert_eq!(old, Some(Value::Num(4.5)));
        assert!(t.mask_cell(CellRef::new(0, 1)).is_none());
        t.fill(CellRef::new(0, 1), Value::Num(4.5)).unwrap();
        assert_eq!(
            t,
            Table::parse_csv("u,r\n1,4.5", &ur_schema(), &toks()).unwrap()
        );
        assert!(t.fill(CellRef::new(0, 1), Value::Cat("x".into())).is_err());
    }
}
