//! Row ↔ question serialization.
//!
//! A row is rendered as
//!
//! ```text
//! given a UserID of 11, a MovieID of 44, and a Genre of Sci-Fi, what is the corresponding Rating?
//! ```
//!
//! Observed columns become `a <Name> of <value>` clauses in schema order, the
//! last of two or more clauses is introduced by `and`, and the question names
//! one target (`what is the corresponding T?`) or several (`what are the
//! corresponding T1 and T2?`, `T1, T2 and T3`). The article is always `a`, so
//! [`parse_prompt`] is an exact inverse of [`serialize_row_to_prompt`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{ColumnKind, Table, Value};

const ONE_TARGET: &str = "what is the corresponding ";
const MANY_TARGETS: &str = "what are the corresponding ";

/// Display names and number formatting for every column of a table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub columns: Vec<String>,
    pub display: Vec<String>,
    /// Decimal places for numeric columns, `None` for categorical ones.
    pub decimals: Vec<Option<usize>>,
}

impl PromptTemplate {
    /// Column names as display names; numeric columns whose observed values
    /// are all integral get 0 decimals, other numeric columns 1.
    pub fn for_table(t: &Table) -> Self {
        let columns = t.schema().names();
        let decimals = (0..t.n_cols())
            .map(|c| {
                (t.kind(c) == ColumnKind::Numeric).then(|| {
                    if t.observed_nums(c).iter().all(|x| x.fract() == 0.0) {
                        0
                    } else {
                        1
                    }
                })
            })
            .collect();
        PromptTemplate {
            display: columns.clone(),
            columns,
            decimals,
        }
    }

    pub fn with_display(mut self, column: &str, name: &str) -> Result<Self> {
        let c = self.index_of(column)?;
        self.display[c] = name.to_string();
        self.validate()?;
        Ok(self)
    }

    pub fn with_decimals(mut self, column: &str, places: usize) -> Result<Self> {
        let c = self.index_of(column)?;
        if self.decimals[c].is_none() {
            return Err(Error::Config(format!("column `{column}` is not numeric")));
        }
        self.decimals[c] = Some(places);
        Ok(self)
    }

    fn index_of(&self, column: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == column)
            .ok_or_else(|| Error::Config(format!("unknown column `{column}`")))
    }

    /// Display names must be non-empty, unique, and free of the grammar's
    /// delimiters.
    pub fn validate(&self) -> Result<()> {
        for (i, d) in self.display.iter().enumerate() {
            if d.is_empty()
                || d.contains(", ")
                || d.contains(" of ")
                || d.contains(" and ")
                || d.contains('?')
            {
                return Err(Error::Config(format!(
                    "display name `{d}` is not usable in prompts"
                )));
            }
            if self.display[..i].contains(d) {
                return Err(Error::Config(format!("display name `{d}` is not unique")));
            }
        }
        Ok(())
    }

    pub fn render(&self, col: usize, v: &Value) -> String {
        match (v, self.decimals[col]) {
            (Value::Num(x), Some(d)) => format!("{x:.d$}"),
            (Value::Num(x), None) => x.to_string(),
            (Value::Cat(s), _) => s.clone(),
        }
    }

    fn check_table(&self, t: &Table) -> Result<()> {
        if t.schema().names() != self.columns {
            return Err(Error::SchemaMismatch(
                "prompt template columns differ from table".into(),
            ));
        }
        Ok(())
    }
}

/// Join items as `a`, `a and b`, `a, b and c`.
pub fn join_and(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

/// Question for row `row` of `t` asking for the columns in `targets`.
/// Masked columns that are not targets are left out of the context.
pub fn serialize_row_to_prompt(
    t: &Table,
    row: usize,
    targets: &[usize],
    tpl: &PromptTemplate,
) -> Result<String> {
    if targets.is_empty() {
        return Err(Error::NoMissingTarget);
    }
    tpl.check_table(t)?;
    let clauses: Vec<String> = (0..t.n_cols())
        .filter(|c| !targets.contains(c))
        .filter_map(|c| {
            t.value(row, c)
                .map(|v| format!("a {} of {}", tpl.display[c], tpl.render(c, &v)))
        })
        .collect();
    let names: Vec<String> = targets.iter().map(|&c| tpl.display[c].clone()).collect();
    let question = if names.len() == 1 {
        format!("{ONE_TARGET}{}?", names[0])
    } else {
        format!("{MANY_TARGETS}{}?", join_and(&names))
    };
    Ok(match clauses.as_slice() {
        [] => question,
        [one] => format!("given {one}, {question}"),
        [init @ .., last] => format!("given {}, and {last}, {question}", init.join(", ")),
    })
}

/// Context clauses and targets recovered from a prompt.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParsedPrompt {
    /// (column index, rendered value) in prompt order.
    pub context: Vec<(usize, String)>,
    pub targets: Vec<usize>,
}

/// Inverse of [`serialize_row_to_prompt`], guided by the template's display
/// names.
pub fn parse_prompt(prompt: &str, tpl: &PromptTemplate) -> Result<ParsedPrompt> {
    let bad = |why: &str| Error::PromptGrammar(format!("{why}: `{prompt}`"));
    let mut context = Vec::new();
    let mut rest = prompt;
    if let Some(r) = rest.strip_prefix("given ") {
        rest = r;
        loop {
            if !context.is_empty() {
                rest = rest.strip_prefix("and ").unwrap_or(rest);
            }
            rest = rest
                .strip_prefix("a ")
                .ok_or_else(|| bad("expected `a <Name> of`"))?;
            let col = longest_name(rest, tpl, " of ").ok_or_else(|| bad("unknown field"))?;
            rest = &rest[tpl.display[col].len() + 4..];
            let end = next_delimiter(rest, tpl).ok_or_else(|| bad("unterminated value"))?;
            context.push((col, rest[..end].to_string()));
            rest = &rest[end + 2..];
            if rest.starts_with(ONE_TARGET) || rest.starts_with(MANY_TARGETS) {
                break;
            }
        }
    }
    let (many, list) = if let Some(r) = rest.strip_prefix(ONE_TARGET) {
        (false, r)
    } else if let Some(r) = rest.strip_prefix(MANY_TARGETS) {
        (true, r)
    } else {
        return Err(bad("missing question"));
    };
    let mut list = list.strip_suffix('?').ok_or_else(|| bad("missing `?`"))?;
    let mut targets = Vec::new();
    loop {
        let col = longest_name_at_end_or(list, tpl).ok_or_else(|| bad("unknown target"))?;
        targets.push(col);
        list = &list[tpl.display[col].len()..];
        if list.is_empty() {
            break;
        }
        list = list
            .strip_prefix(", ")
            .or_else(|| list.strip_prefix(" and "))
            .ok_or_else(|| bad("bad target list"))?;
    }
    if many != (targets.len() > 1) {
        return Err(bad("question form does not match target count"));
    }
    Ok(ParsedPrompt { context, targets })
}

/// Column whose display name starts `s` and is followed by `suffix`; longest wins.
fn longest_name(s: &str, tpl: &PromptTemplate, suffix: &str) -> Option<usize> {
    (0..tpl.display.len())
        .filter(|&c| {
            s.starts_with(&tpl.display[c]) && s[tpl.display[c].len()..].starts_with(suffix)
        })
        .max_by_key(|&c| tpl.display[c].len())
}

/// Column whose display name starts `s` and is followed by a list delimiter
/// or the end of the list.
fn longest_name_at_end_or(s: &str, tpl: &PromptTemplate) -> Option<usize> {
    (0..tpl.display.len())
        .filter(|&c| {
            let d = &tpl.display[c];
            s.starts_with(d.as_str()) && {
                let tail = &s[d.len()..];
                tail.is_empty() || tail.starts_with(", ") || tail.starts_with(" and ")
            }
        })
        .max_by_key(|&c| tpl.display[c].len())
}

/// Byte offset of the `, ` that ends the current clause value.
fn next_delimiter(s: &str, tpl: &PromptTemplate) -> Option<usize> {
    s.match_indices(", ").map(|(i, _)| i).find(|&i| {
        let tail = &s[i + 2..];
        if tail.starts_with(ONE_TARGET) || tail.starts_with(MANY_TARGETS) {
            return true;
        }
        let tail = tail.strip_prefix("and ").unwrap_or(tail);
        tail.strip_prefix("a ")
            .is_some_and(|t| longest_name(t, tpl, " of ").is_some())
    })
}

/// A (prompt, completion) training unit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptPair {
    pub prompt: String,
    pub completion: String,
    pub target_columns: Vec<String>,
}

/// One single-target pair per (row, non-Identifier column), row-major.
pub fn build_finetune_pairs(complete: &Table, tpl: &PromptTemplate) -> Result<Vec<PromptPair>> {
    if complete.n_missing() > 0 {
        return Err(Error::IncompleteInput);
    }
    tpl.check_table(complete)?;
    let targets = complete.schema().non_identifier();
    let mut pairs = Vec::with_capacity(complete.n_rows() * targets.len());
    for r in 0..complete.n_rows() {
        for &c in &targets {
            let value = complete.value(r, c).expect("complete");
            pairs.push(PromptPair {
                prompt: serialize_row_to_prompt(complete, r, &[c], tpl)?,
                completion: tpl.render(c, &value),
                target_columns: vec![complete.schema().columns[c].name.clone()],
            });
        }
    }
    Ok(pairs)
}

/// Extract one value per target from a model completion.
///
/// Targets are matched left to right: a numeric target takes the next
/// decimal-number token (clamped to the column domain), a categorical target
/// the earliest, then longest, ASCII case-insensitive vocabulary match.
/// Returns `None` if any target cannot be matched.
pub fn parse_completion(raw: &str, targets: &[usize], t: &Table) -> Option<Vec<Value>> {
    let number = regex_number();
    let mut pos = 0;
    let mut out = Vec::with_capacity(targets.len());
    for &c in targets {
        let cs = &t.schema().columns[c];
        match cs.kind {
            ColumnKind::Numeric => {
                let m = number.find(&raw[pos..])?;
                let x: f64 = m.as_str().parse().ok()?;
                if !x.is_finite() {
                    return None;
                }
                out.push(Value::Num(cs.clamp(x)));
                pos += m.end();
            }
            _ => {
                let vocab = t.vocab(c)?;
                let bytes = raw.as_bytes();
                let mut found = None;
                for start in pos..raw.len() {
                    if !raw.is_char_boundary(start) {
                        continue;
                    }
                    let best = vocab
                        .iter()
                        .filter(|v| {
                            !v.is_empty()
                                && bytes.len() >= start + v.len()
                                && bytes[start..start + v.len()].eq_ignore_ascii_case(v.as_bytes())
                        })
                        .max_by_key(|v| v.len());
                    if let Some(v) = best {
                        found = Some((start, v.clone()));
                        break;
                    }
                }
                let (start, v) = found?;
                pos = start + v.len();
                out.push(Value::Cat(v));
            }
        }
    }
    Some(out)
}

fn regex_number() -> &'static regex::Regex {
    static RE: std::sync::OnceLock<regex::Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| {
        regex::Regex::new(r"[-+]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?").expect("valid regex")
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{default_missing_tokens, ColumnSchema, TableSchema};

    fn movie_schema() -> TableSchema {
        TableSchema::new(vec![
            ColumnSchema::identifier("UserId"),
            ColumnSchema::identifier("MovieId"),
            ColumnSchema::categorical("Genres"),
            ColumnSchema::numeric("Rating").with_range(0.0, 5.0),
        ])
        .unwrap()
    }

    fn movie_template(t: &Table) -> PromptTemplate {
        PromptTemplate::for_table(t)
            .with_display("UserId", "UserID")
            .unwrap()
            .with_display("MovieId", "MovieID")
            .unwrap()
            .with_display("Genres", "Genre")
            .unwrap()
            .with_decimals("Rating", 1)
            .unwrap()
    }

    fn parse(text: &str) -> Table {
        Table::parse_csv(text, &movie_schema(), &default_missing_tokens()).unwrap()
    }

    #[test]
    fn single_target_example() {
        let t = parse("UserId,MovieId,Genres,Rating\n11,44,Sci-Fi,");
        let tpl = movie_template(&t);
        let p = serialize_row_to_prompt(&t, 0, &t.missing_in_row(0), &tpl).unwrap();
        assert_eq!(
            p,
            "given a UserID of 11, a MovieID of 44, and a Genre of Sci-Fi, what is the corresponding Rating?"
        );
        let parsed = parse_prompt(&p, &tpl).unwrap();
        assert_eq!(parsed.targets, vec![3]);
        assert_eq!(
            parsed.context,
            vec![(0, "11".into()), (1, "44".into()), (2, "Sci-Fi".into())]
        );
    }

    #[test]
    fn multi_target_example() {
        let t = parse("UserId,MovieId,Genres,Rating\n11,44,,");
        let tpl = movie_template(&t);
        let p = serialize_row_to_prompt(&t, 0, &t.missing_in_row(0), &tpl).unwrap();
        assert_eq!(
            p,
            "given a UserID of 11, and a MovieID of 44, what are the corresponding Genre and Rating?"
        );
        assert_eq!(parse_prompt(&p, &tpl).unwrap().targets, vec![2, 3]);
    }

    #[test]
    fn no_target() {
        let t = parse("UserId,MovieId,Genres,Rating\n11,44,Drama,3");
        let tpl = movie_template(&t);
        assert!(matches!(
            serialize_row_to_prompt(&t, 0, &[], &tpl),
            Err(Error::NoMissingTarget)
        ));
    }

    #[test]
    fn values_with_delimiters_roundtrip() {
        let schema = TableSchema::new(vec![
            ColumnSchema::categorical("title"),
            ColumnSchema::numeric("y"),
        ])
        .unwrap();
        let t = Table::parse_csv(
            "title,y\n\"Crime, and a Punishment of x\",2.5",
            &schema,
            &default_missing_tokens(),
        )
        .unwrap();
        let tpl = PromptTemplate::for_table(&t);
        let p = serialize_row_to_prompt(&t, 0, &[1], &tpl).unwrap();
        let parsed = parse_prompt(&p, &tpl).unwrap();
        assert_eq!(
            parsed.context,
            vec![(0, "Crime, and a Punishment of x".into())]
        );
    }

    #[test]
    fn pairs() {
        let t = parse("UserId,MovieId,Genres,Rating\n11,44,Sci-Fi,4.0");
        let tpl = movie_template(&t);
        let pairs = build_finetune_pairs(&t, &tpl).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].target_columns, vec!["Genres"]);
        assert_eq!(pairs[1].completion, "4.0");
        assert_eq!(
            pairs[1].prompt,
            "given a UserID of 11, a MovieID of 44, and a Genre of Sci-Fi, what is the corresponding Rating?"
        );
        let inc = parse("UserId,MovieId,Genres,Rating\n11,44,,4.0");
        assert!(matches!(
            build_finetune_pairs(&inc, &tpl),
            Err(Error::IncompleteInput)
        ));
    }

    #[test]
    fn completions() {
        let t = parse("UserId,MovieId,Genres,Rating\n11,44,Sci-Fi,4.0\n1,2,Drama,3");
        assert_eq!(
            parse_completion(" 4.0", &[3], &t),
            Some(vec![Value::Num(4.0)])
        );
        assert_eq!(
            parse_completion("6.3", &[3], &t),
            Some(vec![Value::Num(5.0)])
        );
        assert_eq!(parse_completion("a great movie", &[3], &t), None);
        assert_eq!(
            parse_completion("sci-fi and 2.5", &[2, 3], &t),
            Some(vec![Value::Cat("Sci-Fi".into()), Value::Num(2.5)])
        );
        assert_eq!(parse_completion("comedy", &[2], &t), None);
    }

    #[test]
    fn template_validation() {
        let t = parse("UserId,MovieId,Genres,Rating\n11,44,Sci-Fi,4.0");
        let tpl = PromptTemplate::for_table(&t);
        assert!(tpl.clone().with_display("Genres", "UserId").is_err());
        assert!(tpl.clone().with_display("Genres", "kind of genre").is_err());
        assert!(tpl.with_decimals("Genres", 1).is_err());
    }
}
