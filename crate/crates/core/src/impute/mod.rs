//! Baseline imputation strategies behind one fit/impute contract.
//!
//! Every imputer is fitted on a table (normally the complete-row subset) and
//! then fills every masked cell of another table without touching observed
//! cells. Case-wise deletion is the exception: it filters rows instead.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{split_complete_incomplete, Table};

mod iterative;
mod knn;
mod simple;

pub use iterative::{IterativeConfig, IterativeImputer, IterativeReport};
pub use knn::{KnnConfig, KnnImputer};
pub(crate) use simple::fill_cells as fill_with;
pub use simple::{MeanImputer, ZeroImputer};

pub trait Imputer: Send + Sync {
    fn name(&self) -> &'static str;

    /// Prepare internal state from `fit` (usually the complete rows).
    fn fit(&mut self, fit: &Table) -> Result<()>;

    /// Fill every masked cell of `t`.
    fn impute(&self, t: &Table) -> Result<Table>;
}

/// Imputer names as they appear in experiment configs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImputerName {
    Deletion,
    Zero,
    Mean,
    Knn,
    Iterative,
    Llm,
}

impl ImputerName {
    pub const ALL: [ImputerName; 6] = [
        ImputerName::Deletion,
        ImputerName::Zero,
        ImputerName::Mean,
        ImputerName::Knn,
        ImputerName::Iterative,
        ImputerName::Llm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ImputerName::Deletion => "deletion",
            ImputerName::Zero => "zero",
            ImputerName::Mean => "mean",
            ImputerName::Knn => "knn",
            ImputerName::Iterative => "iterative",
            ImputerName::Llm => "llm",
        }
    }

    /// Row label used in reports.
    pub fn display(self) -> &'static str {
        match self {
            ImputerName::Deletion => "Case-Wise Deletion",
            ImputerName::Zero => "Zero",
            ImputerName::Mean => "Mean",
            ImputerName::Knn => "Knn",
            ImputerName::Iterative => "Multivariate",
            ImputerName::Llm => "LLM",
        }
    }
}

impl fmt::Display for ImputerName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ImputerName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ImputerName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown imputer `{s}`")))
    }
}

/// Keep only rows without masked cells, in order.
pub fn casewise_delete(t: &Table) -> Table {
    split_complete_incomplete(t).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{default_missing_tokens, ColumnSchema, TableSchema};

    #[test]
    fn deletion() {
        let schema =
            TableSchema::new(vec![ColumnSchema::numeric("a"), ColumnSchema::numeric("b")]).unwrap();
        let t = Table::parse_csv(
            "a,b\n1,2\n,3\n4,5\n6,\n7,8",
            &schema,
            &default_missing_tokens(),
        )
        .unwrap();
        assert_eq!(casewise_delete(&t).n_rows(), 3);
        let full = Table::parse_csv("a,b\n1,2", &schema, &default_missing_tokens()).unwrap();
        assert_eq!(casewise_delete(&full), full);
        let none = Table::parse_csv("a,b\n,2\n1,", &schema, &default_missing_tokens()).unwrap();
        assert_eq!(casewise_delete(&none).n_rows(), 0);
    }

    #[test]
    fn names_parse() {
        for n in ImputerName::ALL {
            assert_eq!(n.as_str().parse::<ImputerName>().unwrap(), n);
        }
        assert!("bogus".parse::<ImputerName>().is_err());
    }
}
