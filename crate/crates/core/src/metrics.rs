//! Classification, ranking and regression metrics.
//!
//! Undefined ratios (0/0) evaluate to 0 so reports never carry NaN.

use std::collections::HashSet;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryConfusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl BinaryConfusion {
    /// Tally predictions against truth; scores ≥ `threshold` are positive.
    pub fn from_scores(scores: &[f64], truth: &[bool], threshold: f64) -> Result<Self> {
        if scores.len() != truth.len() {
            return Err(Error::LengthMismatch(scores.len(), truth.len()));
        }
        let mut c = BinaryConfusion::default();
        for (&s, &t) in scores.iter().zip(truth) {
            match (s >= threshold, t) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    /// The same counts with the roles of the two classes swapped.
    pub fn flipped(&self) -> Self {
        BinaryConfusion {
            tp: self.tn,
            fp: self.fn_,
            tn: self.tp,
            fn_: self.fp,
        }
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// (precision, recall, f1) of the positive class.
pub fn precision_recall_f1(c: &BinaryConfusion) -> (f64, f64, f64) {
    let tp = c.tp as f64;
    let precision = ratio(tp, tp + c.fp as f64);
    let recall = ratio(tp, tp + c.fn_ as f64);
    let f1 = ratio(2.0 * precision * recall, precision + recall);
    (precision, recall, f1)
}

/// A ranked list scored against a relevant set at cutoff `k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankedEval<T: Eq + Hash> {
    pub ranked_items: Vec<T>,
    pub relevant_items: HashSet<T>,
    pub k: usize,
}

impl<T: Eq + Hash + Clone> RankedEval<T> {
    pub fn new(
        ranked_items: Vec<T>,
        relevant_items: impl IntoIterator<Item = T>,
        k: usize,
    ) -> Result<Self> {
        let mut seen = HashSet::new();
        if !ranked_items.iter().all(|i| seen.insert(i)) {
            return Err(Error::Data("ranked list contains duplicates".into()));
        }
        if k == 0 {
            return Err(Error::Data("k must be at least 1".into()));
        }
        Ok(RankedEval {
            ranked_items,
            relevant_items: relevant_items.into_iter().collect(),
            k,
        })
    }

    fn hits(&self) -> impl Iterator<Item = usize> + '_ {
        self.ranked_items
            .iter()
            .take(self.k)
            .enumerate()
            .filter(|(_, it)| self.relevant_items.contains(it))
            .map(|(i, _)| i + 1)
    }
}

/// |top-k ∩ relevant| / |relevant|.
pub fn recall_at_k<T: Eq + Hash + Clone>(e: &RankedEval<T>) -> Result<f64> {
    if e.relevant_items.is_empty() {
        return Err(Error::NoRelevantItems);
    }
    Ok(e.hits().count() as f64 / e.relevant_items.len() as f64)
}

/// Binary-gain NDCG with `1 / log2(rank + 1)` discounts, ranks from 1.
pub fn ndcg_at_k<T: Eq + Hash + Clone>(e: &RankedEval<T>) -> Result<f64> {
    if e.relevant_items.is_empty() {
        return Err(Error::NoRelevantItems);
    }
    let dcg: f64 = e.hits().map(|rank| 1.0 / ((rank + 1) as f64).log2()).sum();
    let ideal = e.k.min(e.relevant_items.len());
    let idcg: f64 = (1..=ideal)
        .map(|rank| 1.0 / ((rank + 1) as f64).log2())
        .sum();
    Ok(dcg / idcg)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionErrors {
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
}

pub fn regression_errors(pred: &[f64], truth: &[f64]) -> Result<RegressionErrors> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(Error::Empty);
    }
    let n = pred.len() as f64;
    let (abs, sq) = pred.iter().zip(truth).fold((0.0, 0.0), |(a, s), (p, t)| {
        (a + (p - t).abs(), s + (p - t) * (p - t))
    });
    let mse = sq / n;
    Ok(RegressionErrors {
        mae: abs / n,
        mse,
        rmse: mse.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conf(tp: u64, fp: u64, fn_: u64) -> BinaryConfusion {
        BinaryConfusion { tp, fp, tn: 0, fn_ }
    }

    #[test]
    fn prf() {
        let (p, r, f) = precision_recall_f1(&conf(90, 10, 10));
        assert!((p - 0.9).abs() < 1e-12 && (r - 0.9).abs() < 1e-12 && (f - 0.9).abs() < 1e-12);
        assert_eq!(precision_recall_f1(&conf(0, 0, 0)), (0.0, 0.0, 0.0));
        let (p, r, f) = precision_recall_f1(&conf(1, 1, 3));
        assert_eq!((p, r), (0.5, 0.25));
        assert!((f - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn confusion_from_scores() {
        let c =
            BinaryConfusion::from_scores(&[0.9, 0.2, 0.5, 0.1], &[true, true, false, false], 0.5)
                .unwrap();
        assert_eq!(
            c,
            BinaryConfusion {
                tp: 1,
                fp: 1,
                tn: 1,
                fn_: 1
            }
        );
        assert_eq!(c.flipped().flipped(), c);
    }

    #[test]
    fn recall() {
        let e = RankedEval::new(vec![1, 2, 3, 4, 5, 6], [3, 9], 5).unwrap();
        assert_eq!(recall_at_k(&e).unwrap(), 0.5);
        let e = RankedEval::new(vec![1, 2, 3], [1, 2], 3).unwrap();
        assert_eq!(recall_at_k(&e).unwrap(), 1.0);
        let e = RankedEval::new((1..=11).collect(), [11], 10).unwrap();
        assert_eq!(recall_at_k(&e).unwrap(), 0.0);
        let e = RankedEval::new(vec![1], Vec::<i32>::new(), 1).unwrap();
        assert!(matches!(recall_at_k(&e), Err(Error::NoRelevantItems)));
        assert!(RankedEval::new(vec![1, 1], [1], 1).is_err());
    }

    #[test]
    fn ndcg() {
        let e = RankedEval::new(vec!["a", "x", "b", "y"], ["a", "b"], 3).unwrap();
        assert!((ndcg_at_k(&e).unwrap() - 0.919720).abs() < 1e-5);
        let e = RankedEval::new(vec![1, 2, 3], [1, 2], 3).unwrap();
        assert!((ndcg_at_k(&e).unwrap() - 1.0).abs() < 1e-12);
        let e = RankedEval::new(vec![1, 2, 3, 4], [4], 3).unwrap();
        assert_eq!(ndcg_at_k(&e).unwrap(), 0.0);
    }

    #[test]
    fn regression() {
        let r = regression_errors(&[1.0, 2.0], &[2.0, 4.0]).unwrap();
        assert_eq!((r.mae, r.mse), (1.5, 2.5));
        assert!((r.rmse - 1.58114).abs() < 1e-5);
        let r = regression_errors(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!((r.mae, r.mse, r.rmse), (0.0, 0.0, 0.0));
        let r = regression_errors(&[0.0], &[3.0]).unwrap();
        assert_eq!((r.mae, r.mse, r.rmse), (3.0, 9.0, 3.0));
        assert!(matches!(
            regression_errors(&[1.0], &[]),
            Err(Error::LengthMismatch(1, 0))
        ));
        assert!(matches!(regression_errors(&[], &[]), Err(Error::Empty)));
    }
}
