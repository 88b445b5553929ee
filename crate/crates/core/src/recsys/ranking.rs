//! Top-k ranking evaluation: per-user holdout of the most recent
//! interactions, one held-out positive scored against sampled negatives.
//!
//! A candidate row for item `i` is the evaluated row with its item column set
//! to `i` and its item-attribute columns (the non-identifier categorical
//! columns other than the label) set to `i`'s catalog values. Numeric and
//! other identifier columns keep the evaluated row's values.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{ndcg_at_k, recall_at_k, RankedEval};
use crate::rng;
use crate::table::{ColumnKind, Table, TableBuilder, Value};

use super::RecModel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingProtocol {
    pub n_negatives: usize,
    pub k_values: Vec<usize>,
    /// Fraction of each user's interactions held out for evaluation.
    pub holdout_frac: f64,
    /// Sampled negatives (label 0) added per training positive.
    pub train_negatives: usize,
}

impl Default for RankingProtocol {
    fn default() -> Self {
        RankingProtocol {
            n_negatives: 99,
            k_values: vec![3, 5, 10],
            holdout_frac: 0.2,
            train_negatives: 1,
        }
    }
}

impl RankingProtocol {
    pub fn validate(&self) -> Result<()> {
        let max_k = self.k_values.iter().copied().max().unwrap_or(0);
        if self.k_values.is_empty() || self.k_values.contains(&0) {
            return Err(Error::Config("k_values must be non-empty and ≥ 1".into()));
        }
        if self.n_negatives == 0 || self.n_negatives + 1 < max_k {
            return Err(Error::Config(format!(
                "n_negatives ({}) must be ≥ max(k_values) − 1 = {}",
                self.n_negatives,
                max_k - 1
            )));
        }
        if !(0.0..=1.0).contains(&self.holdout_frac) {
            return Err(Error::Config("holdout_frac must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Item ids compare numerically when both parse as numbers, else as text.
pub fn item_order(a: &str, b: &str) -> Ordering {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x
            .partial_cmp(&y)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.cmp(b)),
        _ => a.cmp(b),
    }
}

fn observed_cat(t: &Table, r: usize, c: usize) -> Result<String> {
    t.value(r, c)
        .and_then(|v| v.as_cat().map(str::to_string))
        .ok_or(Error::MaskedInput)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UserHoldout {
    pub train: Vec<usize>,
    /// Held-out rows, grouped by user in order of first appearance.
    pub test: Vec<usize>,
}

/// Hold out `floor(frac · n_u)` of each user's interactions (at least one
/// when the user has two or more), taking the latest by timestamp, ties and
/// timestamp-less tables by row order.
pub fn user_holdout(
    t: &Table,
    user_col: usize,
    timestamp_col: Option<usize>,
    frac: f64,
) -> Result<UserHoldout> {
    let mut by_user: Vec<(String, Vec<usize>)> = Vec::new();
    let mut pos: HashMap<String, usize> = HashMap::new();
    for r in 0..t.n_rows() {
        let u = observed_cat(t, r, user_col)?;
        let slot = *pos.entry(u.clone()).or_insert_with(|| {
            by_user.push((u, Vec::new()));
            by_user.len() - 1
        });
        by_user[slot].1.push(r);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (_, mut rows) in by_user {
        if let Some(tc) = timestamp_col {
            for &r in &rows {
                t.num(r, tc).ok_or(Error::MaskedInput)?;
            }
            rows.sort_by(|&a, &b| {
                t.num(a, tc)
                    .unwrap()
                    .total_cmp(&t.num(b, tc).unwrap())
                    .then(a.cmp(&b))
            });
        }
        let n = rows.len();
        let mut n_out = rng::floor_count(frac, n);
        if n >= 2 && frac > 0.0 {
            n_out = n_out.max(1);
        }
        let n_out = n_out.min(n.saturating_sub(1));
        test.extend_from_slice(&rows[n - n_out..]);
        train.extend_from_slice(&rows[..n - n_out]);
    }
    train.sort_unstable();
    Ok(UserHoldout { train, test })
}

/// Per-item attribute values (mode over the item's rows, first occurrence on
/// ties) and the item list in id order.
#[derive(Clone, Debug, PartialEq)]
pub struct ItemCatalog {
    pub item_col: usize,
    pub attr_cols: Vec<usize>,
    pub items: Vec<String>,
    attrs: HashMap<String, Vec<String>>,
}

impl ItemCatalog {
    pub fn build(t: &Table, item_col: usize, label_col: usize) -> Result<ItemCatalog> {
        let attr_cols: Vec<usize> = (0..t.n_cols())
            .filter(|&c| c != item_col && c != label_col && t.kind(c) == ColumnKind::Categorical)
            .collect();
        let mut counts: HashMap<String, Vec<Vec<(String, usize)>>> = HashMap::new();
        for r in 0..t.n_rows() {
            let item = observed_cat(t, r, item_col)?;
            let slots = counts
                .entry(item)
                .or_insert_with(|| vec![Vec::new(); attr_cols.len()]);
            for (slot, &c) in slots.iter_mut().zip(&attr_cols) {
                let v = observed_cat(t, r, c)?;
                match slot.iter_mut().find(|(s, _)| *s == v) {
                    Some(e) => e.1 += 1,
                    None => slot.push((v, 1)),
                }
            }
        }
        let mut items: Vec<String> = counts.keys().cloned().collect();
        items.sort_by(|a, b| item_order(a, b));
        let attrs = counts
            .into_iter()
            .map(|(item, slots)| {
                let modes = slots
                    .into_iter()
                    .map(|slot| {
                        let mut best = 0;
                        for (i, e) in slot.iter().enumerate() {
                            if e.1 > slot[best].1 {
                                best = i;
                            }
                        }
                        slot[best].0.clone()
                    })
                    .collect();
                (item, modes)
            })
            .collect();
        Ok(ItemCatalog {
            item_col,
            attr_cols,
            items,
            attrs,
        })
    }

    /// `base` row `r` with the item and its attributes replaced by `item`'s.
    fn candidate_row(&self, base: &Table, r: usize, item: &str) -> Vec<Option<Value>> {
        let mut row = base.row(r);
        row[self.item_col] = Some(Value::Cat(item.to_string()));
        for (&c, v) in self.attr_cols.iter().zip(&self.attrs[item]) {
            row[c] = Some(Value::Cat(v.clone()));
        }
        row
    }
}

fn items_of(
    t: &Table,
    rows: &[usize],
    user_col: usize,
    item_col: usize,
) -> Result<HashMap<String, HashSet<String>>> {
    let mut m: HashMap<String, HashSet<String>> = HashMap::new();
    for &r in rows {
        m.entry(observed_cat(t, r, user_col)?)
            .or_default()
            .insert(observed_cat(t, r, item_col)?);
    }
    Ok(m)
}

fn rows_table(base: &Table, rows: Vec<Vec<Option<Value>>>) -> Result<Table> {
    let mut schema = base.schema().clone();
    // Candidate rows may carry categories absent from a declared vocabulary.
    for c in &mut schema.columns {
        c.vocabulary = None;
    }
    let mut b = TableBuilder::new(schema);
    for row in &rows {
        b.push_row(row)?;
    }
    Ok(b.finish())
}

/// Training rows for the ranking task: every row of `t[train]` as a positive
/// (label = its interaction strength) plus `n_neg` sampled items per positive
/// that the user never interacted with, labeled 0.
pub fn ranking_training_table(
    t: &Table,
    train: &[usize],
    user_col: usize,
    label_col: usize,
    catalog: &ItemCatalog,
    n_neg: usize,
    seed: u64,
) -> Result<Table> {
    let seen = items_of(
        t,
        &(0..t.n_rows()).collect::<Vec<_>>(),
        user_col,
        catalog.item_col,
    )?;
    let mut rows = Vec::with_capacity(train.len() * (1 + n_neg));
    for (i, &r) in train.iter().enumerate() {
        rows.push(t.row(r));
        if n_neg == 0 {
            continue;
        }
        let user = observed_cat(t, r, user_col)?;
        let pool: Vec<&String> = catalog
            .items
            .iter()
            .filter(|it| !seen[&user].contains(*it))
            .collect();
        let take = n_neg.min(pool.len());
        let mut rng = rng::substream(seed, i as u64);
        for j in index::sample(&mut rng, pool.len(), take).into_vec() {
            let mut row = catalog.candidate_row(t, r, pool[j]);
            row[label_col] = Some(Value::Num(0.0));
            rows.push(row);
        }
    }
    rows_table(t, rows)
}

/// Rank the positive in row `r` of `t` against `n_negatives` items sampled
/// from `pool` (which must exclude every item the user interacted with).
/// Scores descend; ties go to the smaller item id.
pub fn rank_topk(
    model: &RecModel,
    t: &Table,
    r: usize,
    pool: &[String],
    catalog: &ItemCatalog,
    n_negatives: usize,
    rng: &mut rng::Rng,
) -> Result<Vec<String>> {
    if pool.len() < n_negatives {
        return Err(Error::InsufficientCandidates {
            needed: n_negatives,
            available: pool.len(),
        });
    }
    let positive = observed_cat(t, r, catalog.item_col)?;
    let mut items = vec![positive];
    items.extend(
        index::sample(rng, pool.len(), n_negatives)
            .into_iter()
            .map(|j| pool[j].clone()),
    );
    let rows = items
        .iter()
        .map(|it| catalog.candidate_row(t, r, it))
        .collect();
    let scores = model.predict(&rows_table(t, rows)?)?;
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| item_order(&items[a], &items[b]))
    });
    Ok(order.into_iter().map(|i| items[i].clone()).collect())
}

/// Mean R@k and N@k over every held-out row, keyed `R@k` / `N@k` in
/// `k_values` order (all recalls first).
pub fn evaluate_ranking(
    model: &RecModel,
    t: &Table,
    holdout: &UserHoldout,
    user_col: usize,
    catalog: &ItemCatalog,
    proto: &RankingProtocol,
    seed: u64,
) -> Result<Vec<(String, f64)>> {
    let all: Vec<usize> = (0..t.n_rows()).collect();
    let seen = items_of(t, &all, user_col, catalog.item_col)?;
    let mut recall = vec![0.0; proto.k_values.len()];
    let mut ndcg = vec![0.0; proto.k_values.len()];
    for (i, &r) in holdout.test.iter().enumerate() {
        let user = observed_cat(t, r, user_col)?;
        let pool: Vec<String> = catalog
            .items
            .iter()
            .filter(|it| !seen[&user].contains(*it))
            .cloned()
            .collect();
        let mut rng = rng::substream(seed, i as u64);
        let ranked = rank_topk(model, t, r, &pool, catalog, proto.n_negatives, &mut rng)?;
        let positive = observed_cat(t, r, catalog.item_col)?;
        for (j, &k) in proto.k_values.iter().enumerate() {
            let e = RankedEval::new(ranked.clone(), [positive.clone()], k)?;
            recall[j] += recall_at_k(&e)?;
            ndcg[j] += ndcg_at_k(&e)?;
        }
    }
    let n = holdout.test.len().max(1) as f64;
    let mut out = Vec::new();
    for (j, k) in proto.k_values.iter().enumerate() {
        out.push((format!("R@{k}"), recall[j] / n));
    }
    for (j, k) in proto.k_values.iter().enumerate() {
        out.push((format!("N@{k}"), ndcg[j] / n));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recsys::{train, RecModelConfig, Task};
    use crate::table::{default_missing_tokens, ColumnSchema, TableSchema};

    fn interactions() -> Table {
        let schema = TableSchema::new(vec![
            ColumnSchema::identifier("user"),
            ColumnSchema::identifier("item"),
            ColumnSchema::categorical("genre"),
            ColumnSchema::numeric("rating").with_range(0.0, 5.0),
            ColumnSchema::numeric("ts"),
        ])
        .unwrap();
        let mut csv = String::from("user,item,genre,rating,ts\n");
        for u in 0..4 {
            for j in 0..5 {
                let item = (u * 3 + j) % 12;
                csv += &format!("{u},{item},g{},{},{}\n", item % 3, 1 + (item % 5), 100 - j);
            }
        }
        Table::parse_csv(&csv, &schema, &default_missing_tokens()).unwrap()
    }

    #[test]
    fn protocol_validation() {
        assert!(RankingProtocol::default().validate().is_ok());
        let p = RankingProtocol {
            n_negatives: 5,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn numeric_item_order() {
        let mut ids = vec!["10", "9", "b", "100", "a"];
        ids.sort_by(|a, b| item_order(a, b));
        assert_eq!(ids, vec!["9", "10", "100", "a", "b"]);
    }

    #[test]
    fn holdout_takes_latest() {
        let t = interactions();
        let h = user_holdout(&t, 0, Some(4), 0.2).unwrap();
        // timestamps decrease with j, so the first row of each user is latest
        assert_eq!(h.test, vec![0, 5, 10, 15]);
        assert_eq!(h.train.len(), 16);
        let h = user_holdout(&t, 0, None, 0.2).unwrap();
        assert_eq!(h.test, vec![4, 9, 14, 19]);
    }

    #[test]
    fn catalog_and_constant_model_tie_order() {
        let t = interactions();
        let cat = ItemCatalog::build(&t, 1, 3).unwrap();
        assert_eq!(cat.items.len(), 12);
        assert_eq!(cat.items[..3], ["0", "1", "2"]);
        let mut cfg = RecModelConfig::new(Task::TopKRanking, "rating");
        cfg.epochs = 0;
        let (mut model, _) = train(&t, &cfg).unwrap();
        // Zero every weight: the score is the output bias for every row.
        let bias = model.layout.output_bias();
        for (i, p) in model.params.iter_mut().enumerate() {
            if i != bias {
                *p = 0.0;
            }
        }
        let pool: Vec<String> = cat
            .items
            .iter()
            .filter(|i| !["0", "1", "2", "3", "4"].contains(&i.as_str()))
            .cloned()
            .collect();
        let ranked = rank_topk(&model, &t, 0, &pool, &cat, 7, &mut rng::seeded(1)).unwrap();
        assert_eq!(ranked, vec!["0", "5", "6", "7", "8", "9", "10", "11"]);
        assert!(matches!(
            rank_topk(&model, &t, 0, &pool, &cat, 8, &mut rng::seeded(1)),
            Err(Error::InsufficientCandidates {
                needed: 8,
                available: 7
            })
        ));
    }

    #[test]
    fn negatives_are_unseen_items() {
        let t = interactions();
        let cat = ItemCatalog::build(&t, 1, 3).unwrap();
        let train_rows: Vec<usize> = (0..5).collect();
        let tt = ranking_training_table(&t, &train_rows, 0, 3, &cat, 2, 0).unwrap();
        assert_eq!(tt.n_rows(), 15);
        for r in 0..tt.n_rows() {
            if r % 3 != 0 {
                assert_eq!(tt.num(r, 3), Some(0.0));
                let item: u32 = tt.value(r, 1).unwrap().as_cat().unwrap().parse().unwrap();
                assert!(item > 4, "item {item} belongs to user 0");
                assert_eq!(
                    tt.value(r, 2).unwrap().as_cat().unwrap(),
                    format!("g{}", item % 3)
                );
            }
        }
    }
}
