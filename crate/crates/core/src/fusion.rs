//! Hybrid ranking from a sparse and a dense list.
//!
//! The default strategy MinMax-normalizes each list to `[0, 1]` and ranks by
//! `w1 * s'_sparse + w2 * s'_dense`, where a document missing from a list
//! scores 0 for that list.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{Query, RankedList, ScoredDoc, Searcher};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FusionStrategy {
    #[default]
    MinMaxSum,
    /// Weighted sum of raw scores.
    SimpleSum,
    /// Product of MinMax-normalized scores; weights are not used.
    Multiplication,
}

impl FromStr for FusionStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minmax_sum" | "minmax-sum" => Ok(FusionStrategy::MinMaxSum),
            "simple_sum" | "simple-sum" => Ok(FusionStrategy::SimpleSum),
            "multiplication" => Ok(FusionStrategy::Multiplication),
            other => Err(Error::Config(format!("unknown fusion strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    pub w1: f64,
    pub w2: f64,
    pub strategy: FusionStrategy,
    pub k_candidates: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            w1: 0.5,
            w2: 0.5,
            strategy: FusionStrategy::MinMaxSum,
            k_candidates: 100,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.w1 >= 0.0 && self.w2 >= 0.0) {
            return Err(Error::InvalidParam("fusion weights must be non-negative".into()));
        }
        if self.k_candidates == 0 {
            return Err(Error::InvalidParam("k_candidates must be >= 1".into()));
        }
        Ok(())
    }
}

/// `(s - min) / (max - min)`; a list whose scores are all equal maps to 1.0.
pub fn minmax_normalize(list: &RankedList) -> RankedList {
    let scores = list.entries().iter().map(|e| e.score);
    let min = scores.clone().fold(f64::INFINITY, f64::min);
    let max = scores.fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    let entries = list
        .entries()
        .iter()
        .map(|e| {
            let s = if range > 0.0 { (e.score - min) / range } else { 1.0 };
            ScoredDoc::new(e.doc_id.clone(), s)
        })
        .collect();
    RankedList::new(list.query_id.clone(), entries).expect("normalizing keeps ids unique")
}

/// Scores every document in the union of both lists.
pub fn fuse(sparse: &RankedList, dense: &RankedList, cfg: &FusionConfig) -> Result<RankedList> {
    cfg.validate()?;
    if sparse.query_id != dense.query_id {
        return Err(Error::QueryMismatch {
            left: sparse.query_id.clone(),
            right: dense.query_id.clone(),
        });
    }
    let (a, b) = match cfg.strategy {
        FusionStrategy::SimpleSum => (sparse.clone(), dense.clone()),
        FusionStrategy::MinMaxSum | FusionStrategy::Multiplication => {
            (minmax_normalize(sparse), minmax_normalize(dense))
        }
    };
    let mut union: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for e in a.entries() {
        union.entry(&e.doc_id).or_default().0 = e.score;
    }
    for e in b.entries() {
        union.entry(&e.doc_id).or_default().1 = e.score;
    }
    let entries = union
        .into_iter()
        .map(|(id, (s1, s2))| {
            let s = match cfg.strategy {
                FusionStrategy::MinMaxSum | FusionStrategy::SimpleSum => cfg.w1 * s1 + cfg.w2 * s2,
                FusionStrategy::Multiplication => s1 * s2,
            };
            ScoredDoc::new(id, s)
        })
        .collect();
    RankedList::new(sparse.query_id.clone(), entries)
}

/// Fetches `k_candidates` from each retriever, fuses, and keeps the top `k_candidates`.
pub fn hybrid_search(
    query: &Query,
    sparse: &dyn Searcher,
    dense: &dyn Searcher,
    cfg: &FusionConfig,
) -> Result<RankedList> {
    cfg.validate()?;
    let s = sparse.search(query, cfg.k_candidates)?;
    let d = dense.search(query, cfg.k_candidates)?;
    let mut fused = fuse(&s, &d, cfg)?;
    fused.truncate(cfg.k_candidates);
    Ok(fused)
}
