//! Recall@K, retention, and robustness drop, plus the JSON report tying them
//! together.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{load_run, Qrels, RankedList};

/// Fraction of qrels queries with at least one relevant doc in their top `k`.
/// A query absent from `run` is a miss.
pub fn recall_at_k(run: &[RankedList], qrels: &Qrels, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParam("k must be >= 1".into()));
    }
    if qrels.is_empty() {
        return Err(Error::InvalidParam("qrels are empty".into()));
    }
    let by_query: HashMap<&str, &RankedList> = run.iter().map(|r| (r.query_id.as_str(), r)).collect();
    let hits = qrels
        .iter()
        .filter(|(qid, relevant)| {
            by_query
                .get(qid.as_str())
                .is_some_and(|list| list.doc_ids().take(k).any(|d| relevant.contains(d)))
        })
        .count();
    Ok(hits as f64 / qrels.len() as f64)
}

pub fn retention(ours: f64, baseline: f64) -> Result<f64> {
    if !(baseline > 0.0) {
        return Err(Error::InvalidParam(format!("baseline must be > 0, got {baseline}")));
    }
    Ok(ours / baseline)
}

/// Mean of `original - attacked[i]`.
pub fn average_drop(original: f64, attacked: &[f64]) -> Result<f64> {
    if attacked.is_empty() {
        return Err(Error::InvalidParam("no attacked values".into()));
    }
    Ok(attacked.iter().map(|a| original - a).sum::<f64>() / attacked.len() as f64)
}

fn recall_key(k: usize) -> String {
    format!("R@{k}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub recall: BTreeMap<String, f64>,
    /// Original minus attacked recall at the report k.
    pub drop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub run: String,
    pub num_queries: usize,
    pub ks: Vec<usize>,
    pub recall: BTreeMap<String, f64>,
    /// k used for drops and retention.
    pub report_k: usize,
    pub attacks: BTreeMap<String, AttackResult>,
    pub average_drop: Option<f64>,
    /// Our recall at `report_k` over each baseline's.
    pub retention: BTreeMap<String, f64>,
    pub metadata: BTreeMap<String, String>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// One row for the original run and one per attack, recall columns in
    /// `ks` order, and a closing drop row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("run");
        for &k in &self.ks {
            out.push_str(&format!(",{}", recall_key(k)));
        }
        out.push('\n');
        let row = |name: &str, recall: &BTreeMap<String, f64>| {
            let mut line = name.to_string();
            for &k in &self.ks {
                line.push_str(&format!(",{:.4}", recall.get(&recall_key(k)).copied().unwrap_or(f64::NAN)));
            }
            line.push('\n');
            line
        };
        out.push_str(&row("original", &self.recall));
        for (name, a) in &self.attacks {
            out.push_str(&row(name, &a.recall));
        }
        if let Some(d) = self.average_drop {
            out.push_str(&format!("average_drop@{},{d:.4}\n", self.report_k));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub ks: Vec<usize>,
    pub report_k: usize,
    /// attack name -> run file produced from the perturbed queries.
    pub attacked: BTreeMap<String, PathBuf>,
    /// baseline name -> run file.
    pub baselines: BTreeMap<String, PathBuf>,
    pub metadata: BTreeMap<String, String>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            ks: vec![5, 10, 20, 100],
            report_k: 100,
            attacked: BTreeMap::new(),
            baselines: BTreeMap::new(),
            metadata: BTreeMap::new(),
        }
    }
}

fn recalls(run: &[RankedList], qrels: &Qrels, ks: &[usize]) -> Result<BTreeMap<String, f64>> {
    ks.iter()
        .map(|&k| Ok((recall_key(k), recall_at_k(run, qrels, k)?)))
        .collect()
}

fn display_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

pub fn evaluate_run(run_file: impl AsRef<Path>, qrels: &Qrels, opts: &EvalOptions) -> Result<EvalReport> {
    let run_file = run_file.as_ref();
    let mut ks = opts.ks.clone();
    if !ks.contains(&opts.report_k) {
        ks.push(opts.report_k);
    }
    ks.sort_unstable();
    ks.dedup();
    let run = load_run(run_file)?;
    let recall = recalls(&run, qrels, &ks)?;
    let original = recall[&recall_key(opts.report_k)];

    let mut attacks = BTreeMap::new();
    for (name, path) in &opts.attacked {
        let attacked = load_run(path)?;
        let r = recalls(&attacked, qrels, &ks)?;
        let drop = original - r[&recall_key(opts.report_k)];
        attacks.insert(name.clone(), AttackResult { recall: r, drop });
    }
    let average_drop = if attacks.is_empty() {
        None
    } else {
        let values: Vec<f64> = attacks
            .values()
            .map(|a| a.recall[&recall_key(opts.report_k)])
            .collect();
        Some(average_drop(original, &values)?)
    };

    let mut retention_map = BTreeMap::new();
    for (name, path) in &opts.baselines {
        let base = recall_at_k(&load_run(path)?, qrels, opts.report_k)?;
        retention_map.insert(name.clone(), retention(original, base)?);
    }

    Ok(EvalReport {
        run: display_name(run_file),
        num_queries: qrels.len(),
        ks,
        recall,
        report_k: opts.report_k,
        attacks,
        average_drop,
        retention: retention_map,
        metadata: opts.metadata.clone(),
    })
}
