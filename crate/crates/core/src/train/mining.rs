use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainExample;
use crate::error::{Error, Result};
use crate::model::{Qrels, Searcher};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiningRecord {
    pub query_id: String,
    pub round: usize,
    pub negatives: Vec<String>,
    pub provenance: String,
    /// Every retrieved document was a positive (or nothing was retrieved).
    pub exhausted: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MiningReport {
    pub records: Vec<MiningRecord>,
}

impl MiningReport {
    pub fn exhausted(&self) -> usize {
        self.records.iter().filter(|r| r.exhausted).count()
    }

    pub fn extend(&mut self, other: MiningReport) {
        self.records.extend(other.records);
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl()?.as_bytes())
            .map_err(|e| Error::io(path, e))
    }
}

/// Retrieves the top `k` for every example, drops all known positives and
/// keeps the first `m` survivors as hard negatives.
pub fn mine_hard_negatives(
    retriever: &dyn Searcher,
    data: &[TrainExample],
    qrels: &Qrels,
    k: usize,
    m: usize,
    round: usize,
) -> Result<(Vec<TrainExample>, MiningReport)> {
    let provenance = retriever.provenance();
    let mut report = MiningReport::default();
    let mut out = Vec::with_capacity(data.len());
    for ex in data {
        let ranked = retriever.search(&ex.query, k)?;
        let negatives: Vec<String> = ranked
            .doc_ids()
            .filter(|&id| id != ex.positive && !qrels.is_relevant(&ex.query.id, id))
            .take(m)
            .map(str::to_string)
            .collect();
        report.records.push(MiningRecord {
            query_id: ex.query.id.clone(),
            round,
            negatives: negatives.clone(),
            provenance: provenance.clone(),
            exhausted: negatives.is_empty(),
        });
        out.push(TrainExample {
            query: ex.query.clone(),
            positive: ex.positive.clone(),
            hard_negatives: negatives,
        });
    }
    Ok((out, report))
}
