//! Corpus, query and relevance-judgment types plus their on-disk formats.
//!
//! * corpus: JSON lines with keys `id`, `title`, `text`
//! * queries: `id<TAB>text`
//! * qrels: TREC `qid 0 docid rel`
//! * runs: TREC `qid Q0 docid rank score tag`

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    #[serde(default)]
    pub title: String,
    pub text: String,
}

impl Document {
    pub fn new(id: impl Into<String>, title: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            title: title.into(),
            text: text.into(),
        }
    }

    /// Title and body joined by a single space; this is what gets indexed and encoded.
    pub fn full_text(&self) -> String {
        if self.title.is_empty() {
            self.text.clone()
        } else {
            format!("{} {}", self.title, self.text)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub id: String,
    pub text: String,
}

impl Query {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Query {
            id: id.into(),
            text: text.into(),
        }
    }
}

/// Relevant documents per query. Only positive judgments are kept.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    map: BTreeMap<String, BTreeSet<String>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query_id: impl Into<String>, doc_id: impl Into<String>) {
        self.map
            .entry(query_id.into())
            .or_default()
            .insert(doc_id.into());
    }

    pub fn relevant(&self, query_id: &str) -> Option<&BTreeSet<String>> {
        self.map.get(query_id)
    }

    pub fn is_relevant(&self, query_id: &str, doc_id: &str) -> bool {
        self.map
            .get(query_id)
            .is_some_and(|docs| docs.contains(doc_id))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &BTreeSet<String>)> {
        self.map.iter()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredDoc {
    pub doc_id: String,
    pub score: f64,
}

impl ScoredDoc {
    pub fn new(doc_id: impl Into<String>, score: f64) -> Self {
        ScoredDoc {
            doc_id: doc_id.into(),
            score,
        }
    }
}

/// Score descending, then doc id ascending.
pub fn canonical_order(a: &ScoredDoc, b: &ScoredDoc) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.doc_id.cmp(&b.doc_id))
}

/// A per-query ranking, always held in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub query_id: String,
    entries: Vec<ScoredDoc>,
}

impl RankedList {
    /// Sorts `entries` canonically. Rejects non-finite scores and repeated doc ids.
    pub fn new(query_id: impl Into<String>, mut entries: Vec<ScoredDoc>) -> Result<Self> {
        if let Some(bad) = entries.iter().find(|e| !e.score.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "non-finite score {} for {:?}",
                bad.score, bad.doc_id
            )));
        }
        let mut seen = HashSet::with_capacity(entries.len());
        for e in &entries {
            if !seen.insert(e.doc_id.as_str()) {
                return Err(Error::DuplicateId(e.doc_id.clone()));
            }
        }
        entries.sort_by(canonical_order);
        Ok(RankedList {
            query_id: query_id.into(),
            entries,
        })
    }

    pub fn empty(query_id: impl Into<String>) -> Self {
        RankedList {
            query_id: query_id.into(),
            entries: Vec::new(),
        }
    }

    /// Keeps the best `k` entries of an unsorted candidate set.
    pub fn top_k(query_id: impl Into<String>, entries: Vec<ScoredDoc>, k: usize) -> Result<Self> {
        let mut list = Self::new(query_id, entries)?;
        list.entries.truncate(k);
        Ok(list)
    }

    pub fn entries(&self) -> &[ScoredDoc] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<ScoredDoc> {
        self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn truncate(&mut self, k: usize) {
        self.entries.truncate(k);
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.doc_id.as_str())
    }

    pub fn score_of(&self, doc_id: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.doc_id == doc_id)
            .map(|e| e.score)
    }
}

/// Anything that can produce a ranking for a query.
pub trait Searcher {
    fn search(&self, query: &Query, k: usize) -> Result<RankedList>;

    /// Short tag recorded in mining reports and run files.
    fn provenance(&self) -> String;
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn lines(path: &Path) -> Result<Vec<String>> {
    open(path)?
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(path, e))
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    let path = path.as_ref();
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in lines(path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(line)
            .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        if doc.text.trim().is_empty() {
            return Err(Error::parse(path, i + 1, format!("document {:?} has empty text", doc.id)));
        }
        if !seen.insert(doc.id.clone()) {
            return Err(Error::parse(path, i + 1, format!("duplicate id {:?}", doc.id)));
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn save_corpus(path: impl AsRef<Path>, docs: &[Document]) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    for doc in docs {
        serde_json::to_writer(&mut out, doc)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn load_queries(path: impl AsRef<Path>) -> Result<Vec<Query>> {
    let path = path.as_ref();
    let mut queries = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in lines(path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, text) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, i + 1, "expected id<TAB>text"))?;
        if !seen.insert(id.to_string()) {
            return Err(Error::parse(path, i + 1, format!("duplicate id {id:?}")));
        }
        queries.push(Query::new(id, text));
    }
    Ok(queries)
}

pub fn save_queries(path: impl AsRef<Path>, queries: &[Query]) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    for q in queries {
        writeln!(out, "{}\t{}", q.id, q.text).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn load_qrels(path: impl AsRef<Path>) -> Result<Qrels> {
    let path = path.as_ref();
    let mut qrels = Qrels::new();
    for (i, line) in lines(path)?.iter().enumerate() {
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.is_empty() {
            continue;
        }
        if cols.len() != 4 {
            return Err(Error::parse(path, i + 1, "expected 4 columns: qid 0 docid rel"));
        }
        let rel: i64 = cols[3]
            .parse()
            .map_err(|_| Error::parse(path, i + 1, format!("non-integer relevance {:?}", cols[3])))?;
        if rel > 0 {
            qrels.insert(cols[0], cols[2]);
        }
    }
    Ok(qrels)
}

pub fn save_qrels(path: impl AsRef<Path>, qrels: &Qrels) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    for (qid, docs) in qrels.iter() {
        for doc in docs {
            writeln!(out, "{qid} 0 {doc} 1").map_err(|e| Error::io(path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Writes ranked lists as a TREC run. Scores use Rust's shortest round-trip formatting.
pub fn save_run(path: impl AsRef<Path>, run: &[RankedList], tag: &str) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    for list in run {
        for (rank, e) in list.entries().iter().enumerate() {
            writeln!(out, "{} Q0 {} {} {} {}", list.query_id, e.doc_id, rank + 1, e.score, tag)
                .map_err(|e| Error::io(path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads a TREC run. Lists come back grouped by query id in ascending id order,
/// each re-sorted canonically.
pub fn load_run(path: impl AsRef<Path>) -> Result<Vec<RankedList>> {
    let path = path.as_ref();
    let mut grouped: BTreeMap<String, Vec<ScoredDoc>> = BTreeMap::new();
    for (i, line) in lines(path)?.iter().enumerate() {
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.is_empty() {
            continue;
        }
        if cols.len() != 6 {
            return Err(Error::parse(path, i + 1, "expected 6 columns: qid Q0 docid rank score tag"));
        }
        let score: f64 = cols[4]
            .parse()
            .map_err(|_| Error::parse(path, i + 1, format!("bad score {:?}", cols[4])))?;
        grouped
            .entry(cols[0].to_string())
            .or_default()
            .push(ScoredDoc::new(cols[2], score));
    }
    grouped
        .into_iter()
        .map(|(qid, entries)| {
            RankedList::new(qid, entries).map_err(|e| Error::parse(path, 0, e.to_string()))
        })
        .collect()
}

/// SHA-256 over every document's id, title and text, in corpus order.
pub fn corpus_fingerprint(docs: &[Document]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for d in docs {
        for field in [&d.id, &d.title, &d.text] {
            hasher.update(field.as_bytes());
            hasher.update([0u8]);
        }
    }
    hasher.finalize().into()
}
