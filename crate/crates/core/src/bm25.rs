//! Okapi BM25 over an in-memory inverted index.
//!
//! ```text
//! score(D, Q) = sum_i IDF(q_i) * f(q_i, D) * (k1 + 1) / (f(q_i, D) + k1 * (1 - b + b * |D| / avgdl))
//! IDF(t)      = ln(1 + (N - df(t) + 0.5) / (df(t) + 0.5))
//! ```
//!
//! Every occurrence of a token in the query contributes a term; there is no
//! query-side frequency saturation.
//!
//! # File layout (`BM25IDX1`)
//!
//! All integers little-endian.
//!
//! ```text
//! magic        8 bytes  "BM25IDX1"
//! k1           f64
//! b            f64
//! corpus hash  32 bytes (SHA-256, see `model::corpus_fingerprint`)
//! doc section  u64 count, then per doc (ascending id): u32 id_len, id bytes, u32 length
//! term section u64 count, then per term (ascending byte order):
//!              u32 term_len, term bytes, u32 postings, then postings × (u32 doc_no, u32 tf)
//! ```
//!
//! `doc_no` indexes the doc section. `avgdl`, `N` and `df` are recomputed on load.

use std::collections::HashMap;
use std::path::Path;

use crate::binio::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::model::{corpus_fingerprint, Document, Query, RankedList, ScoredDoc, Searcher};

const MAGIC: &str = "BM25IDX1";

/// Lowercases and splits on every non-alphanumeric code point.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn new(k1: f64, b: f64) -> Result<Self> {
        let p = Bm25Params { k1, b };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if !(self.k1.is_finite() && self.k1 >= 0.0) {
            return Err(Error::InvalidParam(format!("k1 must be >= 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::InvalidParam(format!("b must be in [0, 1], got {}", self.b)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bm25Index {
    params: Bm25Params,
    corpus_hash: [u8; 32],
    /// Sorted ascending; position is the internal doc number.
    doc_ids: Vec<String>,
    doc_len: Vec<u32>,
    doc_lookup: HashMap<String, u32>,
    avgdl: f64,
    postings: HashMap<String, Vec<Posting>>,
}

impl Bm25Index {
    pub fn build(corpus: &[Document], params: Bm25Params) -> Result<Self> {
        params.validate()?;
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        order.sort_by(|&a, &b| corpus[a].id.cmp(&corpus[b].id));

        let mut doc_ids = Vec::with_capacity(corpus.len());
        let mut doc_len = Vec::with_capacity(corpus.len());
        let mut postings: HashMap<String, Vec<Posting>> = HashMap::new();
        for (doc_no, &i) in order.iter().enumerate() {
            let doc = &corpus[i];
            if doc_ids.last() == Some(&doc.id) {
                return Err(Error::DuplicateId(doc.id.clone()));
            }
            let tokens = tokenize(&doc.full_text());
            let mut counts: HashMap<String, u32> = HashMap::new();
            for t in &tokens {
                *counts.entry(t.clone()).or_default() += 1;
            }
            for (term, tf) in counts {
                postings.entry(term).or_default().push(Posting {
                    doc: doc_no as u32,
                    tf,
                });
            }
            doc_ids.push(doc.id.clone());
            doc_len.push(tokens.len() as u32);
        }
        Ok(Self::assemble(params, corpus_fingerprint(corpus), doc_ids, doc_len, postings))
    }

    fn assemble(
        params: Bm25Params,
        corpus_hash: [u8; 32],
        doc_ids: Vec<String>,
        doc_len: Vec<u32>,
        postings: HashMap<String, Vec<Posting>>,
    ) -> Self {
        let total: u64 = doc_len.iter().map(|&l| l as u64).sum();
        let avgdl = total as f64 / doc_len.len() as f64;
        let doc_lookup = doc_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i as u32))
            .collect();
        Bm25Index {
            params,
            corpus_hash,
            doc_ids,
            doc_len,
            doc_lookup,
            avgdl,
            postings,
        }
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn corpus_hash(&self) -> [u8; 32] {
        self.corpus_hash
    }

    pub fn num_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn doc_len(&self, doc_id: &str) -> Option<u32> {
        self.doc_lookup.get(doc_id).map(|&i| self.doc_len[i as usize])
    }

    pub fn df(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn tf(&self, term: &str, doc_id: &str) -> u32 {
        let Some(&doc) = self.doc_lookup.get(doc_id) else {
            return 0;
        };
        let list = self.postings(term);
        list.binary_search_by_key(&doc, |p| p.doc)
            .map_or(0, |i| list[i].tf)
    }

    pub fn num_terms(&self) -> usize {
        self.postings.len()
    }

    /// Payload bytes of the postings lists (8 bytes per posting).
    pub fn postings_bytes(&self) -> u64 {
        self.postings.values().map(|p| p.len() as u64 * 8).sum()
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.num_docs() as f64;
        let df = self.df(term) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn term_weight(&self, tf: u32, len: u32) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let f = tf as f64;
        f * (k1 + 1.0) / (f + k1 * (1.0 - b + b * len as f64 / self.avgdl))
    }

    pub fn score(&self, query: &Query, doc_id: &str) -> Result<f64> {
        let &doc = self
            .doc_lookup
            .get(doc_id)
            .ok_or_else(|| Error::UnknownDoc(doc_id.to_string()))?;
        let len = self.doc_len[doc as usize];
        let mut total = 0.0;
        for token in tokenize(&query.text) {
            let list = self.postings(&token);
            if let Ok(i) = list.binary_search_by_key(&doc, |p| p.doc) {
                total += self.idf(&token) * self.term_weight(list[i].tf, len);
            }
        }
        Ok(total)
    }

    /// Top `k` documents with a strictly positive score.
    pub fn search(&self, query: &Query, k: usize) -> RankedList {
        let mut acc = vec![0.0f64; self.num_docs()];
        let mut touched = vec![false; self.num_docs()];
        for token in tokenize(&query.text) {
            let idf = self.idf(&token);
            for p in self.postings(&token) {
                acc[p.doc as usize] += idf * self.term_weight(p.tf, self.doc_len[p.doc as usize]);
                touched[p.doc as usize] = true;
            }
        }
        let entries = acc
            .iter()
            .zip(&touched)
            .enumerate()
            .filter(|(_, (&s, &t))| t && s > 0.0)
            .map(|(i, (&s, _))| ScoredDoc::new(self.doc_ids[i].clone(), s))
            .collect();
        RankedList::top_k(query.id.clone(), entries, k).expect("doc ids unique and scores finite")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(MAGIC.as_bytes());
        w.f64(self.params.k1);
        w.f64(self.params.b);
        w.bytes(&self.corpus_hash);
        w.u64(self.doc_ids.len() as u64);
        for (id, &len) in self.doc_ids.iter().zip(&self.doc_len) {
            w.str32(id);
            w.u32(len);
        }
        let mut terms: Vec<&String> = self.postings.keys().collect();
        terms.sort();
        w.u64(terms.len() as u64);
        for term in terms {
            w.str32(term);
            let list = &self.postings[term];
            w.u32(list.len() as u32);
            for p in list {
                w.u32(p.doc);
                w.u32(p.tf);
            }
        }
        w.buf
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(data);
        r.magic(MAGIC)?;
        let params = Bm25Params {
            k1: r.f64()?,
            b: r.f64()?,
        };
        params
            .validate()
            .map_err(|e| Error::InvalidHeader(e.to_string()))?;
        let corpus_hash = r.hash32()?;
        let n_docs = r.u64()? as usize;
        if n_docs == 0 {
            return Err(Error::InvalidHeader("zero documents".into()));
        }
        let mut doc_ids = Vec::with_capacity(n_docs.min(r.remaining()));
        let mut doc_len = Vec::with_capacity(n_docs.min(r.remaining()));
        for _ in 0..n_docs {
            doc_ids.push(r.str32()?);
            doc_len.push(r.u32()?);
        }
        let n_terms = r.u64()? as usize;
        let mut postings = HashMap::new();
        for _ in 0..n_terms {
            let term = r.str32()?;
            let count = r.u32()? as usize;
            let mut list = Vec::with_capacity(count.min(r.remaining() / 8));
            for _ in 0..count {
                let doc = r.u32()?;
                let tf = r.u32()?;
                if doc as usize >= n_docs || tf == 0 {
                    return Err(Error::InvalidHeader(format!("bad posting for {term:?}")));
                }
                list.push(Posting { doc, tf });
            }
            postings.insert(term, list);
        }
        if r.remaining() != 0 {
            return Err(Error::InvalidHeader("trailing bytes".into()));
        }
        Ok(Self::assemble(params, corpus_hash, doc_ids, doc_len, postings))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&data)
    }
}

impl Searcher for Bm25Index {
    fn search(&self, query: &Query, k: usize) -> Result<RankedList> {
        Ok(Bm25Index::search(self, query, k))
    }

    fn provenance(&self) -> String {
        "bm25".to_string()
    }
}
