//! Flat exact inner-product index over compressed context vectors, and
//! indexing-memory accounting.
//!
//! `DIDX1` layout, little-endian:
//!
//! ```text
//! "DIDX1\0" | 32-byte encoder fingerprint | 32-byte corpus fingerprint | u64 payload_len | EMBV1 payload
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binio::{ByteReader, ByteWriter};
use crate::encoder::{encode, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::model::{canonical_order, Query, RankedList, ScoredDoc, Searcher};
use crate::train::{BaseVectors, DualEncoder};

const MAGIC: &str = "DIDX1\0";

#[derive(Debug, Clone, PartialEq)]
pub struct DenseIndex {
    vectors: EmbeddingMatrix,
    encoder_hash: [u8; 32],
    corpus_hash: [u8; 32],
}

impl DenseIndex {
    /// Row `i` is the encoder's context projection of base row `i`, stored as f32.
    pub fn build(encoder: &dyn DualEncoder, base: &EmbeddingMatrix) -> Result<Self> {
        if encoder.input_dim() != base.dim() {
            return Err(Error::DimensionMismatch {
                expected: encoder.input_dim(),
                actual: base.dim(),
            });
        }
        let dim = encoder.output_dim();
        let rows: Vec<Vec<f32>> = (0..base.count())
            .into_par_iter()
            .map(|i| {
                encoder
                    .encode_context_f32(base.row(i))
                    .map(|v| v.into_iter().map(|x| x as f32).collect())
            })
            .collect::<Result<_>>()?;
        Ok(DenseIndex {
            vectors: EmbeddingMatrix::from_rows(base.ids().to_vec(), dim, rows)?,
            encoder_hash: encoder.fingerprint(),
            corpus_hash: [0; 32],
        })
    }

    pub fn from_matrix(vectors: EmbeddingMatrix) -> Self {
        DenseIndex {
            vectors,
            encoder_hash: [0; 32],
            corpus_hash: [0; 32],
        }
    }

    pub fn with_corpus_hash(mut self, hash: [u8; 32]) -> Self {
        self.corpus_hash = hash;
        self
    }

    pub fn vectors(&self) -> &EmbeddingMatrix {
        &self.vectors
    }

    pub fn dim(&self) -> usize {
        self.vectors.dim()
    }

    pub fn count(&self) -> usize {
        self.vectors.count()
    }

    pub fn encoder_hash(&self) -> [u8; 32] {
        self.encoder_hash
    }

    pub fn corpus_hash(&self) -> [u8; 32] {
        self.corpus_hash
    }

    /// Vector payload only: `count * dim * 4`.
    pub fn memory_bytes(&self) -> u64 {
        self.count() as u64 * self.dim() as u64 * 4
    }

    /// Bytes of the stored ids, reported next to `memory_bytes`.
    pub fn id_bytes(&self) -> u64 {
        self.vectors.ids().iter().map(|id| id.len() as u64).sum()
    }

    /// Exact top-`k` by inner product.
    pub fn search(&self, query_id: &str, q: &[f64], k: usize) -> Result<RankedList> {
        if q.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: q.len(),
            });
        }
        let mut scored: Vec<ScoredDoc> = self
            .vectors
            .rows()
            .map(|(id, row)| {
                let s: f64 = row.iter().zip(q).map(|(&x, &y)| x as f64 * y).sum();
                ScoredDoc::new(id, s)
            })
            .collect();
        if k < scored.len() && k > 0 {
            scored.select_nth_unstable_by(k - 1, canonical_order);
        }
        scored.truncate(k);
        RankedList::new(query_id, scored)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let payload = self.vectors.to_bytes()?;
        let mut w = ByteWriter::new();
        w.bytes(MAGIC.as_bytes());
        w.bytes(&self.encoder_hash);
        w.bytes(&self.corpus_hash);
        w.u64(payload.len() as u64);
        w.bytes(&payload);
        Ok(w.buf)
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(data);
        r.magic(MAGIC)?;
        let encoder_hash = r.hash32()?;
        let corpus_hash = r.hash32()?;
        let len = r.u64()? as usize;
        if r.remaining() < len {
            return Err(Error::Truncated);
        }
        let vectors = EmbeddingMatrix::from_bytes(r.take(len)?)?;
        if r.remaining() != 0 {
            return Err(Error::Shape("trailing bytes after payload".into()));
        }
        Ok(DenseIndex {
            vectors,
            encoder_hash,
            corpus_hash,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&data)
    }
}

/// Where a dense retriever gets base vectors for incoming queries.
#[derive(Clone, Copy)]
pub enum QuerySource<'a> {
    Matrix(&'a EmbeddingMatrix),
    Base(&'a BaseVectors),
    Hashing { dim: usize, seed: u64 },
}

impl QuerySource<'_> {
    pub fn vector(&self, query: &Query) -> Result<Vec<f64>> {
        match self {
            QuerySource::Matrix(m) => m
                .get(&query.id)
                .map(crate::train::widen)
                .ok_or_else(|| Error::UnknownQuery(query.id.clone())),
            QuerySource::Base(b) => b.query(&query.id).map(<[f64]>::to_vec),
            QuerySource::Hashing { dim, seed } => {
                encode(&query.text, *dim, *seed).map(|v| crate::train::widen(&v))
            }
        }
    }
}

/// Encoder + index + query vectors, usable wherever a [`Searcher`] is expected.
pub struct DenseRetriever<'a> {
    pub encoder: &'a dyn DualEncoder,
    pub index: &'a DenseIndex,
    pub queries: QuerySource<'a>,
    pub tag: String,
}

impl<'a> DenseRetriever<'a> {
    pub fn new(
        encoder: &'a dyn DualEncoder,
        index: &'a DenseIndex,
        queries: QuerySource<'a>,
        tag: impl Into<String>,
    ) -> Result<Self> {
        if encoder.output_dim() != index.dim() {
            return Err(Error::DimensionMismatch {
                expected: index.dim(),
                actual: encoder.output_dim(),
            });
        }
        Ok(DenseRetriever {
            encoder,
            index,
            queries,
            tag: tag.into(),
        })
    }
}

impl Searcher for DenseRetriever<'_> {
    fn search(&self, query: &Query, k: usize) -> Result<RankedList> {
        let base = self.queries.vector(query)?;
        let q = self.encoder.encode_query(&base)?;
        self.index.search(&query.id, &q, k)
    }

    fn provenance(&self) -> String {
        self.tag.clone()
    }
}

/// Named index sizes in GB.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MemoryScenario {
    pub components: BTreeMap<String, f64>,
}

impl MemoryScenario {
    pub fn new(components: impl IntoIterator<Item = (String, f64)>) -> Result<Self> {
        let components: BTreeMap<String, f64> = components.into_iter().collect();
        if let Some((name, size)) = components.iter().find(|(_, &s)| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidParam(format!("component {name:?} has size {size}")));
        }
        Ok(MemoryScenario { components })
    }

    fn size(&self, name: &str) -> Result<f64> {
        self.components
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownName(name.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridMemory {
    pub name: String,
    pub sparse: String,
    pub dense: String,
    pub sparse_gb: f64,
    pub dense_gb: f64,
    pub total_gb: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Savings {
    pub light: String,
    pub heavy: String,
    /// `heavy.total / light.total`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryReport {
    pub hybrids: Vec<HybridMemory>,
    pub savings: Vec<Savings>,
}

impl MemoryReport {
    pub fn hybrid(&self, name: &str) -> Option<&HybridMemory> {
        self.hybrids.iter().find(|h| h.name == name)
    }

    pub fn ratio(&self, light: &str, heavy: &str) -> Option<f64> {
        Some(self.hybrid(heavy)?.total_gb / self.hybrid(light)?.total_gb)
    }
}

pub fn savings_ratio(light_total: f64, heavy_total: f64) -> f64 {
    heavy_total / light_total
}

/// Hybrid total = sparse + dense. Savings are listed for every pair of
/// hybrids with the lighter one first.
pub fn memory_model(scenario: &MemoryScenario, pairs: &[(String, String)]) -> Result<MemoryReport> {
    let hybrids = pairs
        .iter()
        .map(|(s, d)| {
            let (sparse_gb, dense_gb) = (scenario.size(s)?, scenario.size(d)?);
            Ok(HybridMemory {
                name: format!("{s}+{d}"),
                sparse: s.clone(),
                dense: d.clone(),
                sparse_gb,
                dense_gb,
                total_gb: sparse_gb + dense_gb,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut savings = Vec::new();
    for (i, a) in hybrids.iter().enumerate() {
        for b in &hybrids[i + 1..] {
            let (light, heavy) = if a.total_gb <= b.total_gb { (a, b) } else { (b, a) };
            savings.push(Savings {
                light: light.name.clone(),
                heavy: heavy.name.clone(),
                ratio: savings_ratio(light.total_gb, heavy.total_gb),
            });
        }
    }
    Ok(MemoryReport { hybrids, savings })
}
