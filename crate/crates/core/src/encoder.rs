//! Frozen base encoder.
//!
//! Text is mapped to a fixed-width unit vector by signed feature hashing of
//! word unigrams and character 3-5-grams (per token, with `<`/`>` boundary
//! marks). One FNV-1a hash keyed by the seed picks the bucket, a second keyed
//! hash picks the sign. Real encoder outputs can instead be brought in
//! through the `EMBV1` file format.
//!
//! `EMBV1` layout, little-endian:
//!
//! ```text
//! "EMBV1\0" | u32 count | u32 dim | count*dim f32 (row-major) | count × (u16 len, UTF-8 id)
//! ```

use std::collections::HashMap;
use std::hash::Hasher;
use std::path::Path;

use fnv::FnvHasher;
use rayon::prelude::*;

use crate::binio::{ByteReader, ByteWriter};
use crate::bm25::tokenize;
use crate::error::{Error, Result};
use crate::model::{Document, Query};

pub const DEFAULT_DIM: usize = 256;
pub const MIN_DIM: usize = 8;

const MAGIC: &str = "EMBV1\0";
const SIGN_KEY: u64 = 0x9e37_79b9_7f4a_7c15;

/// The hashed features of `text`: `w:<token>` unigrams and `c:<ngram>` character n-grams.
pub fn features(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for token in tokenize(text) {
        out.push(format!("w:{token}"));
        let marked: Vec<char> = std::iter::once('<')
            .chain(token.chars())
            .chain(std::iter::once('>'))
            .collect();
        for n in 3..=5 {
            for window in marked.windows(n) {
                out.push(format!("c:{}", window.iter().collect::<String>()));
            }
        }
    }
    out
}

fn keyed_hash(key: u64, feature: &str) -> u64 {
    let mut h = FnvHasher::with_key(key);
    h.write(feature.as_bytes());
    h.finish()
}

/// Bucket and sign of one feature.
pub fn feature_slot(feature: &str, dim: usize, seed: u64) -> (usize, f64) {
    let bucket = (keyed_hash(seed, feature) % dim as u64) as usize;
    let sign = if keyed_hash(seed ^ SIGN_KEY, feature) & 1 == 0 {
        1.0
    } else {
        -1.0
    };
    (bucket, sign)
}

pub fn encode(text: &str, dim: usize, seed: u64) -> Result<Vec<f32>> {
    if dim < MIN_DIM {
        return Err(Error::InvalidParam(format!("dim must be >= {MIN_DIM}, got {dim}")));
    }
    let mut acc = vec![0.0f64; dim];
    for f in features(text) {
        let (bucket, sign) = feature_slot(&f, dim, seed);
        acc[bucket] += sign;
    }
    let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::EmptyEncoding(text.to_string()));
    }
    Ok(acc.iter().map(|v| (v / norm) as f32).collect())
}

/// Row-major `count × dim` matrix of f32 with one unique id per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    ids: Vec<String>,
    dim: usize,
    data: Vec<f32>,
    lookup: HashMap<String, usize>,
}

impl EmbeddingMatrix {
    pub fn new(ids: Vec<String>, dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidHeader("dim must be positive".into()));
        }
        if data.len() != ids.len() * dim {
            return Err(Error::Shape(format!(
                "{} values for {} ids × {} dims",
                data.len(),
                ids.len(),
                dim
            )));
        }
        let mut lookup = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if lookup.insert(id.clone(), i).is_some() {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        Ok(EmbeddingMatrix {
            ids,
            dim,
            data,
            lookup,
        })
    }

    pub fn from_rows(ids: Vec<String>, dim: usize, rows: Vec<Vec<f32>>) -> Result<Self> {
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: bad.len(),
            });
        }
        Self::new(ids, dim, rows.concat())
    }

    pub fn count(&self) -> usize {
        self.ids.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.lookup.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.position(id).map(|i| self.row(i))
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.ids
            .iter()
            .map(String::as_str)
            .zip(self.data.chunks_exact(self.dim))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = ByteWriter::new();
        w.bytes(MAGIC.as_bytes());
        w.u32(self.count() as u32);
        w.u32(self.dim as u32);
        for v in &self.data {
            w.f32(*v);
        }
        for id in &self.ids {
            let len = u16::try_from(id.len())
                .map_err(|_| Error::InvalidParam(format!("id longer than 65535 bytes: {id:?}")))?;
            w.u16(len);
            w.bytes(id.as_bytes());
        }
        Ok(w.buf)
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(data);
        r.magic(MAGIC)?;
        let count = r.u32()? as usize;
        let dim = r.u32()? as usize;
        if dim == 0 {
            return Err(Error::InvalidHeader("dim=0".into()));
        }
        let values = count
            .checked_mul(dim)
            .ok_or_else(|| Error::InvalidHeader("count × dim overflows".into()))?;
        if r.remaining() / 4 < values {
            return Err(Error::Truncated);
        }
        let payload = r.take(values * 4)?;
        let matrix: Vec<f32> = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        let mut ids = Vec::with_capacity(count);
        for _ in 0..count {
            let len = r.u16()? as usize;
            ids.push(r.utf8(len)?);
        }
        if r.remaining() != 0 {
            return Err(Error::Shape(format!(
                "{} bytes after {count} ids",
                r.remaining()
            )));
        }
        Self::new(ids, dim, matrix)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }
}

pub fn import_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    EmbeddingMatrix::from_bytes(&data)
}

pub fn export_embeddings(path: impl AsRef<Path>, matrix: &EmbeddingMatrix) -> Result<()> {
    matrix.save(path)
}

fn encode_all<'a>(
    items: impl IndexedParallelIterator<Item = (&'a str, String)>,
    dim: usize,
    seed: u64,
) -> Result<EmbeddingMatrix> {
    let rows: Vec<(String, Vec<f32>)> = items
        .map(|(id, text)| {
            encode(&text, dim, seed)
                .map(|v| (id.to_string(), v))
                .map_err(|e| Error::Config(format!("encoding {id:?}: {e}")))
        })
        .collect::<Result<_>>()?;
    let (ids, rows): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    EmbeddingMatrix::from_rows(ids, dim, rows)
}

/// Row `i` encodes `title + " " + text` of document `i`.
pub fn encode_corpus(corpus: &[Document], dim: usize, seed: u64) -> Result<EmbeddingMatrix> {
    encode_all(
        corpus.par_iter().map(|d| (d.id.as_str(), d.full_text())),
        dim,
        seed,
    )
}

pub fn encode_queries(queries: &[Query], dim: usize, seed: u64) -> Result<EmbeddingMatrix> {
    encode_all(
        queries.par_iter().map(|q| (q.id.as_str(), q.text.clone())),
        dim,
        seed,
    )
}
