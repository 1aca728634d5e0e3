//! Linear projection heads and the models built from them.
//!
//! `PROJ1` layout, little-endian:
//!
//! ```text
//! "PROJ1\0" | u32 heads | heads × (u8 side, u8 kind, u32 rows, u32 cols, rows*cols f64)
//! ```
//!
//! `side` is 0 for the query tower and 1 for the context tower; `kind` is 0 for
//! a weak-learner head, 1 for a small (retrieval) head and 2 for a large
//! (distillation) head.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::binio::{ByteReader, ByteWriter};
use crate::error::{Error, Result};

const MAGIC: &str = "PROJ1\0";

/// Dense `rows × cols` matrix, row-major, no bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ProjectionHead {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParam(format!("head shape {rows}×{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::Shape(format!("{} values for {rows}×{cols}", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam("non-finite head weight".into()));
        }
        Ok(ProjectionHead { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        ProjectionHead {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut h = Self::zeros(n, n);
        for i in 0..n {
            h.data[i * n + i] = 1.0;
        }
        h
    }

    /// Entries drawn from uniform(-1/sqrt(cols), 1/sqrt(cols)).
    pub fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (cols as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        ProjectionHead { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                actual: v.len(),
            });
        }
        Ok(self.data.chunks_exact(self.cols).map(|row| dot(row, v)).collect())
    }

    pub fn project_f32(&self, v: &[f32]) -> Result<Vec<f64>> {
        self.project(&widen(v))
    }

    /// `self += scale * outer(left, right)`.
    pub(crate) fn add_outer(&mut self, scale: f64, left: &[f64], right: &[f64]) {
        debug_assert_eq!(left.len(), self.rows);
        debug_assert_eq!(right.len(), self.cols);
        for (r, &l) in left.iter().enumerate() {
            let coef = scale * l;
            if coef == 0.0 {
                continue;
            }
            for (w, &x) in self.data[r * self.cols..(r + 1) * self.cols].iter_mut().zip(right) {
                *w += coef * x;
            }
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Which tower a head belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Query,
    Context,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    Weak,
    Small,
    Large,
}

/// A two-tower retriever: anything that maps base vectors to comparable
/// query and context vectors.
pub trait DualEncoder: Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn encode_query(&self, base: &[f64]) -> Result<Vec<f64>>;
    fn encode_context(&self, base: &[f64]) -> Result<Vec<f64>>;
    /// SHA-256 of the serialized parameters.
    fn fingerprint(&self) -> [u8; 32];

    fn encode_query_f32(&self, base: &[f32]) -> Result<Vec<f64>> {
        self.encode_query(&widen(base))
    }

    fn encode_context_f32(&self, base: &[f32]) -> Result<Vec<f64>> {
        self.encode_context(&widen(base))
    }
}

pub(crate) fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

/// One low-dimensional dual encoder: `v_q = W_q V_q`, `v_c = W_c V_c`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakLearner {
    pub w_q: ProjectionHead,
    pub w_c: ProjectionHead,
}

impl WeakLearner {
    pub fn new(w_q: ProjectionHead, w_c: ProjectionHead) -> Result<Self> {
        if w_q.rows != w_c.rows || w_q.cols != w_c.cols {
            return Err(Error::Shape(format!(
                "query head {}×{} vs context head {}×{}",
                w_q.rows, w_q.cols, w_c.rows, w_c.cols
            )));
        }
        Ok(WeakLearner { w_q, w_c })
    }

    pub fn random(d: usize, input_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let w_q = ProjectionHead::random(d, input_dim, rng);
        let w_c = ProjectionHead::random(d, input_dim, rng);
        WeakLearner { w_q, w_c }
    }

    pub fn zeros(d: usize, input_dim: usize) -> Self {
        WeakLearner {
            w_q: ProjectionHead::zeros(d, input_dim),
            w_c: ProjectionHead::zeros(d, input_dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.w_q.rows
    }

    pub fn to_bytes(&self, kind: HeadKind) -> Vec<u8> {
        write_heads(&[
            (Side::Query, kind, &self.w_q),
            (Side::Context, kind, &self.w_c),
        ])
    }

    /// Accepts weak-learner files and small-head files.
    pub fn from_bytes(data: &[u8]) -> Result<(Self, HeadKind)> {
        let heads = read_heads(data)?;
        match heads.as_slice() {
            [(Side::Query, k1, q), (Side::Context, k2, c)] if k1 == k2 && *k1 != HeadKind::Large => {
                Ok((WeakLearner::new(q.clone(), c.clone())?, *k1))
            }
            _ => Err(Error::InvalidHeader("not a weak-learner PROJ1 file".into())),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>, kind: HeadKind) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes(kind)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, HeadKind)> {
        let path = path.as_ref();
        let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&data)
    }
}

impl DualEncoder for WeakLearner {
    fn input_dim(&self) -> usize {
        self.w_q.cols
    }

    fn output_dim(&self) -> usize {
        self.dim()
    }

    fn encode_query(&self, base: &[f64]) -> Result<Vec<f64>> {
        self.w_q.project(base)
    }

    fn encode_context(&self, base: &[f64]) -> Result<Vec<f64>> {
        self.w_c.project(base)
    }

    fn fingerprint(&self) -> [u8; 32] {
        Sha256::digest(self.to_bytes(HeadKind::Weak)).into()
    }
}

/// Student with a small retrieval head and a large head that mimics the
/// teacher's concatenated embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct LiteModel {
    pub small: WeakLearner,
    pub large: WeakLearner,
}

impl LiteModel {
    pub fn new(small: WeakLearner, large: WeakLearner) -> Result<Self> {
        if small.input_dim() != large.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: small.input_dim(),
                actual: large.input_dim(),
            });
        }
        Ok(LiteModel { small, large })
    }

    pub fn d_small(&self) -> usize {
        self.small.dim()
    }

    pub fn d_large(&self) -> usize {
        self.large.dim()
    }

    /// The part of the model used for indexing and search.
    pub fn retrieval_head(&self) -> &WeakLearner {
        &self.small
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        write_heads(&[
            (Side::Query, HeadKind::Small, &self.small.w_q),
            (Side::Context, HeadKind::Small, &self.small.w_c),
            (Side::Query, HeadKind::Large, &self.large.w_q),
            (Side::Context, HeadKind::Large, &self.large.w_c),
        ])
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let heads = read_heads(data)?;
        let find = |side, kind| {
            heads
                .iter()
                .find(|(s, k, _)| *s == side && *k == kind)
                .map(|(_, _, h)| h.clone())
                .ok_or_else(|| Error::InvalidHeader(format!("missing {side:?}/{kind:?} head")))
        };
        if heads.len() != 4 {
            return Err(Error::InvalidHeader("LITE file must hold 4 heads".into()));
        }
        let small = WeakLearner::new(find(Side::Query, HeadKind::Small)?, find(Side::Context, HeadKind::Small)?)?;
        let large = WeakLearner::new(find(Side::Query, HeadKind::Large)?, find(Side::Context, HeadKind::Large)?)?;
        LiteModel::new(small, large)
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

/// Only the small head is exposed; the large head never reaches an index.
impl DualEncoder for LiteModel {
    fn input_dim(&self) -> usize {
        self.small.input_dim()
    }

    fn output_dim(&self) -> usize {
        self.d_small()
    }

    fn encode_query(&self, base: &[f64]) -> Result<Vec<f64>> {
        self.small.encode_query(base)
    }

    fn encode_context(&self, base: &[f64]) -> Result<Vec<f64>> {
        self.small.encode_context(base)
    }

    fn fingerprint(&self) -> [u8; 32] {
        Sha256::digest(self.small.to_bytes(HeadKind::Small)).into()
    }
}

fn side_tag(side: Side) -> u8 {
    match side {
        Side::Query => 0,
        Side::Context => 1,
    }
}

fn kind_tag(kind: HeadKind) -> u8 {
    match kind {
        HeadKind::Weak => 0,
        HeadKind::Small => 1,
        HeadKind::Large => 2,
    }
}

fn write_heads(heads: &[(Side, HeadKind, &ProjectionHead)]) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.bytes(MAGIC.as_bytes());
    w.u32(heads.len() as u32);
    for (side, kind, head) in heads {
        w.u8(side_tag(*side));
        w.u8(kind_tag(*kind));
        w.u32(head.rows as u32);
        w.u32(head.cols as u32);
        for v in &head.data {
            w.f64(*v);
        }
    }
    w.buf
}

fn read_heads(data: &[u8]) -> Result<Vec<(Side, HeadKind, ProjectionHead)>> {
    let mut r = ByteReader::new(data);
    r.magic(MAGIC)?;
    let n = r.u32()? as usize;
    let mut out = Vec::new();
    for _ in 0..n {
        let side = match r.u8()? {
            0 => Side::Query,
            1 => Side::Context,
            t => return Err(Error::InvalidHeader(format!("side tag {t}"))),
        };
        let kind = match r.u8()? {
            0 => HeadKind::Weak,
            1 => HeadKind::Small,
            2 => HeadKind::Large,
            t => return Err(Error::InvalidHeader(format!("kind tag {t}"))),
        };
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidHeader(format!("head shape {rows}×{cols}")));
        }
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::InvalidHeader("head too large".into()))?;
        if r.remaining() / 8 < len {
            return Err(Error::Truncated);
        }
        let values = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        out.push((side, kind, ProjectionHead::new(rows, cols, values)?));
    }
    if r.remaining() != 0 {
        return Err(Error::Shape("trailing bytes after heads".into()));
    }
    Ok(out)
}
