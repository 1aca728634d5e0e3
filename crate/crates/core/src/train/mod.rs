//! Training of projection heads on top of frozen base vectors.
//!
//! Weak learners minimize the in-batch contrastive loss. The LITE student
//! minimizes contrastive loss on its small head plus a squared-L2
//! distillation loss that pulls its large head towards a teacher's
//! embeddings. All gradients are analytic.

mod head;
mod loss;
mod mining;
mod optim;
mod trainer;

pub use head::{DualEncoder, HeadKind, LiteModel, ProjectionHead, Side, WeakLearner};
pub use loss::{
    contrastive_loss, contrastive_loss_from_sims, joint_loss, joint_loss_and_grad, kd_loss, sim,
    weak_loss, weak_loss_and_grad, Batch, JointLoss,
};
pub use mining::{mine_hard_negatives, MiningRecord, MiningReport};
pub use optim::{Optimizer, OptimizerKind};
pub use trainer::{train_lite, train_weak_learner, LossTrace, TraceRow, Trained};

pub(crate) use head::widen;

use std::collections::HashMap;

use crate::encoder::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::model::{Qrels, Query};

/// One query with its positive context and mined hard negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub query: Query,
    pub positive: String,
    pub hard_negatives: Vec<String>,
}

impl TrainExample {
    pub fn new(query: Query, positive: impl Into<String>, hard_negatives: Vec<String>) -> Result<Self> {
        let positive = positive.into();
        if hard_negatives.contains(&positive) {
            return Err(Error::InvalidParam(format!(
                "positive {positive:?} listed as a hard negative"
            )));
        }
        Ok(TrainExample {
            query,
            positive,
            hard_negatives,
        })
    }
}

/// One example per judged query, using its smallest relevant doc id as the positive.
pub fn examples_from_qrels(queries: &[Query], qrels: &Qrels) -> Vec<TrainExample> {
    queries
        .iter()
        .filter_map(|q| {
            let pos = qrels.relevant(&q.id)?.iter().next()?;
            Some(TrainExample {
                query: q.clone(),
                positive: pos.clone(),
                hard_negatives: Vec::new(),
            })
        })
        .collect()
}

/// Base vectors for queries and documents. Keeps the original matrices for
/// index building and f64 copies for training.
#[derive(Debug, Clone)]
pub struct BaseVectors {
    dim: usize,
    query_matrix: EmbeddingMatrix,
    doc_matrix: EmbeddingMatrix,
    queries: HashMap<String, Vec<f64>>,
    docs: HashMap<String, Vec<f64>>,
}

impl BaseVectors {
    pub fn new(queries: EmbeddingMatrix, docs: EmbeddingMatrix) -> Result<Self> {
        if queries.dim() != docs.dim() {
            return Err(Error::DimensionMismatch {
                expected: docs.dim(),
                actual: queries.dim(),
            });
        }
        let widen_all = |m: &EmbeddingMatrix| {
            m.rows()
                .map(|(id, row)| (id.to_string(), widen(row)))
                .collect::<HashMap<_, _>>()
        };
        Ok(BaseVectors {
            dim: docs.dim(),
            queries: widen_all(&queries),
            docs: widen_all(&docs),
            query_matrix: queries,
            doc_matrix: docs,
        })
    }

    /// Builds from f64 vectors without rounding them; used by gradient fixtures.
    /// The f32 matrices are ordered by id.
    pub fn from_maps(
        dim: usize,
        queries: HashMap<String, Vec<f64>>,
        docs: HashMap<String, Vec<f64>>,
    ) -> Result<Self> {
        let to_matrix = |map: &HashMap<String, Vec<f64>>| -> Result<EmbeddingMatrix> {
            let mut ids: Vec<&String> = map.keys().collect();
            ids.sort();
            let mut data = Vec::with_capacity(ids.len() * dim);
            for id in &ids {
                let v = &map[*id];
                if v.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        actual: v.len(),
                    });
                }
                data.extend(v.iter().map(|&x| x as f32));
            }
            EmbeddingMatrix::new(ids.into_iter().cloned().collect(), dim, data)
        };
        Ok(BaseVectors {
            dim,
            query_matrix: to_matrix(&queries)?,
            doc_matrix: to_matrix(&docs)?,
            queries,
            docs,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn query_matrix(&self) -> &EmbeddingMatrix {
        &self.query_matrix
    }

    pub fn doc_matrix(&self) -> &EmbeddingMatrix {
        &self.doc_matrix
    }

    pub fn query(&self, id: &str) -> Result<&[f64]> {
        self.queries
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownQuery(id.to_string()))
    }

    pub fn doc(&self, id: &str) -> Result<&[f64]> {
        self.docs
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownDoc(id.to_string()))
    }
}

/// Which contexts receive a distillation target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KdContexts {
    /// Only each example's positive.
    Positive,
    /// The positive plus every hard negative, each against its own teacher embedding.
    PositiveAndHardNegatives,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
    pub num_hard_negatives: usize,
    pub optimizer: OptimizerKind,
    pub con_weight: f64,
    pub kd_weight: f64,
    pub kd_contexts: KdContexts,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            batch_size: 16,
            steps: 200,
            seed: 0,
            num_hard_negatives: 4,
            optimizer: OptimizerKind::default(),
            con_weight: 1.0,
            kd_weight: 1.0,
            kd_contexts: KdContexts::PositiveAndHardNegatives,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidParam("batch size must be at least 2".into()));
        }
        if self.con_weight < 0.0 || self.kd_weight < 0.0 {
            return Err(Error::InvalidParam("loss weights must be non-negative".into()));
        }
        Ok(())
    }
}
