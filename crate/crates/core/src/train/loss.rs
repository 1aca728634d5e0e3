//! Contrastive and distillation losses with analytic gradients.
//!
//! For a query `q`, positive `c+` and negatives `c-_j`:
//!
//! ```text
//! L_con = -log( e^{s+} / (e^{s+} + sum_j e^{s-_j}) ),   s = <q, c>
//! L_KD  = |v_q,l - q_t|^2 + |v_c,l - c_t|^2 + |v_q,l - c+_t|^2
//! ```
//!
//! Batch losses are arithmetic means over examples; the joint loss is
//! `con_weight * mean L_con + kd_weight * mean L_KD`.

use std::collections::HashMap;

use super::head::{dot, DualEncoder, LiteModel, ProjectionHead, WeakLearner};
use super::{BaseVectors, KdContexts, TrainExample};
use crate::error::{Error, Result};

pub fn sim(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(dot(a, b))
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `sims[0]` is the positive.
pub fn contrastive_loss_from_sims(sims: &[f64]) -> f64 {
    (log_sum_exp(sims) - sims[0]).max(0.0)
}

/// Panics if the vectors differ in length.
pub fn contrastive_loss(q: &[f64], positive: &[f64], negatives: &[Vec<f64>]) -> f64 {
    let mut sims = Vec::with_capacity(negatives.len() + 1);
    sims.push(sim(q, positive).expect("query and positive dims differ"));
    for n in negatives {
        sims.push(sim(q, n).expect("query and negative dims differ"));
    }
    contrastive_loss_from_sims(&sims)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn kd_loss(
    v_q_l: &[f64],
    v_c_l: &[f64],
    teacher_q: &[f64],
    teacher_c: &[f64],
    teacher_c_pos: &[f64],
) -> Result<f64> {
    let d = v_q_l.len();
    for v in [v_c_l, teacher_q, teacher_c, teacher_c_pos] {
        if v.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: v.len(),
            });
        }
    }
    Ok(sq_dist(v_q_l, teacher_q) + sq_dist(v_c_l, teacher_c) + sq_dist(v_q_l, teacher_c_pos))
}

/// A minibatch with contexts deduplicated by doc id.
#[derive(Debug, Clone)]
pub struct Batch {
    pub queries: Vec<Vec<f64>>,
    pub contexts: Vec<Vec<f64>>,
    pub context_ids: Vec<String>,
    pub positives: Vec<usize>,
    pub hard_negatives: Vec<Vec<usize>>,
}

impl Batch {
    pub fn new<'a>(
        examples: impl IntoIterator<Item = &'a TrainExample>,
        base: &BaseVectors,
    ) -> Result<Self> {
        let mut batch = Batch {
            queries: Vec::new(),
            contexts: Vec::new(),
            context_ids: Vec::new(),
            positives: Vec::new(),
            hard_negatives: Vec::new(),
        };
        let mut slots: HashMap<String, usize> = HashMap::new();
        let mut slot = |id: &str, batch: &mut Batch| -> Result<usize> {
            if let Some(&i) = slots.get(id) {
                return Ok(i);
            }
            let v = base.doc(id)?.to_vec();
            batch.contexts.push(v);
            batch.context_ids.push(id.to_string());
            slots.insert(id.to_string(), batch.contexts.len() - 1);
            Ok(batch.contexts.len() - 1)
        };
        for ex in examples {
            batch.queries.push(base.query(&ex.query.id)?.to_vec());
            let pos = slot(&ex.positive, &mut batch)?;
            batch.positives.push(pos);
            let negs = ex
                .hard_negatives
                .iter()
                .map(|id| slot(id, &mut batch))
                .collect::<Result<Vec<_>>>()?;
            batch.hard_negatives.push(negs);
        }
        if batch.queries.is_empty() {
            return Err(Error::InvalidParam("empty batch".into()));
        }
        Ok(batch)
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    /// Candidate contexts for example `i`: its positive first, then its hard
    /// negatives, then the positives of the other examples. Repeats and the
    /// example's own positive are skipped.
    pub fn candidates(&self, i: usize) -> Vec<usize> {
        let pos = self.positives[i];
        let mut out = vec![pos];
        let others = self
            .positives
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &p)| p);
        for c in self.hard_negatives[i].iter().copied().chain(others) {
            if !out.contains(&c) {
                out.push(c);
            }
        }
        out
    }

    pub(crate) fn kd_contexts(&self, i: usize, mode: KdContexts) -> Vec<usize> {
        let mut out = vec![self.positives[i]];
        if mode == KdContexts::PositiveAndHardNegatives {
            out.extend(self.hard_negatives[i].iter().copied());
        }
        out
    }
}

fn project_all(head: &ProjectionHead, vs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    vs.iter().map(|v| head.project(v)).collect()
}

/// Mean contrastive loss and its gradient for one pair of towers.
fn contrastive_part(
    batch: &Batch,
    learner: &WeakLearner,
    scale: f64,
    grad: Option<&mut WeakLearner>,
) -> Result<f64> {
    let qv = project_all(&learner.w_q, &batch.queries)?;
    let cv = project_all(&learner.w_c, &batch.contexts)?;
    let n = batch.len() as f64;
    let mut total = 0.0;
    let mut ctx_coef = grad
        .as_ref()
        .map(|_| vec![vec![0.0; learner.dim()]; batch.contexts.len()]);
    let mut grad = grad;
    for i in 0..batch.len() {
        let cands = batch.candidates(i);
        let sims: Vec<f64> = cands.iter().map(|&c| dot(&qv[i], &cv[c])).collect();
        let lse = log_sum_exp(&sims);
        total += (lse - sims[0]).max(0.0);
        if let (Some(g), Some(coef)) = (grad.as_deref_mut(), ctx_coef.as_mut()) {
            let mut q_coef = vec![0.0; learner.dim()];
            for (j, (&c, &s)) in cands.iter().zip(&sims).enumerate() {
                let weight = (s - lse).exp() - if j == 0 { 1.0 } else { 0.0 };
                for (acc, &x) in q_coef.iter_mut().zip(&cv[c]) {
                    *acc += weight * x;
                }
                for (acc, &x) in coef[c].iter_mut().zip(&qv[i]) {
                    *acc += weight * x;
                }
            }
            g.w_q.add_outer(scale / n, &q_coef, &batch.queries[i]);
        }
    }
    if let (Some(g), Some(coef)) = (grad, ctx_coef) {
        for (c, coef) in coef.iter().enumerate() {
            g.w_c.add_outer(scale / n, coef, &batch.contexts[c]);
        }
    }
    Ok(total / n)
}

pub fn weak_loss(batch: &Batch, learner: &WeakLearner) -> Result<f64> {
    contrastive_part(batch, learner, 1.0, None)
}

pub fn weak_loss_and_grad(batch: &Batch, learner: &WeakLearner) -> Result<(f64, WeakLearner)> {
    let mut grad = WeakLearner::zeros(learner.dim(), learner.input_dim());
    let loss = contrastive_part(batch, learner, 1.0, Some(&mut grad))?;
    Ok((loss, grad))
}

struct TeacherTargets {
    queries: Vec<Vec<f64>>,
    contexts: Vec<Vec<f64>>,
}

fn teacher_targets(batch: &Batch, teacher: &dyn DualEncoder) -> Result<TeacherTargets> {
    Ok(TeacherTargets {
        queries: batch
            .queries
            .iter()
            .map(|v| teacher.encode_query(v))
            .collect::<Result<_>>()?,
        contexts: batch
            .contexts
            .iter()
            .map(|v| teacher.encode_context(v))
            .collect::<Result<_>>()?,
    })
}

fn kd_part(
    batch: &Batch,
    large: &WeakLearner,
    targets: &TeacherTargets,
    mode: KdContexts,
    scale: f64,
    mut grad: Option<&mut WeakLearner>,
) -> Result<f64> {
    let qv = project_all(&large.w_q, &batch.queries)?;
    let cv = project_all(&large.w_c, &batch.contexts)?;
    let n = batch.len() as f64;
    let mut total = 0.0;
    for i in 0..batch.len() {
        let pos = batch.positives[i];
        let tq = &targets.queries[i];
        let tpos = &targets.contexts[pos];
        let ctxs = batch.kd_contexts(i, mode);
        total += kd_loss(&qv[i], &cv[pos], tq, &targets.contexts[pos], tpos)?;
        for &c in &ctxs[1..] {
            total += sq_dist(&cv[c], &targets.contexts[c]);
        }
        if let Some(g) = grad.as_deref_mut() {
            let q_coef: Vec<f64> = qv[i]
                .iter()
                .zip(tq.iter().zip(tpos))
                .map(|(&v, (&a, &b))| 2.0 * ((v - a) + (v - b)))
                .collect();
            g.w_q.add_outer(scale / n, &q_coef, &batch.queries[i]);
            for &c in &ctxs {
                let c_coef: Vec<f64> = cv[c]
                    .iter()
                    .zip(&targets.contexts[c])
                    .map(|(&v, &t)| 2.0 * (v - t))
                    .collect();
                g.w_c.add_outer(scale / n, &c_coef, &batch.contexts[c]);
            }
        }
    }
    Ok(total / n)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLoss {
    /// Mean contrastive loss of the small head.
    pub con: f64,
    /// Mean distillation loss of the large head.
    pub kd: f64,
    /// `con_weight * con + kd_weight * kd`.
    pub joint: f64,
}

fn check_teacher(lite: &LiteModel, teacher: &dyn DualEncoder) -> Result<()> {
    if teacher.output_dim() != lite.d_large() {
        return Err(Error::DimensionMismatch {
            expected: lite.d_large(),
            actual: teacher.output_dim(),
        });
    }
    Ok(())
}

pub fn joint_loss(
    batch: &Batch,
    lite: &LiteModel,
    teacher: &dyn DualEncoder,
    weights: (f64, f64),
    mode: KdContexts,
) -> Result<JointLoss> {
    check_teacher(lite, teacher)?;
    let targets = teacher_targets(batch, teacher)?;
    let con = contrastive_part(batch, &lite.small, 1.0, None)?;
    let kd = kd_part(batch, &lite.large, &targets, mode, 1.0, None)?;
    Ok(JointLoss {
        con,
        kd,
        joint: weights.0 * con + weights.1 * kd,
    })
}

/// Gradients are returned as a `LiteModel` whose heads hold dL/dW.
pub fn joint_loss_and_grad(
    batch: &Batch,
    lite: &LiteModel,
    teacher: &dyn DualEncoder,
    weights: (f64, f64),
    mode: KdContexts,
) -> Result<(JointLoss, LiteModel)> {
    check_teacher(lite, teacher)?;
    let targets = teacher_targets(batch, teacher)?;
    let mut grad = LiteModel {
        small: WeakLearner::zeros(lite.d_small(), lite.small.input_dim()),
        large: WeakLearner::zeros(lite.d_large(), lite.large.input_dim()),
    };
    let con = contrastive_part(batch, &lite.small, weights.0, Some(&mut grad.small))?;
    let kd = kd_part(batch, &lite.large, &targets, mode, weights.1, Some(&mut grad.large))?;
    Ok((
        JointLoss {
            con,
            kd,
            joint: weights.0 * con + weights.1 * kd,
        },
        grad,
    ))
}
