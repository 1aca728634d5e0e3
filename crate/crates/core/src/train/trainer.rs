use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::head::{DualEncoder, LiteModel, ProjectionHead, WeakLearner};
use super::loss::{joint_loss_and_grad, weak_loss_and_grad, Batch};
use super::optim::Optimizer;
use super::{BaseVectors, TrainConfig, TrainExample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub l_con: f64,
    pub l_kd: f64,
    pub l_joint: f64,
}

/// Per-step minibatch losses, recorded before each parameter update.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossTrace {
    pub rows: Vec<TraceRow>,
}

impl LossTrace {
    pub fn con(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.l_con).collect()
    }

    pub fn kd(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.l_kd).collect()
    }

    pub fn joint(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.l_joint).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,l_con,l_kd,l_joint\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", r.step, r.l_con, r.l_kd, r.l_joint));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv().as_bytes())
            .map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct Trained<M> {
    pub model: M,
    pub trace: LossTrace,
}

/// Epoch-wise shuffled minibatches. When the batch covers the whole data set
/// every step uses all examples in their original order.
struct Sampler {
    order: Vec<usize>,
    cursor: usize,
    batch: usize,
}

impl Sampler {
    fn new(n: usize, batch: usize) -> Self {
        Sampler {
            order: (0..n).collect(),
            cursor: n,
            batch: batch.min(n),
        }
    }

    fn next(&mut self, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let n = self.order.len();
        if self.batch == n {
            return self.order.clone();
        }
        if self.cursor + self.batch > n {
            self.order.shuffle(rng);
            self.cursor = 0;
        }
        let out = self.order[self.cursor..self.cursor + self.batch].to_vec();
        self.cursor += self.batch;
        out
    }
}

fn check_inputs(data: &[TrainExample], config: &TrainConfig, d: usize) -> Result<()> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidParam("no training examples".into()));
    }
    if d == 0 {
        return Err(Error::InvalidParam("output dimension must be positive".into()));
    }
    Ok(())
}

pub fn train_weak_learner(
    data: &[TrainExample],
    base: &BaseVectors,
    d: usize,
    config: &TrainConfig,
) -> Result<Trained<WeakLearner>> {
    check_inputs(data, config, d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = WeakLearner::random(d, base.dim(), &mut rng);
    let mut opt = Optimizer::new(config.optimizer, config.learning_rate, &[&model.w_q, &model.w_c]);
    let mut sampler = Sampler::new(data.len(), config.batch_size);
    let mut trace = LossTrace::default();
    for step in 0..config.steps {
        let idx = sampler.next(&mut rng);
        let batch = Batch::new(idx.iter().map(|&i| &data[i]), base)?;
        let (loss, grad) = weak_loss_and_grad(&batch, &model)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { step, loss });
        }
        trace.rows.push(TraceRow {
            step,
            l_con: loss,
            l_kd: 0.0,
            l_joint: loss,
        });
        if config.learning_rate > 0.0 {
            opt.step(&mut [&mut model.w_q, &mut model.w_c], &[&grad.w_q, &grad.w_c]);
            if !finite(&[&model.w_q, &model.w_c]) {
                return Err(Error::Diverged { step, loss: f64::NAN });
            }
        }
    }
    Ok(Trained { model, trace })
}

fn finite(heads: &[&ProjectionHead]) -> bool {
    heads.iter().all(|h| h.data().iter().all(|v| v.is_finite()))
}

/// Trains a two-head student against `teacher`; the large head takes the
/// teacher's output width.
pub fn train_lite(
    data: &[TrainExample],
    base: &BaseVectors,
    teacher: &dyn DualEncoder,
    d_small: usize,
    config: &TrainConfig,
) -> Result<Trained<LiteModel>> {
    check_inputs(data, config, d_small)?;
    if teacher.input_dim() != base.dim() {
        return Err(Error::DimensionMismatch {
            expected: base.dim(),
            actual: teacher.input_dim(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let small = WeakLearner::random(d_small, base.dim(), &mut rng);
    let large = WeakLearner::random(teacher.output_dim(), base.dim(), &mut rng);
    let mut model = LiteModel::new(small, large)?;
    let mut opt = Optimizer::new(
        config.optimizer,
        config.learning_rate,
        &[&model.small.w_q, &model.small.w_c, &model.large.w_q, &model.large.w_c],
    );
    let weights = (config.con_weight, config.kd_weight);
    let mut sampler = Sampler::new(data.len(), config.batch_size);
    let mut trace = LossTrace::default();
    for step in 0..config.steps {
        let idx = sampler.next(&mut rng);
        let batch = Batch::new(idx.iter().map(|&i| &data[i]), base)?;
        let (loss, grad) = joint_loss_and_grad(&batch, &model, teacher, weights, config.kd_contexts)?;
        if !loss.joint.is_finite() {
            return Err(Error::Diverged {
                step,
                loss: loss.joint,
            });
        }
        trace.rows.push(TraceRow {
            step,
            l_con: loss.con,
            l_kd: loss.kd,
            l_joint: loss.joint,
        });
        if config.learning_rate > 0.0 {
            let LiteModel { small, large } = &mut model;
            opt.step(
                &mut [&mut small.w_q, &mut small.w_c, &mut large.w_q, &mut large.w_c],
                &[&grad.small.w_q, &grad.small.w_c, &grad.large.w_q, &grad.large.w_c],
            );
            if !finite(&[&small.w_q, &small.w_c, &large.w_q, &large.w_c]) {
                return Err(Error::Diverged { step, loss: f64::NAN });
            }
        }
    }
    Ok(Trained { model, trace })
}
