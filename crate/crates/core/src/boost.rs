//! Boosted ensembles of weak learners.
//!
//! An ensemble encodes by concatenating its members' projections, so its
//! inner product is the sum of the members' inner products. Each new round is
//! trained on hard negatives mined by the ensemble built so far.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dense::{DenseIndex, DenseRetriever, QuerySource};
use crate::error::{Error, Result};
use crate::model::{Qrels, Searcher};
use crate::train::{
    mine_hard_negatives, train_weak_learner, BaseVectors, DualEncoder, HeadKind, LiteModel,
    LossTrace, MiningReport, Side, TrainConfig, TrainExample, WeakLearner,
};

/// Default retrieval depth when mining negatives.
pub const DEFAULT_MINE_K: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerOrigin {
    Trained,
    LiteSmallHead,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleMember {
    pub learner: WeakLearner,
    pub origin: LearnerOrigin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    members: Vec<EnsembleMember>,
}

impl Ensemble {
    pub fn new(members: Vec<EnsembleMember>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::InvalidParam("ensemble needs at least one learner".into()))?;
        let input = first.learner.input_dim();
        if let Some(bad) = members.iter().find(|m| m.learner.input_dim() != input) {
            return Err(Error::DimensionMismatch {
                expected: input,
                actual: bad.learner.input_dim(),
            });
        }
        Ok(Ensemble { members })
    }

    pub fn single(learner: WeakLearner) -> Self {
        Ensemble {
            members: vec![EnsembleMember {
                learner,
                origin: LearnerOrigin::Trained,
            }],
        }
    }

    pub fn members(&self) -> &[EnsembleMember] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn total_dim(&self) -> usize {
        self.members.iter().map(|m| m.learner.dim()).sum()
    }

    pub fn push(&mut self, member: EnsembleMember) -> Result<()> {
        if member.learner.input_dim() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: member.learner.input_dim(),
            });
        }
        self.members.push(member);
        Ok(())
    }

    pub fn encode(&self, base: &[f64], side: Side) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.total_dim());
        for m in &self.members {
            let head = match side {
                Side::Query => &m.learner.w_q,
                Side::Context => &m.learner.w_c,
            };
            out.extend(head.project(base)?);
        }
        Ok(out)
    }

    fn member_bytes(m: &EnsembleMember) -> Vec<u8> {
        let kind = match m.origin {
            LearnerOrigin::Trained => HeadKind::Weak,
            LearnerOrigin::LiteSmallHead => HeadKind::Small,
        };
        m.learner.to_bytes(kind)
    }

    /// Writes one `PROJ1` file per learner plus `manifest.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut learners = Vec::new();
        for (i, m) in self.members.iter().enumerate() {
            let file = format!("learner_{i:02}.proj1");
            let bytes = Self::member_bytes(m);
            let path = dir.join(&file);
            std::fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
            learners.push(ManifestEntry {
                file,
                dim: m.learner.dim(),
                origin: m.origin,
                sha256: hex::encode(Sha256::digest(&bytes)),
            });
        }
        let manifest = Manifest {
            format: MANIFEST_FORMAT.to_string(),
            total_dim: self.total_dim(),
            learners,
        };
        let path = dir.join("manifest.json");
        let json = serde_json::to_string_pretty(&manifest)? + "\n";
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn load(manifest_path: impl AsRef<Path>) -> Result<Self> {
        let path = manifest_path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        if manifest.format != MANIFEST_FORMAT {
            return Err(Error::InvalidHeader(format!("manifest format {:?}", manifest.format)));
        }
        let dir = path.parent().unwrap_or(Path::new("."));
        let mut members = Vec::new();
        for entry in &manifest.learners {
            let file = dir.join(&entry.file);
            let bytes = std::fs::read(&file).map_err(|e| Error::io(&file, e))?;
            if hex::encode(Sha256::digest(&bytes)) != entry.sha256 {
                return Err(Error::InvalidHeader(format!("checksum mismatch for {}", entry.file)));
            }
            let (learner, _) = WeakLearner::from_bytes(&bytes)?;
            if learner.dim() != entry.dim {
                return Err(Error::Shape(format!("{} has dim {}", entry.file, learner.dim())));
            }
            members.push(EnsembleMember {
                learner,
                origin: entry.origin,
            });
        }
        let ens = Ensemble::new(members)?;
        if ens.total_dim() != manifest.total_dim {
            return Err(Error::Shape(format!(
                "manifest total_dim {} vs {}",
                manifest.total_dim,
                ens.total_dim()
            )));
        }
        Ok(ens)
    }
}

impl DualEncoder for Ensemble {
    fn input_dim(&self) -> usize {
        self.members[0].learner.input_dim()
    }

    fn output_dim(&self) -> usize {
        self.total_dim()
    }

    fn encode_query(&self, base: &[f64]) -> Result<Vec<f64>> {
        self.encode(base, Side::Query)
    }

    fn encode_context(&self, base: &[f64]) -> Result<Vec<f64>> {
        self.encode(base, Side::Context)
    }

    fn fingerprint(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for m in &self.members {
            h.update(Self::member_bytes(m));
        }
        h.finalize().into()
    }
}

pub fn ensemble_encode(ens: &Ensemble, base: &[f64], side: Side) -> Result<Vec<f64>> {
    ens.encode(base, side)
}

const MANIFEST_FORMAT: &str = "ensemble-manifest-v1";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    total_dim: usize,
    learners: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    file: String,
    dim: usize,
    origin: LearnerOrigin,
    sha256: String,
}

#[derive(Debug, Clone)]
pub struct BoostConfig {
    pub rounds: usize,
    /// Output dimension of every newly trained learner.
    pub dim: usize,
    pub train: TrainConfig,
    pub mine_k: usize,
}

#[derive(Debug, Clone)]
pub struct BoostOutput {
    pub ensemble: Ensemble,
    /// One trace per trained round (empty for a pre-trained slot).
    pub traces: Vec<LossTrace>,
    pub mining: MiningReport,
    /// Training examples (with negatives) used in each trained round.
    pub round_examples: Vec<Vec<TrainExample>>,
}

fn round_seed(base_seed: u64, round: usize) -> u64 {
    base_seed.wrapping_add(round as u64 - 1)
}

fn dense_miner<'a>(
    ens: &'a Ensemble,
    index: &'a DenseIndex,
    base: &'a BaseVectors,
    tag: String,
) -> Result<DenseRetriever<'a>> {
    DenseRetriever::new(ens, index, QuerySource::Base(base), tag)
}

/// Trains rounds `start..=rounds` on top of `ens`. Round `start` is mined by
/// `first_miner` when given, otherwise by the ensemble.
#[allow(clippy::too_many_arguments)]
fn continue_boosting(
    mut ens: Option<Ensemble>,
    mut out: BoostOutput,
    data: &[TrainExample],
    base: &BaseVectors,
    qrels: &Qrels,
    start: usize,
    cfg: &BoostConfig,
    mut first_miner: Option<&dyn Searcher>,
) -> Result<BoostOutput> {
    let m = cfg.train.num_hard_negatives;
    for round in start..=cfg.rounds {
        let tag_err = |e: Error| Error::Round {
            round,
            source: Box::new(e),
        };
        let (examples, report) = match (first_miner.take(), ens.as_ref()) {
            (Some(miner), _) => mine_hard_negatives(miner, data, qrels, cfg.mine_k, m, round),
            (None, Some(current)) => {
                let index = DenseIndex::build(current, base.doc_matrix()).map_err(tag_err)?;
                let miner = dense_miner(current, &index, base, format!("ensemble-{}", current.len()))
                    .map_err(tag_err)?;
                mine_hard_negatives(&miner, data, qrels, cfg.mine_k, m, round)
            }
            (None, None) => Err(Error::Config("no miner for the first round".into())),
        }
        .map_err(tag_err)?;
        let train = TrainConfig {
            seed: round_seed(cfg.train.seed, round),
            ..cfg.train.clone()
        };
        let trained = train_weak_learner(&examples, base, cfg.dim, &train).map_err(tag_err)?;
        let member = EnsembleMember {
            learner: trained.model,
            origin: LearnerOrigin::Trained,
        };
        match ens.as_mut() {
            Some(e) => e.push(member).map_err(tag_err)?,
            None => ens = Some(Ensemble::new(vec![member])?),
        }
        out.traces.push(trained.trace);
        out.mining.extend(report);
        out.round_examples.push(examples);
    }
    out.ensemble = ens.ok_or_else(|| Error::InvalidParam("rounds must be >= 1".into()))?;
    Ok(out)
}

/// Round 1 trains on negatives from `first_miner` (BM25 in the standard
/// recipe); every later round on negatives mined by the ensemble so far.
pub fn train_drboost(
    data: &[TrainExample],
    base: &BaseVectors,
    qrels: &Qrels,
    cfg: &BoostConfig,
    first_miner: &dyn Searcher,
) -> Result<BoostOutput> {
    if cfg.rounds == 0 {
        return Err(Error::InvalidParam("rounds must be >= 1".into()));
    }
    let out = BoostOutput {
        ensemble: Ensemble::single(WeakLearner::zeros(1, 1)),
        traces: Vec::new(),
        mining: MiningReport::default(),
        round_examples: Vec::new(),
    };
    continue_boosting(None, out, data, base, qrels, 1, cfg, Some(first_miner))
}

/// Swaps slot 0 for the LITE small head; the rest is untouched.
pub fn replace_first_learner(ens: &Ensemble, lite: &LiteModel) -> Result<Ensemble> {
    let first = &ens.members[0].learner;
    if lite.d_small() != first.dim() || lite.small.input_dim() != first.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: first.dim(),
            actual: lite.d_small(),
        });
    }
    let mut members = ens.members.clone();
    members[0] = EnsembleMember {
        learner: lite.small.clone(),
        origin: LearnerOrigin::LiteSmallHead,
    };
    Ensemble::new(members)
}

/// Uses the LITE small head as round 1 and boosts from there; round 2 is
/// mined by the LITE retriever itself.
pub fn boost_from_lite(
    lite: &LiteModel,
    data: &[TrainExample],
    base: &BaseVectors,
    qrels: &Qrels,
    cfg: &BoostConfig,
) -> Result<BoostOutput> {
    if cfg.rounds < 2 {
        return Err(Error::InvalidParam("boosting from LITE needs rounds >= 2".into()));
    }
    let ens = Ensemble::new(vec![EnsembleMember {
        learner: lite.small.clone(),
        origin: LearnerOrigin::LiteSmallHead,
    }])?;
    let index = DenseIndex::build(lite, base.doc_matrix())?;
    let lite_miner = DenseRetriever::new(lite, &index, QuerySource::Base(base), "lite")?;
    let out = BoostOutput {
        ensemble: ens.clone(),
        traces: vec![LossTrace::default()],
        mining: MiningReport::default(),
        round_examples: vec![Vec::new()],
    };
    continue_boosting(Some(ens), out, data, base, qrels, 2, cfg, Some(&lite_miner))
}
