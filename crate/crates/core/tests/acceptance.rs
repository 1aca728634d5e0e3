//! Acceptance checks, one line per criterion:
//! `PASS <name> (<elapsed>): <detail>` or `FAIL ...`.
//!
//! Runs without the libtest harness so the lines are always printed.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use litehybrid::attack::{
    attack, derive_seed, generate_attack_set, AttackMethod, AttackResources, IdentityTranslator,
    SynonymLexicon,
};
use litehybrid::bm25::{Bm25Index, Bm25Params};
use litehybrid::boost::{train_drboost, BoostConfig, Ensemble};
use litehybrid::dense::{memory_model, DenseIndex, DenseRetriever, MemoryScenario, QuerySource};
use litehybrid::encoder::{encode_corpus, encode_queries, EmbeddingMatrix};
use litehybrid::eval::{average_drop, recall_at_k, retention};
use litehybrid::fusion::{fuse, hybrid_search, FusionConfig, FusionStrategy};
use litehybrid::model::{Document, Qrels, Query, RankedList, ScoredDoc, Searcher};
use litehybrid::synth::{clustered_fixture, complementary_fixture};
use litehybrid::train::{
    contrastive_loss, contrastive_loss_from_sims, examples_from_qrels, joint_loss_and_grad, kd_loss,
    train_lite, weak_loss_and_grad, BaseVectors, Batch, DualEncoder, KdContexts, LiteModel,
    ProjectionHead, TrainConfig, TrainExample, WeakLearner,
};

type Outcome = Result<String, String>;

struct Criterion {
    name: &'static str,
    limit: Option<Duration>,
    check: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion { name: "memory-model", limit: Some(Duration::from_secs(1)), check: memory_model_table },
        Criterion { name: "retention", limit: Some(Duration::from_secs(1)), check: retention_arithmetic },
        Criterion { name: "bm25-oracle", limit: Some(Duration::from_secs(5)), check: bm25_oracle },
        Criterion { name: "gradients", limit: Some(Duration::from_secs(30)), check: gradients },
        Criterion { name: "loss-identities", limit: None, check: loss_identities },
        Criterion { name: "dense-exactness", limit: Some(Duration::from_secs(5)), check: dense_exactness },
        Criterion { name: "boosting-improves-fit", limit: Some(Duration::from_secs(120)), check: boosting_improves_fit },
        Criterion { name: "lite-sanity", limit: Some(Duration::from_secs(120)), check: lite_sanity },
        Criterion { name: "hybrid-complementarity", limit: None, check: hybrid_complementarity },
        Criterion { name: "fusion-strategies", limit: None, check: fusion_strategies },
        Criterion { name: "attack-invariants", limit: Some(Duration::from_secs(10)), check: attack_invariants },
        Criterion { name: "average-drop", limit: None, check: average_drop_definition },
        Criterion { name: "end-to-end-determinism", limit: None, check: end_to_end_determinism },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(c.check).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let outcome = match (outcome, c.limit) {
            (Ok(d), Some(limit)) if elapsed > limit => Err(format!("{d}; took {elapsed:?}, limit {limit:?}")),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("PASS {} ({:.2?}): {detail}", c.name, elapsed),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} ({:.2?}): {detail}", c.name, elapsed);
            }
        }
    }
    println!("acceptance: {} passed, {} failed", criteria.len() - failed, failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(actual: f64, expected: f64, tol: f64, what: &str) -> Result<(), String> {
    ensure((actual - expected).abs() <= tol, || {
        format!("{what}: got {actual}, expected {expected} ± {tol}")
    })
}

// ---------------------------------------------------------------------------

fn memory_model_table() -> Outcome {
    let scenario = MemoryScenario::new(
        [("BM25", 2.4), ("LITE", 2.5), ("DPR", 61.5), ("DrBoost-2", 5.1)].map(|(n, g)| (n.to_string(), g)),
    )
    .map_err(|e| e.to_string())?;
    let pairs = [("BM25", "LITE"), ("BM25", "DPR"), ("BM25", "DrBoost-2")]
        .map(|(s, d)| (s.to_string(), d.to_string()));
    let report = memory_model(&scenario, &pairs).map_err(|e| e.to_string())?;
    let total = |n: &str| report.hybrid(n).map(|h| h.total_gb).ok_or(format!("missing {n}"));
    within(total("BM25+LITE")?, 4.9, 0.05, "Hybrid-LITE GB")?;
    within(total("BM25+DPR")?, 63.9, 0.05, "BM25+DPR GB")?;
    within(total("BM25+DrBoost-2")?, 7.5, 0.05, "Hybrid-DrBoost-2 GB")?;
    let r1 = report.ratio("BM25+LITE", "BM25+DPR").ok_or("ratio")?;
    let r2 = report.ratio("BM25+DrBoost-2", "BM25+DPR").ok_or("ratio")?;
    within(r1, 13.0, 0.1, "LITE savings")?;
    within(r2, 8.5, 0.1, "DrBoost-2 savings")?;
    let listed = report
        .savings
        .iter()
        .find(|s| s.light == "BM25+LITE" && s.heavy == "BM25+DPR")
        .ok_or("savings entry")?;
    within(listed.ratio, r1, 1e-12, "listed ratio")?;
    Ok(format!("totals 4.9/63.9/7.5 GB, ratios {r1:.2}x and {r2:.2}x"))
}

fn retention_arithmetic() -> Outcome {
    let a = retention(87.2, 88.6).map_err(|e| e.to_string())?;
    let b = retention(87.2, 88.8).map_err(|e| e.to_string())?;
    within(a, 0.984, 0.001, "vs BM25+DPR")?;
    within(b, 0.982, 0.001, "vs SPAR")?;
    ensure(retention(1.0, 0.0).is_err(), || "zero baseline accepted".into())?;
    Ok(format!("{a:.4} and {b:.4}"))
}

// ---------------------------------------------------------------------------

fn oracle_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            cur.extend(ch.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Straight-line BM25 over raw documents.
fn oracle_bm25(docs: &[Document], query: &str, k1: f64, b: f64) -> Vec<(String, f64)> {
    let toks: Vec<Vec<String>> = docs
        .iter()
        .map(|d| oracle_tokens(&format!("{} {}", d.title, d.text)))
        .collect();
    let n = docs.len() as f64;
    let avgdl = toks.iter().map(|t| t.len() as f64).sum::<f64>() / n;
    let q = oracle_tokens(query);
    docs.iter()
        .zip(&toks)
        .map(|(d, t)| {
            let mut score = 0.0;
            for term in &q {
                let tf = t.iter().filter(|x| *x == term).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                let df = toks.iter().filter(|ts| ts.contains(term)).count() as f64;
                let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * t.len() as f64 / avgdl));
            }
            (d.id.clone(), score)
        })
        .collect()
}

fn sort_desc(mut v: Vec<(String, f64)>) -> Vec<(String, f64)> {
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v
}

fn bm25_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let vocab: Vec<String> = (0..40).map(|i| format!("w{i}")).collect();
    let seps = [" ", " ", " ", ", ", ". ", "-"];
    let word = |rng: &mut ChaCha8Rng| {
        let w = vocab.choose(rng).unwrap().clone();
        if rng.random_bool(0.2) {
            w.to_uppercase()
        } else {
            w
        }
    };
    let docs: Vec<Document> = (0..100)
        .map(|i| {
            let len = rng.random_range(3..30);
            let mut text = String::new();
            for j in 0..len {
                if j > 0 {
                    text.push_str(seps.choose(&mut rng).unwrap());
                }
                text.push_str(&word(&mut rng));
            }
            let title = if rng.random_bool(0.5) { word(&mut rng) } else { String::new() };
            Document::new(format!("doc{i:03}"), title, text)
        })
        .collect();
    let queries: Vec<Query> = (0..50)
        .map(|i| {
            let len = rng.random_range(1..=5);
            let words: Vec<String> = (0..len)
                .map(|_| if rng.random_bool(0.1) { "unseen".to_string() } else { word(&mut rng) })
                .collect();
            Query::new(format!("q{i}"), words.join(" "))
        })
        .collect();
    let params = Bm25Params::default();
    let index = Bm25Index::build(&docs, params).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    for q in &queries {
        let expected = oracle_bm25(&docs, &q.text, params.k1, params.b);
        for (id, e) in &expected {
            let got = index.score(q, id).map_err(|e| e.to_string())?;
            let rel = (got - e).abs() / e.abs().max(f64::MIN_POSITIVE);
            if *e == 0.0 {
                ensure(got == 0.0, || format!("{}/{id}: got {got}, oracle 0", q.id))?;
            } else {
                worst = worst.max(rel);
                ensure(rel <= 1e-9, || format!("{}/{id}: got {got}, oracle {e}", q.id))?;
            }
            compared += 1;
        }
        let ranked = sort_desc(expected.into_iter().filter(|(_, s)| *s > 0.0).collect());
        for k in [1, 5, 20] {
            let list = index.search(q, k);
            let got: Vec<&str> = list.doc_ids().collect();
            let want: Vec<&str> = ranked.iter().take(k).map(|(d, _)| d.as_str()).collect();
            ensure(got == want, || format!("{} k={k}: {got:?} vs {want:?}", q.id))?;
        }
    }
    Ok(format!("{compared} scores, worst relative error {worst:.1e}; orders match for k=1,5,20"))
}

// ---------------------------------------------------------------------------

fn matvec(h: &ProjectionHead, v: &[f64]) -> Vec<f64> {
    let cols = h.cols();
    (0..h.rows()).map(|r| (0..cols).map(|c| h.data()[r * cols + c] * v[c]).sum()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sqd(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

struct GradFixture {
    examples: Vec<TrainExample>,
    queries: HashMap<String, Vec<f64>>,
    docs: HashMap<String, Vec<f64>>,
    base: BaseVectors,
}

fn grad_fixture(seed: u64, dim: usize) -> GradFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vec = |rng: &mut ChaCha8Rng| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
    let n_ex = 4;
    let mut docs = HashMap::new();
    let mut queries = HashMap::new();
    let mut examples = Vec::new();
    for i in 0..n_ex {
        let qid = format!("q{i}");
        queries.insert(qid.clone(), vec(&mut rng));
        let pos = format!("p{i}");
        docs.insert(pos.clone(), vec(&mut rng));
        let mut negs: Vec<String> = (0..2).map(|j| format!("n{i}{j}")).collect();
        for n in &negs {
            docs.insert(n.clone(), vec(&mut rng));
        }
        // Example 1 also uses example 0's positive as a hard negative.
        if i == 1 {
            negs.push("p0".to_string());
        }
        examples.push(TrainExample::new(Query::new(qid, "x"), pos, negs).unwrap());
    }
    let base = BaseVectors::from_maps(dim, queries.clone(), docs.clone()).unwrap();
    GradFixture {
        examples,
        queries,
        docs,
        base,
    }
}

/// Candidate doc ids: positive, hard negatives, other positives, first occurrence kept.
fn oracle_candidates(f: &GradFixture, i: usize) -> Vec<String> {
    let ex = &f.examples[i];
    let mut out = vec![ex.positive.clone()];
    let others = f.examples.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, e)| e.positive.clone());
    for id in ex.hard_negatives.iter().cloned().chain(others) {
        if !out.contains(&id) {
            out.push(id);
        }
    }
    out
}

fn oracle_con(f: &GradFixture, l: &WeakLearner) -> f64 {
    let n = f.examples.len() as f64;
    (0..f.examples.len())
        .map(|i| {
            let ex = &f.examples[i];
            let q = matvec(&l.w_q, &f.queries[&ex.query.id]);
            let sims: Vec<f64> = oracle_candidates(f, i)
                .iter()
                .map(|id| dot(&q, &matvec(&l.w_c, &f.docs[id])))
                .collect();
            let m = sims.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + sims.iter().map(|s| (s - m).exp()).sum::<f64>().ln();
            lse - sims[0]
        })
        .sum::<f64>()
        / n
}

fn oracle_kd(f: &GradFixture, large: &WeakLearner, teacher: &WeakLearner, mode: KdContexts) -> f64 {
    let n = f.examples.len() as f64;
    f.examples
        .iter()
        .map(|ex| {
            let qb = &f.queries[&ex.query.id];
            let pb = &f.docs[&ex.positive];
            let vq = matvec(&large.w_q, qb);
            let tq = matvec(&teacher.w_q, qb);
            let tp = matvec(&teacher.w_c, pb);
            let mut total = sqd(&vq, &tq) + sqd(&matvec(&large.w_c, pb), &tp) + sqd(&vq, &tp);
            if mode == KdContexts::PositiveAndHardNegatives {
                for id in &ex.hard_negatives {
                    let cb = &f.docs[id];
                    total += sqd(&matvec(&large.w_c, cb), &matvec(&teacher.w_c, cb));
                }
            }
            total
        })
        .sum::<f64>()
        / n
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

/// Compares `analytic` with central differences of `loss` over every entry of
/// the head selected by `head`.
fn fd_check<M: Clone>(
    model: &M,
    head: fn(&mut M) -> &mut ProjectionHead,
    analytic: &ProjectionHead,
    loss: &dyn Fn(&M) -> f64,
) -> Result<f64, String> {
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    let mut m = model.clone();
    for idx in 0..analytic.data().len() {
        let orig = head(&mut m).data()[idx];
        head(&mut m).data_mut()[idx] = orig + h;
        let up = loss(&m);
        head(&mut m).data_mut()[idx] = orig - h;
        let down = loss(&m);
        head(&mut m).data_mut()[idx] = orig;
        let numeric = (up - down) / (2.0 * h);
        let e = rel_err(analytic.data()[idx], numeric);
        if e > 1e-4 {
            return Err(format!("entry {idx}: analytic {} vs numeric {numeric}", analytic.data()[idx]));
        }
        worst = worst.max(e);
    }
    Ok(worst)
}

fn gradients() -> Outcome {
    let (d_in, d_small, d_large) = (6, 3, 5);
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    let seeds = 12;
    for seed in 0..seeds {
        let f = grad_fixture(seed, d_in);
        let batch = Batch::new(&f.examples, &f.base).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let weak = WeakLearner::random(d_small, d_in, &mut rng);
        let scale = |l: &mut WeakLearner| {
            for v in l.w_q.data_mut().iter_mut().chain(l.w_c.data_mut()) {
                *v *= 3.0;
            }
        };
        let mut weak = weak;
        scale(&mut weak);

        // contrastive
        let (loss, g) = weak_loss_and_grad(&batch, &weak).map_err(|e| e.to_string())?;
        ensure(rel_err(loss, oracle_con(&f, &weak)) < 1e-12, || format!("seed {seed}: L_con value"))?;
        let con = |l: &WeakLearner| oracle_con(&f, l);
        worst = worst.max(fd_check(&weak, |l| &mut l.w_q, &g.w_q, &con)?);
        worst = worst.max(fd_check(&weak, |l| &mut l.w_c, &g.w_c, &con)?);

        // distillation and joint
        let large = WeakLearner::random(d_large, d_in, &mut rng);
        let teacher = WeakLearner::random(d_large, d_in, &mut rng);
        let lite = LiteModel::new(weak.clone(), large).map_err(|e| e.to_string())?;
        for mode in [KdContexts::PositiveAndHardNegatives, KdContexts::Positive] {
            for weights in [(0.0, 1.0), (0.7, 1.3)] {
                let (jl, g) = joint_loss_and_grad(&batch, &lite, &teacher, weights, mode).map_err(|e| e.to_string())?;
                let kd_val = oracle_kd(&f, &lite.large, &teacher, mode);
                ensure(rel_err(jl.kd, kd_val) < 1e-12, || format!("seed {seed}: L_KD value {} vs {kd_val}", jl.kd))?;
                let joint = |m: &LiteModel| {
                    weights.0 * oracle_con(&f, &m.small) + weights.1 * oracle_kd(&f, &m.large, &teacher, mode)
                };
                ensure(rel_err(jl.joint, joint(&lite)) < 1e-12, || format!("seed {seed}: L_joint value"))?;
                let heads: [(fn(&mut LiteModel) -> &mut ProjectionHead, &ProjectionHead); 4] = [
                    (|m| &mut m.small.w_q, &g.small.w_q),
                    (|m| &mut m.small.w_c, &g.small.w_c),
                    (|m| &mut m.large.w_q, &g.large.w_q),
                    (|m| &mut m.large.w_c, &g.large.w_c),
                ];
                for (sel, an) in heads {
                    worst = worst.max(fd_check(&lite, sel, an, &joint)?);
                    checked += an.data().len();
                }
            }
        }
        checked += g.w_q.data().len() + g.w_c.data().len();
    }
    Ok(format!("{seeds} fixtures, {checked} entries, worst relative error {worst:.2e}"))
}

fn loss_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let q: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let p: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let l = contrastive_loss(&q, &p, &[]);
        ensure(l == 0.0, || format!("zero negatives gave {l}"))?;
    }
    for n in 1..=64usize {
        let s: f64 = rng.random_range(-5.0..5.0);
        let sims = vec![s; n + 1];
        let l = contrastive_loss_from_sims(&sims);
        within(l, ((1 + n) as f64).ln(), 1e-12, &format!("n={n} equal sims"))?;
        let q = [1.0, 0.0];
        let negs = vec![vec![s, 7.0]; n];
        within(contrastive_loss(&q, &[s, -3.0], &negs), ((1 + n) as f64).ln(), 1e-12, "vector form")?;
    }
    for _ in 0..50 {
        let v: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
        let c: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
        let k = kd_loss(&v, &c, &v, &c, &v).map_err(|e| e.to_string())?;
        ensure(k == 0.0, || format!("kd at teacher = {k}"))?;
    }
    Ok("L_con(no negatives)=0, ln(1+n) for n=1..64, L_KD=0 at the teacher".into())
}

// ---------------------------------------------------------------------------

fn dense_exactness() -> Outcome {
    let mut searches = 0;
    for seed in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(77 + seed);
        let (n, d) = (200, 16);
        let ids: Vec<String> = (0..n).map(|i| format!("d{i:03}")).collect();
        // Coarse values make exact score ties common.
        let data: Vec<f32> = (0..n * d).map(|_| rng.random_range(-2i32..=2) as f32 * 0.5).collect();
        let m = EmbeddingMatrix::new(ids.clone(), d, data.clone()).map_err(|e| e.to_string())?;
        let index = DenseIndex::from_matrix(m);
        for qi in 0..3 {
            let q: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut all: Vec<(String, f64)> = (0..n)
                .map(|i| {
                    let s = (0..d).map(|j| data[i * d + j] as f64 * q[j]).sum::<f64>();
                    (ids[i].clone(), s)
                })
                .collect();
            all = sort_desc(all);
            for k in 0..=n + 5 {
                let got = index.search("q", &q, k).map_err(|e| e.to_string())?;
                let want = &all[..k.min(n)];
                ensure(got.len() == want.len(), || format!("seed {seed} q{qi} k={k}: length {}", got.len()))?;
                for (e, (id, s)) in got.entries().iter().zip(want) {
                    ensure(&e.doc_id == id && (e.score - s).abs() <= 1e-12 * s.abs().max(1.0), || {
                        format!("seed {seed} q{qi} k={k}: {} {} vs {id} {s}", e.doc_id, e.score)
                    })?;
                }
                searches += 1;
            }
        }
    }
    Ok(format!("{searches} searches equal the full-sort oracle"))
}

// ---------------------------------------------------------------------------

struct Clustered {
    queries: Vec<Query>,
    qrels: Qrels,
    base: BaseVectors,
    bm25: Bm25Index,
    examples: Vec<TrainExample>,
}

fn clustered() -> Clustered {
    let f = clustered_fixture();
    let base = BaseVectors::new(
        encode_queries(&f.queries, 256, 0).unwrap(),
        encode_corpus(&f.corpus, 256, 0).unwrap(),
    )
    .unwrap();
    let bm25 = Bm25Index::build(&f.corpus, Bm25Params::default()).unwrap();
    let examples = examples_from_qrels(&f.queries, &f.qrels);
    Clustered {
        queries: f.queries,
        qrels: f.qrels,
        base,
        bm25,
        examples,
    }
}

fn dense_recall(enc: &dyn DualEncoder, c: &Clustered, k: usize) -> f64 {
    let index = DenseIndex::build(enc, c.base.doc_matrix()).unwrap();
    let r = DenseRetriever::new(enc, &index, QuerySource::Base(&c.base), "eval").unwrap();
    let run: Vec<RankedList> = c.queries.iter().map(|q| r.search(q, k).unwrap()).collect();
    recall_at_k(&run, &c.qrels, k).unwrap()
}

fn boost_config(seed: u64) -> BoostConfig {
    BoostConfig {
        rounds: 2,
        dim: 2,
        train: TrainConfig {
            seed,
            steps: 200,
            ..TrainConfig::default()
        },
        mine_k: 50,
    }
}

fn boosting_improves_fit() -> Outcome {
    let c = clustered();
    let mut strict = 0;
    let mut rows = Vec::new();
    for seed in 0..5 {
        let out = train_drboost(&c.examples, &c.base, &c.qrels, &boost_config(seed), &c.bm25).map_err(|e| e.to_string())?;
        let first = Ensemble::new(out.ensemble.members()[..1].to_vec()).map_err(|e| e.to_string())?;
        let r1 = dense_recall(&first, &c, 5);
        let r2 = dense_recall(&out.ensemble, &c, 5);
        ensure(r2 >= r1, || format!("seed {seed}: rounds=2 R@5 {r2} < rounds=1 {r1}"))?;
        if r2 > r1 {
            strict += 1;
        }
        rows.push(format!("{r1:.3}->{r2:.3}"));
    }
    ensure(strict >= 3, || format!("strict improvement in only {strict}/5: {rows:?}"))?;
    Ok(format!("R@5 per seed {}; strict in {strict}/5", rows.join(", ")))
}

fn smoothed(trace: &[f64], w: usize) -> Vec<f64> {
    (0..=trace.len() - w).map(|i| trace[i..i + w].iter().sum::<f64>() / w as f64).collect()
}

fn lite_sanity() -> Outcome {
    let c = clustered();
    let mut rows = Vec::new();
    for seed in 0..5 {
        let teacher = train_drboost(&c.examples, &c.base, &c.qrels, &boost_config(seed), &c.bm25).map_err(|e| e.to_string())?;
        let cfg = TrainConfig {
            seed,
            steps: 200,
            batch_size: 40,
            ..TrainConfig::default()
        };
        let lite = train_lite(&teacher.round_examples[0], &c.base, &teacher.ensemble, 2, &cfg).map_err(|e| e.to_string())?;
        for (name, trace) in [("L_con", lite.trace.con()), ("L_KD", lite.trace.kd())] {
            let s = smoothed(&trace, 10);
            if let Some(i) = (1..s.len()).find(|&i| s[i] > s[i - 1]) {
                return Err(format!("seed {seed}: smoothed {name} rises at step {i}: {} -> {}", s[i - 1], s[i]));
            }
        }
        let t = dense_recall(&teacher.ensemble, &c, 10);
        let l = dense_recall(&lite.model, &c, 10);
        ensure(l >= 0.9 * t, || format!("seed {seed}: LITE R@10 {l} < 0.9 x teacher {t}"))?;
        rows.push(format!("{l:.3}/{t:.3}"));
    }
    Ok(format!("traces monotone; LITE/teacher R@10 per seed {}", rows.join(", ")))
}

// ---------------------------------------------------------------------------

fn minmax_oracle(list: &[(String, f64)]) -> BTreeMap<String, f64> {
    let lo = list.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
    let hi = list.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
    list.iter()
        .map(|(d, s)| (d.clone(), if hi > lo { (s - lo) / (hi - lo) } else { 1.0 }))
        .collect()
}

fn hybrid_complementarity() -> Outcome {
    let f = complementary_fixture();
    let bm25 = Bm25Index::build(&f.corpus, Bm25Params::default()).map_err(|e| e.to_string())?;
    let identity = WeakLearner::new(ProjectionHead::identity(8), ProjectionHead::identity(8)).unwrap();
    let index = DenseIndex::from_matrix(f.doc_vectors.clone());
    let dense = DenseRetriever::new(&identity, &index, QuerySource::Matrix(&f.query_vectors), "dense").unwrap();
    let cfg = FusionConfig::default();
    let k = 10;
    let (mut sparse_run, mut dense_run, mut hybrid_run) = (Vec::new(), Vec::new(), Vec::new());
    for q in &f.queries {
        let s = bm25.search(q, cfg.k_candidates);
        let d = dense.search(q, cfg.k_candidates).map_err(|e| e.to_string())?;
        let h = hybrid_search(q, &bm25, &dense, &cfg).map_err(|e| e.to_string())?;

        let pairs = |l: &RankedList| l.entries().iter().map(|e| (e.doc_id.clone(), e.score)).collect::<Vec<_>>();
        let (ns, nd) = (minmax_oracle(&pairs(&s)), minmax_oracle(&pairs(&d)));
        let ids: BTreeSet<&String> = ns.keys().chain(nd.keys()).collect();
        let want = sort_desc(
            ids.into_iter()
                .map(|id| (id.clone(), 0.5 * ns.get(id).unwrap_or(&0.0) + 0.5 * nd.get(id).unwrap_or(&0.0)))
                .collect(),
        );
        let got = pairs(&h);
        ensure(got.len() == want.len().min(cfg.k_candidates), || format!("{}: fused length", q.id))?;
        for ((gi, gs), (wi, ws)) in got.iter().zip(&want) {
            ensure(gi == wi && gs == ws, || format!("{}: fused {gi} {gs} vs oracle {wi} {ws}", q.id))?;
        }
        // Rank of the target under the hand analysis: first for dense-only
        // queries, at worst second (tied at 0.5 with the dense top hit) for sparse-only ones.
        let target = f.qrels.relevant(&q.id).unwrap().iter().next().unwrap();
        let rank = h.doc_ids().position(|d| d == target).ok_or(format!("{}: target missing", q.id))?;
        let bound = if f.dense_only.contains(&q.id) { 0 } else { 1 };
        ensure(rank <= bound, || format!("{}: target at rank {}", q.id, rank + 1))?;
        sparse_run.push(s);
        dense_run.push(d);
        hybrid_run.push(h);
    }
    let r = |run: &[RankedList]| recall_at_k(run, &f.qrels, k).unwrap();
    let (rs, rd, rh) = (r(&sparse_run), r(&dense_run), r(&hybrid_run));
    ensure(rh >= rs.max(rd), || format!("hybrid {rh} < max(sparse {rs}, dense {rd})"))?;
    Ok(format!("R@10 sparse {rs:.2}, dense {rd:.2}, hybrid {rh:.2}; fused lists equal the oracle"))
}

type Case = (&'static [(&'static str, f64)], &'static [(&'static str, f64)], f64, f64);

const FUSION_CASES: [Case; 10] = [
    (&[("d1", 1.0), ("d2", 0.0)], &[("d2", 1.0), ("d3", 0.0)], 0.5, 0.5),
    (&[("a", 3.0), ("b", 2.0), ("c", 1.0)], &[("a", 1.0), ("b", 3.0), ("c", 2.0)], 0.5, 0.5),
    (&[("a", 10.0), ("b", 5.0)], &[("c", 0.9), ("d", 0.1)], 0.5, 0.5),
    (&[("a", 2.0)], &[("a", 5.0), ("b", 1.0)], 0.5, 0.5),
    (&[], &[("a", 0.3), ("b", 0.2)], 0.5, 0.5),
    (&[("a", 4.0), ("b", 4.0), ("c", 1.0)], &[("c", 0.8), ("b", 0.4), ("a", 0.0)], 0.5, 0.5),
    (&[("x", 12.5), ("y", 7.5), ("z", 2.5)], &[("x", 0.2), ("y", 0.6), ("z", 1.0)], 0.7, 0.3),
    (&[("a", 1.0), ("b", 2.0), ("c", 3.0), ("d", 4.0)], &[("d", 1.0), ("c", 2.0), ("b", 3.0), ("a", 4.0)], 0.5, 0.5),
    (&[("p", 6.0), ("q", 3.0), ("r", 0.0)], &[("q", 0.5), ("s", 0.25), ("p", 0.0)], 0.2, 0.8),
    (&[("a", -1.0), ("b", -3.0)], &[("a", -0.5), ("b", 0.5), ("c", 1.5)], 0.6, 0.4),
];

type Expected = &'static [(&'static str, f64)];

/// Hand-computed fused lists per case: (minmax_sum, simple_sum, multiplication).
const FUSION_EXPECTED: [(Expected, Expected, Expected); 10] = [
    (&[("d1", 0.5), ("d2", 0.5), ("d3", 0.0)], &[("d1", 0.5), ("d2", 0.5), ("d3", 0.0)], &[("d1", 0.0), ("d2", 0.0), ("d3", 0.0)]),
    (&[("b", 0.75), ("a", 0.5), ("c", 0.25)], &[("b", 2.5), ("a", 2.0), ("c", 1.5)], &[("b", 0.5), ("a", 0.0), ("c", 0.0)]),
    (&[("a", 0.5), ("c", 0.5), ("b", 0.0), ("d", 0.0)], &[("a", 5.0), ("b", 2.5), ("c", 0.45), ("d", 0.05)], &[("a", 0.0), ("b", 0.0), ("c", 0.0), ("d", 0.0)]),
    (&[("a", 1.0), ("b", 0.0)], &[("a", 3.5), ("b", 0.5)], &[("a", 1.0), ("b", 0.0)]),
    (&[("a", 0.5), ("b", 0.0)], &[("a", 0.15), ("b", 0.1)], &[("a", 0.0), ("b", 0.0)]),
    (&[("b", 0.75), ("a", 0.5), ("c", 0.5)], &[("b", 2.2), ("a", 2.0), ("c", 0.9)], &[("b", 0.5), ("a", 0.0), ("c", 0.0)]),
    (&[("x", 0.7), ("y", 0.5), ("z", 0.3)], &[("x", 8.81), ("y", 5.43), ("z", 2.05)], &[("y", 0.25), ("x", 0.0), ("z", 0.0)]),
    (&[("a", 0.5), ("b", 0.5), ("c", 0.5), ("d", 0.5)], &[("a", 2.5), ("b", 2.5), ("c", 2.5), ("d", 2.5)], &[("b", 2.0 / 9.0), ("c", 2.0 / 9.0), ("a", 0.0), ("d", 0.0)]),
    (&[("q", 0.9), ("s", 0.4), ("p", 0.2), ("r", 0.0)], &[("p", 1.2), ("q", 1.0), ("s", 0.2), ("r", 0.0)], &[("q", 0.5), ("p", 0.0), ("r", 0.0), ("s", 0.0)]),
    (&[("a", 0.6), ("c", 0.4), ("b", 0.2)], &[("c", 0.6), ("a", -0.8), ("b", -1.6)], &[("a", 0.0), ("b", 0.0), ("c", 0.0)]),
];

fn ranked(items: &[(&str, f64)]) -> RankedList {
    RankedList::new("q", items.iter().map(|(d, s)| ScoredDoc::new(*d, *s)).collect()).unwrap()
}

fn scale_scores(list: &RankedList, c: f64) -> RankedList {
    RankedList::new(
        list.query_id.clone(),
        list.entries().iter().map(|e| ScoredDoc::new(e.doc_id.clone(), e.score * c)).collect(),
    )
    .unwrap()
}

fn fusion_strategies() -> Outcome {
    let strategies = [FusionStrategy::MinMaxSum, FusionStrategy::SimpleSum, FusionStrategy::Multiplication];
    for (n, ((s, d, w1, w2), expected)) in FUSION_CASES.iter().zip(&FUSION_EXPECTED).enumerate() {
        let want = [expected.0, expected.1, expected.2];
        for (strategy, want) in strategies.iter().zip(want) {
            let cfg = FusionConfig { w1: *w1, w2: *w2, strategy: *strategy, k_candidates: 100 };
            let got = fuse(&ranked(s), &ranked(d), &cfg).map_err(|e| e.to_string())?;
            let ids: Vec<&str> = got.doc_ids().collect();
            let want_ids: Vec<&str> = want.iter().map(|x| x.0).collect();
            ensure(ids == want_ids, || format!("case {} {strategy:?}: {ids:?} vs {want_ids:?}", n + 1))?;
            for (e, (_, ws)) in got.entries().iter().zip(want) {
                ensure((e.score - ws).abs() < 1e-12, || format!("case {} {strategy:?}: {} scored {}, expected {ws}", n + 1, e.doc_id, e.score))?;
            }
        }
    }
    // Positive rescaling of either side leaves the minmax_sum ranking unchanged.
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let cfg = FusionConfig::default();
    let mut rescaled = 0;
    for _ in 0..200 {
        let list = |prefix: &str, rng: &mut ChaCha8Rng| {
            let n = rng.random_range(1..12);
            let items: Vec<ScoredDoc> = (0..n)
                .map(|i| ScoredDoc::new(format!("{prefix}{i}"), rng.random_range(-5.0..20.0)))
                .collect();
            RankedList::new("q", items).unwrap()
        };
        let (s, d) = (list("d", &mut rng), list("d", &mut rng));
        let base: Vec<String> = fuse(&s, &d, &cfg).unwrap().doc_ids().map(String::from).collect();
        for c in [0.5, 2.0, 3.7, 1e3, 1e-3] {
            for (ss, dd) in [(scale_scores(&s, c), d.clone()), (s.clone(), scale_scores(&d, c))] {
                let got: Vec<String> = fuse(&ss, &dd, &cfg).unwrap().doc_ids().map(String::from).collect();
                ensure(got == base, || format!("rescaling by {c} changed {base:?} to {got:?}"))?;
                rescaled += 1;
            }
        }
    }
    Ok(format!("10 cases x 3 strategies match; {rescaled} rescalings keep the ranking"))
}

// ---------------------------------------------------------------------------

fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for i in 1..=a.len() {
        let mut cur = vec![i; b.len() + 1];
        for j in 1..=b.len() {
            let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
            cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
        }
        prev = cur;
    }
    prev[b.len()]
}

fn words(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

fn attack_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31337);
    let vocab: Vec<String> = (0..60)
        .map(|i| {
            let len = rng.random_range(2..8);
            let w: String = (0..len).map(|_| rng.random_range(b'a'..=b'z') as char).collect();
            format!("{w}{}", ["", "x", "7"][i % 3])
        })
        .collect();
    let lexicon = SynonymLexicon::new(
        vocab.iter().step_by(3).map(|w| (w.clone(), vec![format!("{w}syn"), format!("alt{w}")])),
    )
    .map_err(|e| e.to_string())?;
    let queries: Vec<Query> = (0..500)
        .map(|i| {
            let n = if i % 25 == 0 { 1 } else { rng.random_range(1..8) };
            let ws: Vec<&str> = (0..n).map(|_| vocab.choose(&mut rng).unwrap().as_str()).collect();
            Query::new(format!("q{i:03}"), ws.join(" "))
        })
        .collect();
    let res = AttackResources {
        lexicon: Some(&lexicon),
        translator: Some(&IdentityTranslator),
        ..AttackResources::default()
    };
    let is_syn = |orig: &str, new: &str| lexicon.synonyms(orig).is_some_and(|s| s.iter().any(|x| x == new));
    let mut pass_through: BTreeMap<AttackMethod, usize> = BTreeMap::new();
    for method in AttackMethod::ALL {
        let set = generate_attack_set(&queries, method, 42, &res).map_err(|e| e.to_string())?;
        ensure(set.manifest.errors.is_empty(), || format!("{method}: errors {:?}", set.manifest.errors))?;
        ensure(set.queries.len() == queries.len(), || format!("{method}: incomplete set"))?;
        let mut shuffled = queries.clone();
        shuffled.shuffle(&mut rng);
        let again = generate_attack_set(&shuffled, method, 42, &res).map_err(|e| e.to_string())?;
        ensure(again == set, || format!("{method}: depends on input order"))?;
        let pt: BTreeSet<&str> = set.manifest.pass_through.iter().map(String::as_str).collect();
        pass_through.insert(method, pt.len());
        for (q, a) in queries.iter().zip(&set.queries) {
            ensure(q.id == a.id, || format!("{method}: ids out of order"))?;
            let single = attack(q, method, derive_seed(42, &q.id), &res).map_err(|e| e.to_string())?;
            ensure(single.query == *a, || format!("{method} {}: set and single attack differ", q.id))?;
            let (o, n) = (words(&q.text), words(&a.text));
            let flagged = pt.contains(q.id.as_str());
            if flagged {
                ensure(a.text == q.text, || format!("{method} {}: pass-through changed text", q.id))?;
            }
            let fail = |why: &str| format!("{method} {}: {why}: {:?} -> {:?}", q.id, q.text, a.text);
            match method {
                AttackMethod::WOS => {
                    let (mut x, mut y) = (o.clone(), n.clone());
                    x.sort_unstable();
                    y.sort_unstable();
                    ensure(x == y, || fail("word multiset changed"))?;
                    ensure(flagged == (o.len() == 1), || fail("pass-through flag"))?;
                }
                AttackMethod::WD => {
                    if o.len() == 1 {
                        ensure(flagged, || fail("1-word query not flagged"))?;
                    } else {
                        ensure(!flagged && n.len() == o.len() - 1, || fail("count not reduced by 1"))?;
                        ensure((0..o.len()).any(|i| [&o[..i], &o[i + 1..]].concat() == n), || fail("not a deletion"))?;
                    }
                }
                AttackMethod::CS => {
                    let eligible = o.iter().any(|w| w.chars().count() >= 3 && w.chars().all(char::is_alphabetic));
                    ensure(flagged == !eligible, || fail("pass-through flag"))?;
                    if !flagged {
                        ensure(n.len() == o.len(), || fail("word count changed"))?;
                        let changed: Vec<usize> = (0..o.len()).filter(|&i| o[i] != n[i]).collect();
                        ensure(changed.len() == 1, || fail("not exactly one word changed"))?;
                        ensure(levenshtein(o[changed[0]], n[changed[0]]) == 1, || fail("edit distance != 1"))?;
                    }
                }
                AttackMethod::SR => {
                    ensure(n.len() == o.len(), || fail("word count changed"))?;
                    let eligible = o.iter().any(|w| lexicon.synonyms(w).is_some());
                    ensure(flagged == !eligible, || fail("pass-through flag"))?;
                    if !flagged {
                        let changed: Vec<usize> = (0..o.len()).filter(|&i| o[i] != n[i]).collect();
                        ensure(changed.len() == 1 && is_syn(o[changed[0]], n[changed[0]]), || fail("not a lexicon replacement"))?;
                    }
                }
                AttackMethod::SI => {
                    let eligible = o.iter().any(|w| lexicon.synonyms(w).is_some());
                    ensure(flagged == !eligible, || fail("pass-through flag"))?;
                    if !flagged {
                        ensure(n.len() == o.len() + 1, || fail("count not increased by 1"))?;
                        let ok = (0..n.len()).any(|i| {
                            [&n[..i], &n[i + 1..]].concat() == o && o.iter().any(|w| is_syn(w, n[i]))
                        });
                        ensure(ok, || fail("inserted word is not a lexicon synonym"))?;
                    }
                }
                AttackMethod::BT => {
                    ensure(a.text == q.text && !flagged, || fail("identity round trip changed text"))?;
                }
            }
        }
    }
    Ok(format!("500 queries x 6 methods; pass-through counts {pass_through:?}"))
}

fn average_drop_definition() -> Outcome {
    let d = average_drop(78.8, &[68.2, 71.7, 74.5, 78.3, 77.2, 71.2]).map_err(|e| e.to_string())?;
    within(d, 5.283, 0.001, "average drop")?;
    ensure(average_drop(1.0, &[]).is_err(), || "empty attacked list accepted".into())?;
    Ok(format!("{d:.4}"))
}

// ---------------------------------------------------------------------------

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join("clustered")
}

fn cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_litehybrid"))
        .args(args)
        .current_dir(dir)
        .env_remove("TRANSLATE_ENDPOINT")
        .env_remove("LITEHYBRID_SEED")
        .env_remove("LITEHYBRID_CONFIG")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("{} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr))
    })
}

/// The full pipeline on the bundled fixture; returns every artifact's bytes.
fn pipeline(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let fx = fixture_dir();
    let fx = |name: &str| fx.join(name).to_string_lossy().into_owned();
    let (corpus, queries, qrels, lexicon) = (fx("corpus.jsonl"), fx("queries.tsv"), fx("qrels.tsv"), fx("lexicon.tsv"));
    let seed = ["--seed", "13"];
    let run = |args: &[&str]| cli(dir, &[args, &seed[..]].concat());
    run(&["index-sparse", "--corpus", &corpus, "--out", "sparse"])?;
    run(&["embed", "--corpus", &corpus, "--out", "docs.embv1"])?;
    run(&["embed", "--queries", &queries, "--out", "queries.embv1"])?;
    run(&["import-emb", "--input", "docs.embv1", "--ids-from", &corpus])?;
    let data = [
        "--queries", &queries, "--qrels", &qrels, "--query-emb", "queries.embv1", "--doc-emb", "docs.embv1",
        "--sparse-index", "sparse/bm25.idx",
    ];
    run(&[&["train-weak"], &data[..], &["--dim", "4", "--out", "weak.proj1", "--trace", "weak.csv", "--mining-report", "weak_mining.jsonl"]].concat())?;
    run(&[&["boost"], &data[..], &["--rounds", "2", "--dim", "2", "--out", "boost"]].concat())?;
    run(&[&["train-lite"], &data[..], &["--teacher", "boost/manifest.json", "--dim", "2", "--batch-size", "40", "--out", "lite.proj1", "--trace", "lite.csv"]].concat())?;
    run(&[&["boost"], &data[..], &["--rounds", "2", "--dim", "2", "--from-lite", "lite.proj1", "--out", "boost_lite"]].concat())?;
    run(&["index-dense", "--corpus", &corpus, "--doc-emb", "docs.embv1", "--model", "lite.proj1", "--out", "dense"])?;
    run(&["search", "sparse", "--queries", &queries, "--index", "sparse/bm25.idx", "--out", "sparse.run"])?;
    run(&["search", "dense", "--queries", &queries, "--index", "dense/dense.idx", "--model", "lite.proj1", "--query-emb", "queries.embv1", "--out", "dense.run"])?;
    let hybrid = |q: &str, out: &str| {
        run(&["hybrid-search", "--queries", q, "--sparse-index", "sparse/bm25.idx", "--dense-index", "dense/dense.idx", "--model", "lite.proj1", "--out", out])
    };
    hybrid(&queries, "hybrid.run")?;
    let mut eval = vec![
        "eval".to_string(), "--run".into(), "hybrid.run".into(), "--qrels".into(), qrels.clone(),
        "--baseline".into(), "bm25=sparse.run".into(), "--artifact".into(), "sparse/bm25.idx".into(),
        "--artifact".into(), "dense/dense.idx".into(), "--out".into(), "report.json".into(), "--csv".into(), "report.csv".into(),
    ];
    for m in AttackMethod::ALL {
        let (tsv, manifest, out) = (format!("attack_{m}.tsv"), format!("attack_{m}.json"), format!("hybrid_{m}.run"));
        run(&["attack", "--queries", &queries, "--method", m.code(), "--lexicon", &lexicon, "--translate-endpoint", "identity", "--out", &tsv, "--manifest", &manifest])?;
        hybrid(&tsv, &out)?;
        eval.push("--attacked".into());
        eval.push(format!("{m}={out}"));
    }
    let eval: Vec<&str> = eval.iter().map(String::as_str).collect();
    run(&eval)?;

    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).map_err(|e| e.to_string())? {
            let p = entry.map_err(|e| e.to_string())?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                files.insert(rel, std::fs::read(&p).map_err(|e| e.to_string())?);
            }
        }
    }
    Ok(files)
}

fn end_to_end_determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let fa = pipeline(a.path())?;
    let fb = pipeline(b.path())?;
    ensure(fa.keys().eq(fb.keys()), || "runs produced different file sets".into())?;
    for (name, bytes) in &fa {
        ensure(fb[name] == *bytes, || format!("{name} differs between runs"))?;
    }
    let report: serde_json::Value = serde_json::from_slice(&fa["report.json"]).map_err(|e| e.to_string())?;
    for field in ["recall", "attacks", "retention", "metadata"] {
        ensure(report[field].as_object().is_some_and(|o| !o.is_empty()), || format!("report field {field} empty"))?;
    }
    ensure(report["average_drop"].is_number(), || "average_drop missing".into())?;
    ensure(report["attacks"].as_object().unwrap().len() == 6, || "not all attacks reported".into())?;
    let expected = [
        "sparse/bm25.idx", "dense/dense.idx", "weak.proj1", "lite.proj1", "boost/manifest.json", "boost_lite/manifest.json",
        "hybrid.run", "sparse.run", "dense.run", "report.json",
    ];
    for f in expected {
        ensure(fa.contains_key(f), || format!("{f} not produced"))?;
    }
    Ok(format!("{} artifacts byte-identical across two runs; report fully populated", fa.len()))
}
