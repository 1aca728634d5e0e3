//! `litehybrid` command line.
//!
//! Every flag can also come from an environment variable where one is listed,
//! or from a `--config` file of `key=value` lines naming long flags. A flag
//! on the command line wins over its environment variable, which wins over
//! the config file.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use crate::attack::{
    generate_attack_set, AttackMethod, AttackResources, CharSwapMode, HttpTranslator,
    IdentityTranslator, SynonymLexicon, TranslationProvider, WordOrderMode,
};
use crate::bm25::{Bm25Index, Bm25Params};
use crate::boost::{boost_from_lite, train_drboost, BoostConfig, Ensemble, DEFAULT_MINE_K};
use crate::dense::{memory_model, DenseIndex, DenseRetriever, MemoryScenario, QuerySource};
use crate::encoder::{encode_corpus, encode_queries, import_embeddings, EmbeddingMatrix, DEFAULT_DIM};
use crate::eval::{evaluate_run, EvalOptions};
use crate::fusion::{hybrid_search, FusionConfig, FusionStrategy};
use crate::model::{
    corpus_fingerprint, load_corpus, load_qrels, load_queries, save_corpus, save_qrels, save_queries,
    save_run, Query, RankedList, Searcher,
};
use crate::synth::clustered_fixture;
use crate::train::{
    examples_from_qrels, mine_hard_negatives, train_lite, train_weak_learner, BaseVectors, DualEncoder,
    HeadKind, KdContexts, LiteModel, MiningReport, OptimizerKind, TrainConfig, WeakLearner,
};

#[derive(Parser, Debug)]
#[command(name = "litehybrid", version, about = "Hybrid sparse/dense retrieval toolkit")]
pub struct Cli {
    /// Seed for every random choice [env: LITEHYBRID_SEED]
    #[arg(long, global = true, env = "LITEHYBRID_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; defaults to the machine's parallelism [env: LITEHYBRID_THREADS]
    #[arg(long, global = true, env = "LITEHYBRID_THREADS")]
    pub threads: Option<usize>,
    /// `key=value` file of default flag values [env: LITEHYBRID_CONFIG]
    #[arg(long, global = true, env = "LITEHYBRID_CONFIG")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write the bundled clustered fixture (corpus, queries, qrels, lexicon).
    GenFixture {
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a BM25 index; writes `<out>/bm25.idx`.
    IndexSparse {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1.2)]
        k1: f64,
        #[arg(long, default_value_t = 0.75)]
        b: f64,
    },
    /// Encode a corpus or query file with the hashing encoder into EMBV1.
    Embed {
        #[arg(long, conflicts_with = "queries", required_unless_present = "queries")]
        corpus: Option<PathBuf>,
        #[arg(long)]
        queries: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_DIM)]
        dim: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate an EMBV1 file, optionally against the ids of a corpus or query file.
    ImportEmb {
        #[arg(long)]
        input: PathBuf,
        /// Corpus (.jsonl) or query (.tsv) file whose ids must match in order
        #[arg(long)]
        ids_from: Option<PathBuf>,
        /// Re-serialized copy of the validated matrix
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one weak learner on BM25-mined negatives.
    TrainWeak {
        #[command(flatten)]
        data: TrainData,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long, default_value_t = 8)]
        dim: usize,
        #[arg(long)]
        out: PathBuf,
        /// Loss trace CSV
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Mining report JSON lines
        #[arg(long)]
        mining_report: Option<PathBuf>,
    },
    /// Train a LITE model (small retrieval head + large distillation head) against a teacher ensemble.
    TrainLite {
        #[command(flatten)]
        data: TrainData,
        #[command(flatten)]
        train: TrainArgs,
        /// Teacher ensemble manifest
        #[arg(long)]
        teacher: PathBuf,
        #[arg(long, default_value_t = 8)]
        dim: usize,
        #[arg(long, value_enum, default_value_t = KdContextArg::PositiveAndHard)]
        kd_contexts: KdContextArg,
        #[arg(long, default_value_t = 1.0)]
        con_weight: f64,
        #[arg(long, default_value_t = 1.0)]
        kd_weight: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Train a boosted ensemble; writes the manifest, learners, traces and mining report into `<out>`.
    Boost {
        #[command(flatten)]
        data: TrainData,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long, default_value_t = 2)]
        rounds: usize,
        /// Output dimension of each learner
        #[arg(long, default_value_t = 8)]
        dim: usize,
        #[arg(long, default_value_t = DEFAULT_MINE_K)]
        mine_k: usize,
        /// Start from this LITE model's small head instead of a BM25-mined first round
        #[arg(long)]
        from_lite: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Encode documents with a trained model; writes `<out>/dense.idx`.
    IndexDense {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        doc_emb: PathBuf,
        /// PROJ1 file (weak learner or LITE) or ensemble manifest
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Retrieve with one index and write a TREC run file.
    Search {
        #[arg(value_enum)]
        kind: SearchKind,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        index: PathBuf,
        #[command(flatten)]
        dense: DenseQueryArgs,
        #[arg(short, long, default_value_t = 100)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fuse sparse and dense retrieval and write a TREC run file.
    HybridSearch {
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        sparse_index: PathBuf,
        #[arg(long)]
        dense_index: PathBuf,
        #[command(flatten)]
        dense: DenseQueryArgs,
        #[arg(long, default_value_t = 0.5)]
        w1: f64,
        #[arg(long, default_value_t = 0.5)]
        w2: f64,
        #[arg(long, default_value = "minmax_sum")]
        strategy: String,
        /// Candidates taken from each list and kept after fusion
        #[arg(short, long, default_value_t = 100)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Perturb a query set; writes the perturbed TSV and a JSON manifest.
    Attack {
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        method: AttackMethod,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Translation service URL, or `identity` [env: TRANSLATE_ENDPOINT]
        #[arg(long, env = "TRANSLATE_ENDPOINT")]
        translate_endpoint: Option<String>,
        #[arg(long, default_value = "en")]
        source_lang: String,
        #[arg(long, default_value = "de")]
        pivot_lang: String,
        #[arg(long, default_value_t = 4)]
        max_in_flight: usize,
        #[arg(long, value_enum, default_value_t = CharSwapArg::Substitute)]
        char_swap: CharSwapArg,
        #[arg(long, value_enum, default_value_t = WordOrderArg::Shuffle)]
        word_order: WordOrderArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Compute Recall@K, drops and retention into a JSON report.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [5usize, 10, 20, 100])]
        ks: Vec<usize>,
        /// k used for drops and retention
        #[arg(long, default_value_t = 100)]
        report_k: usize,
        /// NAME=RUN_FILE of a run on attacked queries
        #[arg(long, value_parser = parse_named_path)]
        attacked: Vec<(String, PathBuf)>,
        /// NAME=RUN_FILE of a baseline for retention
        #[arg(long, value_parser = parse_named_path)]
        baseline: Vec<(String, PathBuf)>,
        /// Index or model file whose size and checksum go in the metadata
        #[arg(long)]
        artifact: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Summary table
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Hybrid index memory totals and savings ratios.
    MemoryReport {
        /// NAME=GB; defaults to the reference sizes when none are given
        #[arg(long, value_parser = parse_named_f64)]
        component: Vec<(String, f64)>,
        /// NAME=INDEX_FILE, sized from the file on disk
        #[arg(long, value_parser = parse_named_path)]
        index: Vec<(String, PathBuf)>,
        /// SPARSE+DENSE hybrid to report
        #[arg(long)]
        pair: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
pub struct TrainData {
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    qrels: PathBuf,
    #[arg(long)]
    query_emb: PathBuf,
    #[arg(long)]
    doc_emb: PathBuf,
    /// BM25 index used to mine hard negatives
    #[arg(long)]
    sparse_index: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 200)]
    steps: usize,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 4)]
    negatives: usize,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Adam)]
    optimizer: OptimizerArg,
}

#[derive(Args, Debug)]
pub struct DenseQueryArgs {
    /// Model for the dense side
    #[arg(long)]
    model: Option<PathBuf>,
    /// Precomputed query base vectors; without it queries are hashed on the fly
    #[arg(long)]
    query_emb: Option<PathBuf>,
    /// Seed of the hashing encoder used for on-the-fly queries
    #[arg(long, default_value_t = 0)]
    embed_seed: u64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SearchKind {
    Sparse,
    Dense,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum OptimizerArg {
    Adam,
    Sgd,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum KdContextArg {
    Positive,
    PositiveAndHard,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum CharSwapArg {
    Substitute,
    Adjacent,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum WordOrderArg {
    Shuffle,
    Adjacent,
}

fn parse_named_path(s: &str) -> Result<(String, PathBuf), String> {
    let (name, path) = s.split_once('=').ok_or("expected NAME=PATH")?;
    Ok((name.to_string(), PathBuf::from(path)))
}

fn parse_named_f64(s: &str) -> Result<(String, f64), String> {
    let (name, v) = s.split_once('=').ok_or("expected NAME=VALUE")?;
    let v = v.parse::<f64>().map_err(|e| e.to_string())?;
    Ok((name.to_string(), v))
}

/// Runs the CLI and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let argv = match apply_config_file(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return 2;
        }
    };
    let cli = match Cli::command()
        .try_get_matches_from(argv)
        .and_then(|m| Cli::from_arg_matches(&m))
    {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

/// Appends `--key value` for config entries whose flag is neither on the
/// command line nor set through its environment variable.
fn apply_config_file(mut argv: Vec<OsString>) -> anyhow::Result<Vec<OsString>> {
    let strs: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let path = strs
        .iter()
        .position(|a| a == "--config")
        .and_then(|i| strs.get(i + 1).cloned())
        .or_else(|| strs.iter().find_map(|a| a.strip_prefix("--config=").map(str::to_string)))
        .or_else(|| std::env::var("LITEHYBRID_CONFIG").ok());
    let Some(path) = path else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading config {path}"))?;
    let cmd = Cli::command();
    let sub = strs
        .iter()
        .skip(1)
        .find_map(|a| cmd.get_subcommands().find(|s| s.get_name() == a));
    let known: Vec<&clap::Arg> = cmd
        .get_arguments()
        .chain(sub.into_iter().flat_map(|s| s.get_arguments()))
        .collect();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .with_context(|| format!("{path}:{}: expected key=value", lineno + 1))?;
        let (key, value) = (key.trim(), value.trim());
        let Some(arg) = known.iter().find(|a| a.get_long() == Some(key)) else {
            continue;
        };
        let flag = format!("--{key}");
        if strs.iter().any(|a| *a == flag || a.starts_with(&format!("{flag}="))) {
            continue;
        }
        if arg.get_env().is_some_and(|v| std::env::var_os(v).is_some()) {
            continue;
        }
        if arg.get_action().takes_values() {
            argv.push(flag.into());
            argv.push(value.into());
        } else if value == "true" {
            argv.push(flag.into());
        }
    }
    Ok(argv)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build()?;
    pool.install(|| dispatch(cli.command, cli.seed))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
    Ok(())
}

fn require_file(path: &Path) -> anyhow::Result<()> {
    if !path.is_file() {
        bail!("input file {} does not exist", path.display());
    }
    Ok(())
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json value"));
}

fn train_config(args: &TrainArgs, seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: args.lr,
        batch_size: args.batch_size,
        steps: args.steps,
        seed,
        num_hard_negatives: args.negatives,
        optimizer: match args.optimizer {
            OptimizerArg::Adam => OptimizerKind::default(),
            OptimizerArg::Sgd => OptimizerKind::Sgd,
        },
        ..TrainConfig::default()
    }
}

struct LoadedData {
    queries: Vec<Query>,
    qrels: crate::model::Qrels,
    base: BaseVectors,
    bm25: Bm25Index,
}

fn load_train_data(d: &TrainData) -> anyhow::Result<LoadedData> {
    for p in [&d.queries, &d.qrels, &d.query_emb, &d.doc_emb, &d.sparse_index] {
        require_file(p)?;
    }
    let base = BaseVectors::new(import_embeddings(&d.query_emb)?, import_embeddings(&d.doc_emb)?)?;
    Ok(LoadedData {
        queries: load_queries(&d.queries)?,
        qrels: load_qrels(&d.qrels)?,
        base,
        bm25: Bm25Index::load(&d.sparse_index)?,
    })
}

/// A model file: PROJ1 (weak learner or LITE) or an ensemble manifest.
fn load_encoder(path: &Path) -> anyhow::Result<Box<dyn DualEncoder>> {
    require_file(path)?;
    if path.extension().is_some_and(|e| e == "json") {
        return Ok(Box::new(Ensemble::load(path)?));
    }
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(lite) = LiteModel::from_bytes(&bytes) {
        return Ok(Box::new(lite));
    }
    let (learner, _) = WeakLearner::from_bytes(&bytes).with_context(|| format!("loading {}", path.display()))?;
    Ok(Box::new(learner))
}

fn mined_examples(
    data: &LoadedData,
    k: usize,
    m: usize,
) -> anyhow::Result<(Vec<crate::train::TrainExample>, MiningReport)> {
    let examples = examples_from_qrels(&data.queries, &data.qrels);
    Ok(mine_hard_negatives(&data.bm25, &examples, &data.qrels, k, m, 1)?)
}

fn dispatch(cmd: Command, seed: u64) -> anyhow::Result<()> {
    match cmd {
        Command::GenFixture { out } => {
            let f = clustered_fixture();
            std::fs::create_dir_all(&out)?;
            save_corpus(out.join("corpus.jsonl"), &f.corpus)?;
            save_queries(out.join("queries.tsv"), &f.queries)?;
            save_qrels(out.join("qrels.tsv"), &f.qrels)?;
            let lex: String = f
                .lexicon
                .iter()
                .map(|(w, syns)| format!("{w}\t{}\n", syns.join("\t")))
                .collect();
            write_atomic(&out.join("lexicon.tsv"), lex.as_bytes())?;
        }
        Command::IndexSparse { corpus, out, k1, b } => {
            require_file(&corpus)?;
            let docs = load_corpus(&corpus)?;
            let index = Bm25Index::build(&docs, Bm25Params::new(k1, b)?)?;
            write_atomic(&out.join("bm25.idx"), &index.to_bytes())?;
            print_json(&serde_json::json!({
                "docs": index.num_docs(),
                "terms": index.num_terms(),
                "postings_bytes": index.postings_bytes(),
            }));
        }
        Command::Embed { corpus, queries, dim, out } => {
            let matrix = match (corpus, queries) {
                (Some(c), _) => {
                    require_file(&c)?;
                    encode_corpus(&load_corpus(&c)?, dim, seed)?
                }
                (None, Some(q)) => {
                    require_file(&q)?;
                    encode_queries(&load_queries(&q)?, dim, seed)?
                }
                (None, None) => bail!("one of --corpus or --queries is required"),
            };
            write_atomic(&out, &matrix.to_bytes()?)?;
        }
        Command::ImportEmb { input, ids_from, out } => {
            require_file(&input)?;
            let matrix = import_embeddings(&input)?;
            if let Some(src) = ids_from {
                require_file(&src)?;
                let ids: Vec<String> = if src.extension().is_some_and(|e| e == "jsonl") {
                    load_corpus(&src)?.into_iter().map(|d| d.id).collect()
                } else {
                    load_queries(&src)?.into_iter().map(|q| q.id).collect()
                };
                if ids != matrix.ids() {
                    bail!("ids in {} do not match {} in order", input.display(), src.display());
                }
            }
            if let Some(out) = out {
                write_atomic(&out, &matrix.to_bytes()?)?;
            }
            print_json(&serde_json::json!({ "count": matrix.count(), "dim": matrix.dim() }));
        }
        Command::TrainWeak { data, train, dim, out, trace, mining_report } => {
            let data = load_train_data(&data)?;
            let cfg = train_config(&train, seed);
            let (examples, report) = mined_examples(&data, DEFAULT_MINE_K, cfg.num_hard_negatives)?;
            let trained = train_weak_learner(&examples, &data.base, dim, &cfg)?;
            write_atomic(&out, &trained.model.to_bytes(HeadKind::Weak))?;
            if let Some(p) = trace {
                write_atomic(&p, trained.trace.to_csv().as_bytes())?;
            }
            if let Some(p) = mining_report {
                write_atomic(&p, report.to_jsonl()?.as_bytes())?;
            }
        }
        Command::TrainLite {
            data,
            train,
            teacher,
            dim,
            kd_contexts,
            con_weight,
            kd_weight,
            out,
            trace,
        } => {
            let data = load_train_data(&data)?;
            require_file(&teacher)?;
            let teacher = Ensemble::load(&teacher)?;
            let cfg = TrainConfig {
                con_weight,
                kd_weight,
                kd_contexts: match kd_contexts {
                    KdContextArg::Positive => KdContexts::Positive,
                    KdContextArg::PositiveAndHard => KdContexts::PositiveAndHardNegatives,
                },
                ..train_config(&train, seed)
            };
            let (examples, _) = mined_examples(&data, DEFAULT_MINE_K, cfg.num_hard_negatives)?;
            let trained = train_lite(&examples, &data.base, &teacher, dim, &cfg)?;
            write_atomic(&out, &trained.model.to_bytes())?;
            if let Some(p) = trace {
                write_atomic(&p, trained.trace.to_csv().as_bytes())?;
            }
        }
        Command::Boost { data, train, rounds, dim, mine_k, from_lite, out } => {
            let data = load_train_data(&data)?;
            let cfg = BoostConfig {
                rounds,
                dim,
                train: train_config(&train, seed),
                mine_k,
            };
            let examples = examples_from_qrels(&data.queries, &data.qrels);
            let output = match from_lite {
                Some(p) => {
                    require_file(&p)?;
                    let lite = LiteModel::load(&p)?;
                    boost_from_lite(&lite, &examples, &data.base, &data.qrels, &cfg)?
                }
                None => train_drboost(&examples, &data.base, &data.qrels, &cfg, &data.bm25)?,
            };
            std::fs::create_dir_all(&out)?;
            output.ensemble.save(&out)?;
            for (i, trace) in output.traces.iter().enumerate() {
                if !trace.rows.is_empty() {
                    write_atomic(&out.join(format!("trace_round_{}.csv", i + 1)), trace.to_csv().as_bytes())?;
                }
            }
            write_atomic(&out.join("mining.jsonl"), output.mining.to_jsonl()?.as_bytes())?;
        }
        Command::IndexDense { corpus, doc_emb, model, out } => {
            require_file(&corpus)?;
            require_file(&doc_emb)?;
            let docs = load_corpus(&corpus)?;
            let base = import_embeddings(&doc_emb)?;
            let mut corpus_ids: Vec<&str> = docs.iter().map(|d| d.id.as_str()).collect();
            let mut emb_ids: Vec<&str> = base.ids().iter().map(String::as_str).collect();
            corpus_ids.sort_unstable();
            emb_ids.sort_unstable();
            if corpus_ids != emb_ids {
                bail!("corpus mismatch: {} and {} hold different ids", corpus.display(), doc_emb.display());
            }
            let encoder = load_encoder(&model)?;
            let index = DenseIndex::build(encoder.as_ref(), &base)?.with_corpus_hash(corpus_fingerprint(&docs));
            write_atomic(&out.join("dense.idx"), &index.to_bytes()?)?;
            print_json(&serde_json::json!({
                "docs": index.count(),
                "dim": index.dim(),
                "memory_bytes": index.memory_bytes(),
            }));
        }
        Command::Search { kind, queries, index, dense, k, out } => {
            require_file(&queries)?;
            require_file(&index)?;
            let qs = load_queries(&queries)?;
            let run = match kind {
                SearchKind::Sparse => {
                    let idx = Bm25Index::load(&index)?;
                    search_all(&idx, &qs, k)?
                }
                SearchKind::Dense => {
                    let idx = DenseIndex::load(&index)?;
                    with_dense(&idx, &dense, |r| search_all(r, &qs, k))?
                }
            };
            write_atomic_run(&out, &run, kind_tag(kind))?;
        }
        Command::HybridSearch {
            queries,
            sparse_index,
            dense_index,
            dense,
            w1,
            w2,
            strategy,
            k,
            out,
        } => {
            for p in [&queries, &sparse_index, &dense_index] {
                require_file(p)?;
            }
            let qs = load_queries(&queries)?;
            let sparse = Bm25Index::load(&sparse_index)?;
            let dense_idx = DenseIndex::load(&dense_index)?;
            if sparse.corpus_hash() != dense_idx.corpus_hash() {
                bail!(
                    "corpus mismatch: sparse index {} vs dense index {}",
                    hex::encode(sparse.corpus_hash()),
                    hex::encode(dense_idx.corpus_hash())
                );
            }
            let cfg = FusionConfig {
                w1,
                w2,
                strategy: strategy.parse::<FusionStrategy>()?,
                k_candidates: k,
            };
            let run = with_dense(&dense_idx, &dense, |d| {
                qs.iter()
                    .map(|q| Ok(hybrid_search(q, &sparse, d, &cfg)?))
                    .collect::<anyhow::Result<Vec<_>>>()
            })?;
            write_atomic_run(&out, &run, "hybrid")?;
        }
        Command::Attack {
            queries,
            method,
            lexicon,
            translate_endpoint,
            source_lang,
            pivot_lang,
            max_in_flight,
            char_swap,
            word_order,
            out,
            manifest,
        } => {
            require_file(&queries)?;
            let qs = load_queries(&queries)?;
            let lexicon = match lexicon {
                Some(p) => {
                    require_file(&p)?;
                    Some(SynonymLexicon::load(&p)?)
                }
                None => None,
            };
            let translator: Option<Box<dyn TranslationProvider>> = match translate_endpoint.as_deref() {
                None => None,
                Some("identity") => Some(Box::new(IdentityTranslator)),
                Some(url) => Some(Box::new(HttpTranslator::new(url))),
            };
            let res = AttackResources {
                lexicon: lexicon.as_ref(),
                translator: translator.as_deref(),
                source_lang: &source_lang,
                pivot_lang: &pivot_lang,
                char_swap: match char_swap {
                    CharSwapArg::Substitute => CharSwapMode::Substitute,
                    CharSwapArg::Adjacent => CharSwapMode::AdjacentSwap,
                },
                word_order: match word_order {
                    WordOrderArg::Shuffle => WordOrderMode::Shuffle,
                    WordOrderArg::Adjacent => WordOrderMode::AdjacentSwap,
                },
                max_in_flight,
            };
            let set = generate_attack_set(&qs, method, seed, &res)?;
            save_queries_atomic(&out, &set.queries)?;
            let mut json = serde_json::to_string_pretty(&set.manifest)?;
            json.push('\n');
            write_atomic(&manifest, json.as_bytes())?;
            if !set.manifest.errors.is_empty() {
                eprintln!("{} queries failed; see {}", set.manifest.errors.len(), manifest.display());
            }
        }
        Command::Eval {
            run,
            qrels,
            ks,
            report_k,
            attacked,
            baseline,
            artifact,
            out,
            csv,
        } => {
            require_file(&run)?;
            require_file(&qrels)?;
            for (_, p) in attacked.iter().chain(&baseline) {
                require_file(p)?;
            }
            let mut metadata = BTreeMap::new();
            for p in &artifact {
                require_file(p)?;
                let bytes = std::fs::read(p)?;
                let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                metadata.insert(format!("bytes:{name}"), bytes.len().to_string());
                metadata.insert(format!("sha256:{name}"), hex::encode(Sha256::digest(&bytes)));
                if let Ok(idx) = DenseIndex::from_bytes(&bytes) {
                    metadata.insert(format!("dense_vector_bytes:{name}"), idx.memory_bytes().to_string());
                } else if let Ok(idx) = Bm25Index::from_bytes(&bytes) {
                    metadata.insert(format!("postings_bytes:{name}"), idx.postings_bytes().to_string());
                }
            }
            let opts = EvalOptions {
                ks,
                report_k,
                attacked: attacked.into_iter().collect(),
                baselines: baseline.into_iter().collect(),
                metadata,
            };
            let report = evaluate_run(&run, &load_qrels(&qrels)?, &opts)?;
            write_atomic(&out, report.to_json().as_bytes())?;
            if let Some(p) = csv {
                write_atomic(&p, report.to_csv().as_bytes())?;
            }
        }
        Command::MemoryReport { component, index, pair, out } => {
            let mut components: Vec<(String, f64)> = component;
            for (name, path) in index {
                let len = std::fs::metadata(&path)
                    .with_context(|| format!("reading {}", path.display()))?
                    .len();
                components.push((name, len as f64 / 1e9));
            }
            if components.is_empty() {
                components = [("BM25", 2.4), ("LITE", 2.5), ("DPR", 61.5), ("DrBoost-2", 5.1)]
                    .into_iter()
                    .map(|(n, g)| (n.to_string(), g))
                    .collect();
            }
            let pairs: Vec<(String, String)> = if pair.is_empty() {
                let mut names = components.iter().map(|(n, _)| n.clone());
                let sparse = names.next().context("no components")?;
                names.map(|d| (sparse.clone(), d)).collect()
            } else {
                pair.iter()
                    .map(|p| {
                        p.split_once('+')
                            .map(|(s, d)| (s.to_string(), d.to_string()))
                            .with_context(|| format!("pair {p:?} must be SPARSE+DENSE"))
                    })
                    .collect::<anyhow::Result<_>>()?
            };
            let report = memory_model(&MemoryScenario::new(components)?, &pairs)?;
            let mut json = serde_json::to_string_pretty(&report)?;
            json.push('\n');
            match out {
                Some(p) => write_atomic(&p, json.as_bytes())?,
                None => print!("{json}"),
            }
        }
    }
    Ok(())
}

fn kind_tag(kind: SearchKind) -> &'static str {
    match kind {
        SearchKind::Sparse => "bm25",
        SearchKind::Dense => "dense",
    }
}

fn search_all(searcher: &dyn Searcher, queries: &[Query], k: usize) -> anyhow::Result<Vec<RankedList>> {
    queries
        .iter()
        .map(|q| Ok(searcher.search(q, k)?))
        .collect()
}

fn with_dense<T>(
    index: &DenseIndex,
    args: &DenseQueryArgs,
    f: impl FnOnce(&DenseRetriever<'_>) -> anyhow::Result<T>,
) -> anyhow::Result<T> {
    let model = args.model.as_ref().context("dense retrieval needs --model")?;
    let encoder = load_encoder(model)?;
    if encoder.fingerprint() != index.encoder_hash() {
        bail!("model {} did not build this dense index", model.display());
    }
    let matrix: Option<EmbeddingMatrix> = match &args.query_emb {
        Some(p) => {
            require_file(p)?;
            Some(import_embeddings(p)?)
        }
        None => None,
    };
    let source = match &matrix {
        Some(m) => QuerySource::Matrix(m),
        None => QuerySource::Hashing {
            dim: encoder.input_dim(),
            seed: args.embed_seed,
        },
    };
    let retriever = DenseRetriever::new(encoder.as_ref(), index, source, "dense")?;
    f(&retriever)
}

fn write_atomic_run(path: &Path, run: &[RankedList], tag: &str) -> anyhow::Result<()> {
    let tmp = tmp_path(path);
    save_run(&tmp, run, tag)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn save_queries_atomic(path: &Path, queries: &[Query]) -> anyhow::Result<()> {
    let tmp = tmp_path(path);
    save_queries(&tmp, queries)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn tmp_path(path: &Path) -> PathBuf {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        let _ = std::fs::create_dir_all(parent);
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    PathBuf::from(tmp)
}
