//! Small deterministic fixtures built from pseudo-words.

use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attack::SynonymLexicon;
use crate::encoder::EmbeddingMatrix;
use crate::model::{Document, Qrels, Query};

const ONSETS: &[&str] = &[
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "kr", "st", "tr",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];

/// `n` distinct pseudo-words of two or three syllables.
pub fn pseudo_words(n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    let mut seen = std::collections::HashSet::new();
    while out.len() < n {
        let syllables = rng.random_range(2..=3);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(ONSETS.choose(rng).expect("non-empty"));
            w.push_str(VOWELS.choose(rng).expect("non-empty"));
        }
        if seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub corpus: Vec<Document>,
    pub queries: Vec<Query>,
    pub qrels: Qrels,
    pub lexicon: SynonymLexicon,
}

pub const CLUSTERS: usize = 8;
pub const DOCS_PER_CLUSTER: usize = 25;
pub const TRAIN_QUERIES: usize = 40;

/// 8 topical clusters of 25 docs and 40 training queries, each with one
/// relevant doc. Docs mix cluster topic words, cluster detail words and
/// global filler; a query takes a few of its target's words plus filler.
pub fn clustered_fixture() -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(0x005e_edc1_u64);
    let vocab = pseudo_words(CLUSTERS * 24 + 60 + 40, &mut rng);
    let (cluster_vocab, rest) = vocab.split_at(CLUSTERS * 24);
    let (filler, synonyms) = rest.split_at(60);
    let topic = |c: usize| &cluster_vocab[c * 24..c * 24 + 8];
    let detail = |c: usize| &cluster_vocab[c * 24 + 8..c * 24 + 24];

    let mut corpus = Vec::new();
    for c in 0..CLUSTERS {
        for j in 0..DOCS_PER_CLUSTER {
            let mut words: Vec<&str> = Vec::new();
            words.extend(topic(c).choose_multiple(&mut rng, 3).map(String::as_str));
            words.extend(detail(c).choose_multiple(&mut rng, 4).map(String::as_str));
            words.extend(filler.choose_multiple(&mut rng, 5).map(String::as_str));
            words.shuffle(&mut rng);
            let title = topic(c)[j % 8].clone();
            corpus.push(Document::new(format!("c{c}d{j:02}"), title, words.join(" ")));
        }
    }

    let mut queries = Vec::new();
    let mut qrels = Qrels::new();
    let per_cluster = TRAIN_QUERIES / CLUSTERS;
    for c in 0..CLUSTERS {
        let targets: Vec<usize> = (0..DOCS_PER_CLUSTER).collect();
        for (n, &j) in targets.choose_multiple(&mut rng, per_cluster).enumerate() {
            let doc = &corpus[c * DOCS_PER_CLUSTER + j];
            let doc_words: Vec<&str> = doc.text.split(' ').collect();
            let own_detail: Vec<&str> = doc_words
                .iter()
                .copied()
                .filter(|w| detail(c).iter().any(|d| d == w))
                .collect();
            let mut words: Vec<&str> = own_detail.choose_multiple(&mut rng, 2).copied().collect();
            words.push(topic(c).choose(&mut rng).expect("non-empty"));
            words.push(filler.choose(&mut rng).expect("non-empty"));
            words.shuffle(&mut rng);
            let qid = format!("q{c}{n}");
            queries.push(Query::new(qid.clone(), words.join(" ")));
            qrels.insert(qid, doc.id.clone());
        }
    }

    let mut entries = Vec::new();
    for (i, syn) in synonyms.iter().enumerate() {
        let word = &cluster_vocab[(i * 5) % cluster_vocab.len()];
        entries.push((word.clone(), vec![syn.clone()]));
    }
    let lexicon = SynonymLexicon::new(entries).expect("pseudo-words are distinct lowercase");

    Fixture {
        corpus,
        queries,
        qrels,
        lexicon,
    }
}

/// A corpus where some queries are only solvable lexically and others only
/// through hand-set dense vectors.
#[derive(Debug, Clone)]
pub struct ComplementaryFixture {
    pub corpus: Vec<Document>,
    pub queries: Vec<Query>,
    pub qrels: Qrels,
    pub doc_vectors: EmbeddingMatrix,
    pub query_vectors: EmbeddingMatrix,
    pub sparse_only: Vec<String>,
    pub dense_only: Vec<String>,
}

pub const COMPLEMENTARY_DIM: usize = 8;

/// 30 docs. Sparse-only queries name a code word found in exactly one doc and
/// have a query vector pointing away from it. Dense-only queries use words
/// absent from the corpus and a query vector equal to their target's vector.
pub fn complementary_fixture() -> ComplementaryFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0_ffee);
    let vocab = pseudo_words(60, &mut rng);
    let (shared, unseen) = vocab.split_at(40);
    let n_docs = 30;
    let dim = COMPLEMENTARY_DIM;

    let mut corpus = Vec::new();
    let mut doc_rows: Vec<(String, Vec<f32>)> = Vec::new();
    for i in 0..n_docs {
        let mut words: Vec<&str> = shared[..30].choose_multiple(&mut rng, 6).map(String::as_str).collect();
        let code = format!("code{i:02}");
        words.push(&code);
        let id = format!("d{i:02}");
        corpus.push(Document::new(id.clone(), "", words.join(" ")));
        let mut v: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        doc_rows.push((id, v));
    }

    let mut queries = Vec::new();
    let mut qrels = Qrels::new();
    let mut query_rows = Vec::new();
    let mut sparse_only = Vec::new();
    let mut dense_only = Vec::new();
    for t in 0..6 {
        let target = t * 5;
        let qid = format!("s{t}");
        queries.push(Query::new(qid.clone(), format!("code{target:02}")));
        qrels.insert(qid.clone(), doc_rows[target].0.clone());
        let away: Vec<f32> = doc_rows[target].1.iter().map(|x| -x).collect();
        query_rows.push((qid.clone(), away));
        sparse_only.push(qid);
    }
    for t in 0..6 {
        let target = t * 5 + 2;
        let qid = format!("v{t}");
        let text: Vec<&str> = unseen.choose_multiple(&mut rng, 3).map(String::as_str).collect();
        queries.push(Query::new(qid.clone(), text.join(" ")));
        qrels.insert(qid.clone(), doc_rows[target].0.clone());
        query_rows.push((qid.clone(), doc_rows[target].1.clone()));
        dense_only.push(qid);
    }

    let rows_to_matrix = |rows: Vec<(String, Vec<f32>)>| {
        let (ids, vecs): (Vec<String>, Vec<Vec<f32>>) = rows.into_iter().unzip();
        EmbeddingMatrix::new(ids, dim, vecs.concat()).expect("well-formed rows")
    };
    ComplementaryFixture {
        corpus,
        queries,
        qrels,
        doc_vectors: rows_to_matrix(doc_rows),
        query_vectors: rows_to_matrix(query_rows),
        sparse_only,
        dense_only,
    }
}

/// Word counts of a fixture's queries, for quick sanity checks.
pub fn query_length_histogram(queries: &[Query]) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for q in queries {
        *h.entry(q.text.split_whitespace().count()).or_insert(0) += 1;
    }
    h
}
