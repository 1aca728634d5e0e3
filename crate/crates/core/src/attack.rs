//! Seeded query perturbations for robustness evaluation.
//!
//! | code | perturbation |
//! |------|--------------|
//! | CS   | one character of one word replaced by a different lowercase letter |
//! | WD   | one word deleted |
//! | SR   | one word replaced by a lexicon synonym |
//! | WOS  | words permuted (never the identity) |
//! | SI   | a lexicon synonym of one word inserted at a random position |
//! | BT   | round trip through a translation provider |
//!
//! Words are whitespace-separated tokens. Each query gets its own RNG seeded
//! from `(seed, query_id)`, so a perturbed set does not depend on input order.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Duration;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::Query;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AttackMethod {
    CS,
    WD,
    SR,
    WOS,
    SI,
    BT,
}

impl AttackMethod {
    pub const ALL: [AttackMethod; 6] = [
        AttackMethod::CS,
        AttackMethod::WD,
        AttackMethod::SR,
        AttackMethod::WOS,
        AttackMethod::SI,
        AttackMethod::BT,
    ];

    pub fn code(self) -> &'static str {
        match self {
            AttackMethod::CS => "CS",
            AttackMethod::WD => "WD",
            AttackMethod::SR => "SR",
            AttackMethod::WOS => "WOS",
            AttackMethod::SI => "SI",
            AttackMethod::BT => "BT",
        }
    }
}

impl fmt::Display for AttackMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for AttackMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AttackMethod::ALL
            .into_iter()
            .find(|m| m.code().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown attack method {s:?}")))
    }
}

/// word -> synonyms, all lowercase.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynonymLexicon {
    entries: BTreeMap<String, Vec<String>>,
}

impl SynonymLexicon {
    /// Self-synonyms are dropped; a word left with no synonyms is an error.
    pub fn new(entries: impl IntoIterator<Item = (String, Vec<String>)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (word, syns) in entries {
            let check = |w: &str| -> Result<()> {
                if w.is_empty() || w.chars().any(char::is_whitespace) {
                    return Err(Error::Config(format!("lexicon entry {w:?} must be a single word")));
                }
                if w.chars().any(char::is_uppercase) {
                    return Err(Error::Config(format!("lexicon entry {w:?} is not lowercase")));
                }
                Ok(())
            };
            check(&word)?;
            let mut kept: Vec<String> = Vec::new();
            for s in syns {
                check(&s)?;
                if s != word && !kept.contains(&s) {
                    kept.push(s);
                }
            }
            if kept.is_empty() {
                return Err(Error::Config(format!("{word:?} has no synonym other than itself")));
            }
            map.insert(word, kept);
        }
        Ok(SynonymLexicon { entries: map })
    }

    /// TSV: `word<TAB>syn1<TAB>syn2...`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split('\t');
            let word = cols.next().unwrap_or_default().to_string();
            let syns: Vec<String> = cols.map(str::to_string).collect();
            if syns.is_empty() {
                return Err(Error::parse(path, i + 1, "expected word<TAB>synonym..."));
            }
            rows.push((word, syns));
        }
        Self::new(rows).map_err(|e| Error::parse(path, 0, e.to_string()))
    }

    pub fn synonyms(&self, word: &str) -> Option<&[String]> {
        self.entries.get(&word.to_lowercase()).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Vec<String>)> {
        self.entries.iter()
    }
}

pub trait TranslationProvider: Sync {
    fn translate(&self, text: &str, src: &str, tgt: &str) -> Result<String>;
}

/// Returns its input unchanged.
pub struct IdentityTranslator;

impl TranslationProvider for IdentityTranslator {
    fn translate(&self, text: &str, _src: &str, _tgt: &str) -> Result<String> {
        Ok(text.to_string())
    }
}

#[derive(Serialize)]
struct TranslateRequest<'a> {
    text: &'a str,
    src: &'a str,
    tgt: &'a str,
}

#[derive(Deserialize)]
struct TranslateResponse {
    text: String,
}

/// POSTs `{"text","src","tgt"}` and reads `{"text"}`. Each call is tried up to
/// `attempts` times with exponential backoff starting at `backoff`.
pub struct HttpTranslator {
    pub endpoint: String,
    pub attempts: u32,
    pub backoff: Duration,
    agent: ureq::Agent,
}

impl HttpTranslator {
    pub fn new(endpoint: impl Into<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(30)))
            .build()
            .into();
        HttpTranslator {
            endpoint: endpoint.into(),
            attempts: 3,
            backoff: Duration::from_millis(200),
            agent,
        }
    }

    fn call(&self, text: &str, src: &str, tgt: &str) -> std::result::Result<String, String> {
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .send_json(TranslateRequest { text, src, tgt })
            .map_err(|e| e.to_string())?;
        resp.body_mut()
            .read_json::<TranslateResponse>()
            .map(|r| r.text)
            .map_err(|e| e.to_string())
    }
}

impl TranslationProvider for HttpTranslator {
    fn translate(&self, text: &str, src: &str, tgt: &str) -> Result<String> {
        let mut delay = self.backoff;
        let mut last = String::new();
        for attempt in 0..self.attempts.max(1) {
            if attempt > 0 {
                std::thread::sleep(delay);
                delay *= 2;
            }
            match self.call(text, src, tgt) {
                Ok(t) => return Ok(t),
                Err(e) => last = e,
            }
        }
        Err(Error::Translation(format!(
            "{} after {} attempts: {last}",
            self.endpoint, self.attempts
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CharSwapMode {
    #[default]
    Substitute,
    /// Transpose two adjacent, different letters.
    AdjacentSwap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WordOrderMode {
    #[default]
    Shuffle,
    /// Swap one adjacent pair of words.
    AdjacentSwap,
}

/// Everything an attack may need besides the query itself.
#[derive(Clone, Copy)]
pub struct AttackResources<'a> {
    pub lexicon: Option<&'a SynonymLexicon>,
    pub translator: Option<&'a dyn TranslationProvider>,
    pub source_lang: &'a str,
    pub pivot_lang: &'a str,
    pub char_swap: CharSwapMode,
    pub word_order: WordOrderMode,
    /// Worker threads for set generation; bounds concurrent translation calls.
    pub max_in_flight: usize,
}

impl Default for AttackResources<'_> {
    fn default() -> Self {
        AttackResources {
            lexicon: None,
            translator: None,
            source_lang: "en",
            pivot_lang: "de",
            char_swap: CharSwapMode::default(),
            word_order: WordOrderMode::default(),
            max_in_flight: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackOutcome {
    pub query: Query,
    /// The method had nothing to act on and returned the text unchanged.
    pub pass_through: bool,
}

/// Per-query seed: first 8 bytes (LE) of SHA-256(seed LE ‖ query id).
pub fn derive_seed(seed: u64, query_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(query_id.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

fn unchanged(query: &Query) -> AttackOutcome {
    AttackOutcome {
        query: query.clone(),
        pass_through: true,
    }
}

fn changed(query: &Query, words: &[String]) -> AttackOutcome {
    AttackOutcome {
        query: Query::new(query.id.clone(), words.join(" ")),
        pass_through: false,
    }
}

fn lexicon_positions(words: &[String], lex: &SynonymLexicon) -> Vec<usize> {
    (0..words.len())
        .filter(|&i| lex.synonyms(&words[i]).is_some())
        .collect()
}

fn require_lexicon<'a>(res: &AttackResources<'a>, method: AttackMethod) -> Result<&'a SynonymLexicon> {
    res.lexicon
        .ok_or_else(|| Error::Config(format!("{method} needs a synonym lexicon")))
}

/// Perturbs one query with an RNG seeded by `seed` directly.
pub fn attack(
    query: &Query,
    method: AttackMethod,
    seed: u64,
    res: &AttackResources<'_>,
) -> Result<AttackOutcome> {
    let mut words: Vec<String> = query.text.split_whitespace().map(str::to_string).collect();
    if words.is_empty() {
        return Err(Error::InvalidParam(format!("query {:?} has no words", query.id)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match method {
        AttackMethod::CS => {
            let eligible: Vec<usize> = (0..words.len())
                .filter(|&i| {
                    let w = &words[i];
                    w.chars().count() >= 3 && w.chars().all(char::is_alphabetic)
                })
                .filter(|&i| res.char_swap == CharSwapMode::Substitute || has_swappable_pair(&words[i]))
                .collect();
            let Some(&i) = eligible.choose(&mut rng) else {
                return Ok(unchanged(query));
            };
            let mut chars: Vec<char> = words[i].chars().collect();
            match res.char_swap {
                CharSwapMode::Substitute => {
                    let pos = rng.random_range(0..chars.len());
                    let choices: Vec<char> = ('a'..='z').filter(|&c| c != chars[pos]).collect();
                    chars[pos] = *choices.choose(&mut rng).expect("25 or 26 letters");
                }
                CharSwapMode::AdjacentSwap => {
                    let pairs: Vec<usize> =
                        (0..chars.len() - 1).filter(|&p| chars[p] != chars[p + 1]).collect();
                    let p = *pairs.choose(&mut rng).expect("checked swappable");
                    chars.swap(p, p + 1);
                }
            }
            words[i] = chars.into_iter().collect();
            Ok(changed(query, &words))
        }
        AttackMethod::WD => {
            if words.len() < 2 {
                return Ok(unchanged(query));
            }
            words.remove(rng.random_range(0..words.len()));
            Ok(changed(query, &words))
        }
        AttackMethod::SR => {
            let lex = require_lexicon(res, method)?;
            let Some(&i) = lexicon_positions(&words, lex).choose(&mut rng) else {
                return Ok(unchanged(query));
            };
            let syns = lex.synonyms(&words[i]).expect("position has entry");
            words[i] = syns.choose(&mut rng).expect("non-empty").clone();
            Ok(changed(query, &words))
        }
        AttackMethod::WOS => {
            if words.len() < 2 {
                return Ok(unchanged(query));
            }
            match res.word_order {
                WordOrderMode::Shuffle => {
                    let identity: Vec<usize> = (0..words.len()).collect();
                    let mut perm = identity.clone();
                    while perm == identity {
                        perm.shuffle(&mut rng);
                    }
                    let shuffled: Vec<String> = perm.iter().map(|&p| words[p].clone()).collect();
                    Ok(changed(query, &shuffled))
                }
                WordOrderMode::AdjacentSwap => {
                    let p = rng.random_range(0..words.len() - 1);
                    words.swap(p, p + 1);
                    Ok(changed(query, &words))
                }
            }
        }
        AttackMethod::SI => {
            let lex = require_lexicon(res, method)?;
            let Some(&i) = lexicon_positions(&words, lex).choose(&mut rng) else {
                return Ok(unchanged(query));
            };
            let syn = lex
                .synonyms(&words[i])
                .expect("position has entry")
                .choose(&mut rng)
                .expect("non-empty")
                .clone();
            let at = rng.random_range(0..=words.len());
            words.insert(at, syn);
            Ok(changed(query, &words))
        }
        AttackMethod::BT => {
            let tr = res
                .translator
                .ok_or_else(|| Error::Config("BT needs a translation provider".into()))?;
            let pivot = tr.translate(&query.text, res.source_lang, res.pivot_lang)?;
            let back = tr.translate(&pivot, res.pivot_lang, res.source_lang)?;
            Ok(AttackOutcome {
                query: Query::new(query.id.clone(), back),
                pass_through: false,
            })
        }
    }
}

fn has_swappable_pair(word: &str) -> bool {
    let chars: Vec<char> = word.chars().collect();
    chars.windows(2).any(|w| w[0] != w[1])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryError {
    pub query_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackManifest {
    pub method: AttackMethod,
    pub seed: u64,
    pub total: usize,
    pub perturbed: usize,
    pub pass_through_count: usize,
    pub pass_through: Vec<String>,
    pub errors: Vec<QueryError>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackSet {
    /// Sorted by query id.
    pub queries: Vec<Query>,
    pub manifest: AttackManifest,
}

/// Perturbs every query with seed `derive_seed(seed, id)`. Failed queries are
/// listed in the manifest and left out of the set.
pub fn generate_attack_set(
    queries: &[Query],
    method: AttackMethod,
    seed: u64,
    res: &AttackResources<'_>,
) -> Result<AttackSet> {
    if matches!(method, AttackMethod::SR | AttackMethod::SI) {
        require_lexicon(res, method)?;
    }
    if method == AttackMethod::BT && res.translator.is_none() {
        return Err(Error::Config("BT needs a translation provider".into()));
    }
    let mut sorted: Vec<&Query> = queries.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(res.max_in_flight.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let outcomes: Vec<(String, Result<AttackOutcome>)> = pool.install(|| {
        sorted
            .par_iter()
            .map(|q| (q.id.clone(), attack(q, method, derive_seed(seed, &q.id), res)))
            .collect()
    });
    let mut out = Vec::new();
    let mut pass_through = Vec::new();
    let mut errors = Vec::new();
    for (id, outcome) in outcomes {
        match outcome {
            Ok(o) => {
                if o.pass_through {
                    pass_through.push(id);
                }
                out.push(o.query);
            }
            Err(e) => errors.push(QueryError {
                query_id: id,
                error: e.to_string(),
            }),
        }
    }
    Ok(AttackSet {
        manifest: AttackManifest {
            method,
            seed,
            total: queries.len(),
            perturbed: out.len(),
            pass_through_count: pass_through.len(),
            pass_through,
            errors,
        },
        queries: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    fn lexicon() -> SynonymLexicon {
        SynonymLexicon::new([
            ("wrote".to_string(), vec!["penned".to_string(), "authored".to_string()]),
            ("big".to_string(), vec!["large".to_string()]),
        ])
        .unwrap()
    }

    #[test]
    fn single_word_pass_through() {
        let q = Query::new("q", "paris");
        let res = AttackResources::default();
        let o = attack(&q, AttackMethod::WOS, 1, &res).unwrap();
        assert!(o.pass_through);
        assert_eq!(o.query.text, "paris");
        assert!(attack(&q, AttackMethod::WD, 1, &res).unwrap().pass_through);
    }

    #[test]
    fn identity_back_translation() {
        let q = Query::new("q", "who wrote hamlet");
        let res = AttackResources {
            translator: Some(&IdentityTranslator),
            ..Default::default()
        };
        assert_eq!(attack(&q, AttackMethod::BT, 0, &res).unwrap().query, q);
    }

    #[test]
    fn word_deletion_outcomes() {
        let q = Query::new("q", "who wrote hamlet");
        let allowed = ["wrote hamlet", "who hamlet", "who wrote"];
        let res = AttackResources::default();
        let mut seen = std::collections::BTreeSet::new();
        for seed in 0..40 {
            let a = attack(&q, AttackMethod::WD, seed, &res).unwrap();
            let b = attack(&q, AttackMethod::WD, seed, &res).unwrap();
            assert_eq!(a, b);
            assert!(allowed.contains(&a.query.text.as_str()), "{}", a.query.text);
            seen.insert(a.query.text);
        }
        assert_eq!(seen.len(), 3);
    }

    #[test]
    fn missing_resources_are_config_errors() {
        let q = Query::new("q", "big house");
        let res = AttackResources::default();
        assert!(matches!(attack(&q, AttackMethod::SR, 0, &res), Err(Error::Config(_))));
        assert!(matches!(attack(&q, AttackMethod::SI, 0, &res), Err(Error::Config(_))));
        assert!(matches!(attack(&q, AttackMethod::BT, 0, &res), Err(Error::Config(_))));
        assert!(generate_attack_set(&[q], AttackMethod::SR, 0, &res).is_err());
    }

    #[test]
    fn synonym_methods() {
        let lex = lexicon();
        let res = AttackResources {
            lexicon: Some(&lex),
            ..Default::default()
        };
        let q = Query::new("q", "who wrote hamlet");
        let sr = attack(&q, AttackMethod::SR, 5, &res).unwrap();
        assert!(["who penned hamlet", "who authored hamlet"].contains(&sr.query.text.as_str()));
        let si = attack(&q, AttackMethod::SI, 5, &res).unwrap();
        assert_eq!(si.query.text.split_whitespace().count(), 4);
        let none = attack(&Query::new("q", "no entries here"), AttackMethod::SR, 5, &res).unwrap();
        assert!(none.pass_through);
    }

    #[test]
    fn lexicon_validation() {
        assert!(SynonymLexicon::new([("Big".to_string(), vec!["large".to_string()])]).is_err());
        assert!(SynonymLexicon::new([("big".to_string(), vec!["big".to_string()])]).is_err());
        assert!(SynonymLexicon::new([("big".to_string(), vec!["very large".to_string()])]).is_err());
        let lex = SynonymLexicon::new([("big".to_string(), vec!["big".to_string(), "huge".to_string()])]).unwrap();
        assert_eq!(lex.synonyms("BIG").unwrap(), ["huge"]);
    }

    #[test]
    fn alternate_modes() {
        let q = Query::new("q", "alpha beta gamma delta");
        let res = AttackResources {
            char_swap: CharSwapMode::AdjacentSwap,
            word_order: WordOrderMode::AdjacentSwap,
            ..Default::default()
        };
        let cs = attack(&q, AttackMethod::CS, 3, &res).unwrap();
        let mut a: Vec<char> = q.text.chars().collect();
        let mut b: Vec<char> = cs.query.text.chars().collect();
        assert_ne!(a, b);
        a.sort();
        b.sort();
        assert_eq!(a, b);
        let wos = attack(&q, AttackMethod::WOS, 3, &res).unwrap();
        let diff = q
            .text
            .split(' ')
            .zip(wos.query.text.split(' '))
            .filter(|(x, y)| x != y)
            .count();
        assert_eq!(diff, 2);
    }

    #[test]
    fn set_is_input_order_independent() {
        let qs: Vec<Query> = (0..20)
            .map(|i| Query::new(format!("q{i:02}"), format!("word{i} other{} third", i * 3)))
            .collect();
        let mut rev = qs.clone();
        rev.reverse();
        let res = AttackResources::default();
        let a = generate_attack_set(&qs, AttackMethod::WOS, 11, &res).unwrap();
        let b = generate_attack_set(&rev, AttackMethod::WOS, 11, &res).unwrap();
        assert_eq!(a, b);
    }

    /// Answers translation requests: upper-cases towards "de", lower-cases
    /// otherwise. The first `fail_first` requests get a 500.
    fn spawn_translator(fail_first: usize) -> (String, Arc<AtomicUsize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = hits.clone();
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let mut stream = stream.unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut body = vec![0; len];
                reader.read_exact(&mut body).unwrap();
                let n = counter.fetch_add(1, Ordering::SeqCst);
                let resp = if n < fail_first {
                    "HTTP/1.1 500 Internal Server Error\r\ncontent-length: 0\r\nconnection: close\r\n\r\n".to_string()
                } else {
                    let req: serde_json::Value = serde_json::from_slice(&body).unwrap();
                    let text = req["text"].as_str().unwrap();
                    let out = if req["tgt"] == "de" { text.to_uppercase() } else { text.to_lowercase() };
                    let json = serde_json::json!({ "text": out }).to_string();
                    format!(
                        "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{json}",
                        json.len()
                    )
                };
                stream.write_all(resp.as_bytes()).unwrap();
            }
        });
        (format!("http://{addr}/translate"), hits)
    }

    #[test]
    fn http_translator_round_trip_with_retry() {
        let (url, hits) = spawn_translator(1);
        let mut tr = HttpTranslator::new(url);
        tr.backoff = Duration::from_millis(5);
        let res = AttackResources {
            translator: Some(&tr),
            ..Default::default()
        };
        let q = Query::new("q", "who wrote hamlet");
        let out = attack(&q, AttackMethod::BT, 0, &res).unwrap();
        assert_eq!(out.query.text, "who wrote hamlet");
        assert_eq!(hits.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn http_translator_gives_up() {
        let (url, _) = spawn_translator(usize::MAX);
        let mut tr = HttpTranslator::new(url);
        tr.backoff = Duration::from_millis(1);
        let err = tr.translate("x", "en", "de").unwrap_err();
        assert!(matches!(err, Error::Translation(_)));
        let res = AttackResources {
            translator: Some(&tr),
            ..Default::default()
        };
        let set = generate_attack_set(&[Query::new("q", "hello there")], AttackMethod::BT, 0, &res).unwrap();
        assert_eq!(set.manifest.errors.len(), 1);
        assert!(set.queries.is_empty());
    }
}
