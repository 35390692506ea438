//! Dataset model, on-disk formats, and the synthetic FAQ generator.
//!
//! A dataset is a passage corpus plus train and test query sets, each query
//! carrying its gold passage id. On disk a dataset is a directory:
//!
//! ```text
//! corpus.jsonl          one {"id": ..., "text": ...} record per line
//! train_queries.tsv     query_id <TAB> gold_passage_id <TAB> text
//! test_queries.tsv      same shape
//! metadata.json         {"name": ..., counts}
//! ```
//!
//! # Synthetic generator
//!
//! Each passage receives a keyword set disjoint from every other passage's,
//! plus filler tokens drawn from a shared vocabulary. Every keyword also has
//! a query-side paraphrase token that appears in queries but in no passage
//! text. A query is, with probability `paraphrase_noise`, expressed entirely
//! in its passage's paraphrase tokens; otherwise it mentions a nonempty
//! subset of the passage's literal keywords. Consequences, audited at
//! generation time:
//!
//! - every literal query's gold passage is its unique keyword-overlap
//!   maximizer (keyword matching alone solves it);
//! - paraphrase queries share no token with any passage, so term-matching
//!   systems score the whole corpus zero on them while a trained encoder can
//!   still resolve them — they are the learnable part of the dataset;
//! - at `paraphrase_noise = 0` every query is literal and term matching
//!   solves the dataset exactly.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io_util::atomic_write;
use crate::sparse::Passage;
use crate::text::{tokenize, TokenizerConfig};

/// A query with its gold passage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
    pub gold: String,
}

impl Query {
    pub fn new(id: impl Into<String>, text: impl Into<String>, gold: impl Into<String>) -> Self {
        Query {
            id: id.into(),
            text: text.into(),
            gold: gold.into(),
        }
    }
}

/// Passages plus train/test queries, with ids validated on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    passages: Vec<Passage>,
    train_queries: Vec<Query>,
    test_queries: Vec<Query>,
    passage_idx: HashMap<String, usize>,
}

impl Dataset {
    /// Validates: unique passage ids, unique query ids per split, and every
    /// gold id resolving to a passage.
    pub fn new(
        name: impl Into<String>,
        passages: Vec<Passage>,
        train_queries: Vec<Query>,
        test_queries: Vec<Query>,
    ) -> Result<Self> {
        if passages.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut passage_idx = HashMap::with_capacity(passages.len());
        for (i, p) in passages.iter().enumerate() {
            if passage_idx.insert(p.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(p.id.clone()));
            }
        }
        for split in [&train_queries, &test_queries] {
            let mut seen = HashSet::new();
            for q in split.iter() {
                if !seen.insert(&q.id) {
                    return Err(Error::DuplicateId(q.id.clone()));
                }
                if !passage_idx.contains_key(&q.gold) {
                    return Err(Error::DanglingGold {
                        query: q.id.clone(),
                        gold: q.gold.clone(),
                    });
                }
            }
        }
        Ok(Dataset {
            name: name.into(),
            passages,
            train_queries,
            test_queries,
            passage_idx,
        })
    }

    pub fn passages(&self) -> &[Passage] {
        &self.passages
    }

    pub fn train_queries(&self) -> &[Query] {
        &self.train_queries
    }

    pub fn test_queries(&self) -> &[Query] {
        &self.test_queries
    }

    pub fn passage(&self, id: &str) -> Option<&Passage> {
        self.passage_idx.get(id).map(|&i| &self.passages[i])
    }

    pub fn passage_ids(&self) -> Vec<String> {
        self.passages.iter().map(|p| p.id.clone()).collect()
    }

    /// query id -> gold passage id over the training split.
    pub fn train_qrels(&self) -> BTreeMap<String, String> {
        self.train_queries
            .iter()
            .map(|q| (q.id.clone(), q.gold.clone()))
            .collect()
    }

    /// query id -> gold passage id over the test split.
    pub fn test_qrels(&self) -> BTreeMap<String, String> {
        self.test_queries
            .iter()
            .map(|q| (q.id.clone(), q.gold.clone()))
            .collect()
    }

    /// Same corpus and test split, different training queries.
    pub fn with_train_queries(&self, train_queries: Vec<Query>) -> Result<Dataset> {
        Dataset::new(
            self.name.clone(),
            self.passages.clone(),
            train_queries,
            self.test_queries.clone(),
        )
    }
}

/// Synthetic dataset shape knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_passages: usize,
    pub keywords_per_passage: usize,
    pub shared_vocab_size: usize,
    pub queries_per_passage: usize,
    /// Probability that a query is phrased entirely in paraphrase tokens.
    pub paraphrase_noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_passages: 50,
            keywords_per_passage: 6,
            shared_vocab_size: 40,
            queries_per_passage: 3,
            paraphrase_noise: 0.2,
            seed: 0,
        }
    }
}

/// 26^3 distinct keyword stems; the paraphrase lexicon mirrors it 1:1.
const KEYWORD_UNIVERSE: usize = 26 * 26 * 26;

fn base26(mut n: usize) -> String {
    let mut s = String::new();
    for _ in 0..3 {
        s.push((b'a' + (n % 26) as u8) as char);
        n /= 26;
    }
    s
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.n_passages < 2 {
            return Err(Error::invalid("synth config", "n_passages must be >= 2"));
        }
        if self.keywords_per_passage < 1
            || self.shared_vocab_size < 1
            || self.queries_per_passage < 1
        {
            return Err(Error::invalid("synth config", "counts must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.paraphrase_noise) {
            return Err(Error::invalid(
                "synth config",
                "paraphrase_noise must be in [0, 1]",
            ));
        }
        let demand = self.n_passages * self.keywords_per_passage;
        if demand > KEYWORD_UNIVERSE {
            return Err(Error::invalid(
                "synth config",
                format!("{demand} keywords demanded, lexicon holds {KEYWORD_UNIVERSE}"),
            ));
        }
        Ok(())
    }
}

/// Generate a dataset per `config`; deterministic for a fixed seed.
///
/// Emits `queries_per_passage` training queries and the same number of test
/// queries per passage.
pub fn generate_synthetic(config: &SynthConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let k = config.keywords_per_passage;

    let fillers: Vec<String> = (0..config.shared_vocab_size)
        .map(|t| format!("fill{}", base26(t)))
        .collect();

    let mut passages = Vec::with_capacity(config.n_passages);
    let mut keywords: Vec<Vec<String>> = Vec::with_capacity(config.n_passages);
    let mut paraphrases: Vec<Vec<String>> = Vec::with_capacity(config.n_passages);
    for i in 0..config.n_passages {
        let kws: Vec<String> = (0..k).map(|j| format!("kw{}", base26(i * k + j))).collect();
        let syns: Vec<String> = (0..k).map(|j| format!("syn{}", base26(i * k + j))).collect();
        let mut words = kws.clone();
        for _ in 0..k {
            words.push(fillers[rng.gen_range(0..fillers.len())].clone());
        }
        words.shuffle(&mut rng);
        passages.push(Passage::new(format!("p{i:03}"), words.join(" ")));
        keywords.push(kws);
        paraphrases.push(syns);
    }

    let mut make_query = |rng: &mut ChaCha8Rng, pool: &[String]| -> String {
        let len = rng.gen_range((k / 2).max(1)..=k);
        let mut picks: Vec<&String> = pool.iter().collect();
        picks.shuffle(rng);
        picks
            .into_iter()
            .take(len)
            .map(|s| s.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    };

    let mut train_queries = Vec::new();
    let mut test_queries = Vec::new();
    for i in 0..config.n_passages {
        let gold = format!("p{i:03}");
        for (tag, bucket) in [("t", &mut train_queries), ("e", &mut test_queries)] {
            for j in 0..config.queries_per_passage {
                let paraphrased = rng.gen_bool(config.paraphrase_noise);
                let pool = if paraphrased {
                    &paraphrases[i]
                } else {
                    &keywords[i]
                };
                let text = make_query(&mut rng, pool);
                bucket.push(Query::new(format!("q{i:03}{tag}{j}"), text, gold.clone()));
            }
        }
    }

    let dataset = Dataset::new(
        format!("synth-{}x{}-seed{}", config.n_passages, k, config.seed),
        passages,
        train_queries,
        test_queries,
    )?;
    audit_separability(&dataset)?;
    Ok(dataset)
}

/// Exhaustive keyword-overlap audit: every query either overlaps its gold
/// passage strictly more than any other passage, or overlaps nothing at all.
fn audit_separability(dataset: &Dataset) -> Result<()> {
    let cfg = TokenizerConfig::dense_default();
    let passage_tokens: Vec<(String, HashSet<String>)> = dataset
        .passages()
        .iter()
        .map(|p| {
            (
                p.id.clone(),
                tokenize(&cfg, &p.text).tokens().iter().cloned().collect(),
            )
        })
        .collect();
    for q in dataset.train_queries().iter().chain(dataset.test_queries()) {
        let q_tokens: HashSet<String> =
            tokenize(&cfg, &q.text).tokens().iter().cloned().collect();
        let mut gold_overlap = 0usize;
        let mut best_other = 0usize;
        for (pid, ptoks) in &passage_tokens {
            let overlap = q_tokens.intersection(ptoks).count();
            if *pid == q.gold {
                gold_overlap = overlap;
            } else {
                best_other = best_other.max(overlap);
            }
        }
        let separable = gold_overlap > best_other;
        let blind = gold_overlap == 0 && best_other == 0;
        if !separable && !blind {
            return Err(Error::invalid(
                "synthetic dataset",
                format!("query `{}` is not separable (gold overlap {gold_overlap}, best other {best_other})", q.id),
            ));
        }
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    name: String,
    n_passages: usize,
    n_train_queries: usize,
    n_test_queries: usize,
}

/// Write `dataset` into `dir` (created if missing), one file per piece.
pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    atomic_write(&dir.join("corpus.jsonl"), |buf| {
        for p in dataset.passages() {
            serde_json::to_writer(&mut *buf, p).expect("serialize passage");
            buf.push(b'\n');
        }
    })?;
    for (file, queries) in [
        ("train_queries.tsv", dataset.train_queries()),
        ("test_queries.tsv", dataset.test_queries()),
    ] {
        atomic_write(&dir.join(file), |buf| {
            for q in queries {
                buf.extend_from_slice(
                    format!("{}\t{}\t{}\n", q.id, q.gold, q.text).as_bytes(),
                );
            }
        })?;
    }
    let meta = Metadata {
        name: dataset.name.clone(),
        n_passages: dataset.passages().len(),
        n_train_queries: dataset.train_queries().len(),
        n_test_queries: dataset.test_queries().len(),
    };
    atomic_write(&dir.join("metadata.json"), |buf| {
        serde_json::to_writer_pretty(&mut *buf, &meta).expect("serialize metadata");
        buf.push(b'\n');
    })
}

fn read_queries(path: &Path) -> Result<Vec<Query>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, '\t');
        let (Some(id), Some(gold), Some(text)) = (parts.next(), parts.next(), parts.next())
        else {
            return Err(Error::Malformed {
                path: path.to_path_buf(),
                line: lineno + 1,
                msg: "expected query_id<TAB>gold_id<TAB>text".into(),
            });
        };
        out.push(Query::new(id, text, gold));
    }
    Ok(out)
}

/// Load a dataset directory written by `save_dataset`.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let corpus_path = dir.join("corpus.jsonl");
    let text = std::fs::read_to_string(&corpus_path).map_err(|e| Error::io(&corpus_path, e))?;
    let mut passages = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let p: Passage = serde_json::from_str(line).map_err(|e| Error::Malformed {
            path: corpus_path.clone(),
            line: lineno + 1,
            msg: e.to_string(),
        })?;
        passages.push(p);
    }
    if passages.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let train = read_queries(&dir.join("train_queries.tsv"))?;
    let test = read_queries(&dir.join("test_queries.tsv"))?;
    let meta_path = dir.join("metadata.json");
    let name = if meta_path.exists() {
        let raw = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        serde_json::from_str::<Metadata>(&raw)
            .map(|m| m.name)
            .unwrap_or_else(|_| "dataset".to_string())
    } else {
        "dataset".to_string()
    };
    Dataset::new(name, passages, train, test)
}
