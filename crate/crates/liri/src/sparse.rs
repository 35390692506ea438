//! BM25 inverted-index retrieval.
//!
//! Scoring follows the Lucene-style formulation: for each query term `t`
//! occurring in document `d`,
//!
//! ```text
//! idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5))
//! w(t,d) = idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl))
//! ```
//!
//! with the `+1` inside the log so idf never goes negative. A query term
//! repeated `r` times contributes `r` times its weight.
//!
//! # Index file format (`LIRI-BM25-v1`)
//!
//! All integers little-endian; strings are `u32` length + UTF-8 bytes.
//!
//! ```text
//! magic          12 bytes  "LIRI-BM25-v1"
//! k1, b          f64, f64
//! n_docs         u64
//! avgdl          f64
//! tokenizer      u8 lowercase, u8 strip_punctuation, u8 stem,
//!                u32 n_stopwords, then each stopword (sorted)
//! doc table      n_docs x (string id, u32 token_count), corpus order
//! postings       u64 n_terms, then per term (sorted lexicographically):
//!                string term, u32 n_postings, n x (u32 doc_index, u32 tf)
//! ```

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use byteorder::{LittleEndian, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io_util::{atomic_write, write_string, FileReader};
use crate::rank::RankedResult;
use crate::text::{tokenize, TokenSeq, TokenizerConfig};

pub const BM25_MAGIC: &str = "LIRI-BM25-v1";

/// Free parameters of the scoring function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    /// Term-frequency saturation, >= 0.
    pub k1: f64,
    /// Length normalization in [0, 1].
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

/// Immutable inverted index over a passage corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct Bm25Index {
    params: Bm25Params,
    tokenizer: TokenizerConfig,
    doc_ids: Vec<String>,
    id_to_idx: HashMap<String, u32>,
    doc_len: Vec<u32>,
    avgdl: f64,
    postings: BTreeMap<String, Vec<(u32, u32)>>,
}

/// A passage: an identified text unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub id: String,
    pub text: String,
}

impl Passage {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Passage {
            id: id.into(),
            text: text.into(),
        }
    }
}

/// Build an index over `passages`. Rejects an empty corpus and duplicate ids.
pub fn build_bm25(
    passages: &[Passage],
    config: &TokenizerConfig,
    params: Bm25Params,
) -> Result<Bm25Index> {
    if passages.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut doc_ids = Vec::with_capacity(passages.len());
    let mut id_to_idx = HashMap::with_capacity(passages.len());
    let mut doc_len = Vec::with_capacity(passages.len());
    let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();

    for (idx, passage) in passages.iter().enumerate() {
        if id_to_idx
            .insert(passage.id.clone(), idx as u32)
            .is_some()
        {
            return Err(Error::DuplicateId(passage.id.clone()));
        }
        doc_ids.push(passage.id.clone());
        let tokens = tokenize(config, &passage.text);
        doc_len.push(tokens.len() as u32);
        let mut tf: BTreeMap<&str, u32> = BTreeMap::new();
        for t in tokens.iter() {
            *tf.entry(t.as_str()).or_insert(0) += 1;
        }
        for (term, count) in tf {
            postings
                .entry(term.to_string())
                .or_default()
                .push((idx as u32, count));
        }
    }
    let avgdl = doc_len.iter().map(|&l| l as f64).sum::<f64>() / doc_len.len() as f64;
    Ok(Bm25Index {
        params,
        tokenizer: config.clone(),
        doc_ids,
        id_to_idx,
        doc_len,
        avgdl,
        postings,
    })
}

impl Bm25Index {
    pub fn n_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn tokenizer(&self) -> &TokenizerConfig {
        &self.tokenizer
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.postings.keys().map(|s| s.as_str())
    }

    pub fn doc_len(&self, passage_id: &str) -> Option<u32> {
        self.id_to_idx
            .get(passage_id)
            .map(|&i| self.doc_len[i as usize])
    }

    fn idf(&self, term: &str) -> f64 {
        let df = self.postings.get(term).map_or(0, |p| p.len()) as f64;
        let n = self.n_docs() as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn term_weight(&self, tf: u32, doc_idx: u32) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = tf as f64;
        let dl = self.doc_len[doc_idx as usize] as f64;
        tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / self.avgdl))
    }
}

fn score_doc(index: &Bm25Index, query: &TokenSeq, doc_idx: u32) -> f64 {
    let mut score = 0.0;
    for term in query.iter() {
        if let Some(plist) = index.postings.get(term.as_str()) {
            if let Ok(pos) = plist.binary_search_by_key(&doc_idx, |&(d, _)| d) {
                let tf = plist[pos].1;
                score += index.idf(term) * index.term_weight(tf, doc_idx);
            }
        }
    }
    score
}

/// Score one passage against an already-tokenized query. Each occurrence of a
/// query term contributes separately.
pub fn bm25_score(index: &Bm25Index, query: &TokenSeq, passage_id: &str) -> Result<f64> {
    let doc_idx = *index
        .id_to_idx
        .get(passage_id)
        .ok_or_else(|| Error::UnknownId {
            kind: "passage",
            id: passage_id.to_string(),
        })?;
    Ok(score_doc(index, query, doc_idx))
}

/// Top-`k` passages for `query_text`, tokenized with the index's own
/// tokenizer. Passages scoring zero are omitted. Candidates come from the
/// postings of the query terms and are scored with the same per-document
/// routine as `bm25_score`, so the two routes agree bit-for-bit.
pub fn bm25_search(index: &Bm25Index, query_text: &str, k: usize) -> RankedResult {
    let query = tokenize(&index.tokenizer, query_text);
    if query.is_empty() {
        return RankedResult::empty();
    }
    let mut candidates: Vec<u32> = query
        .iter()
        .filter_map(|t| index.postings.get(t.as_str()))
        .flat_map(|plist| plist.iter().map(|&(d, _)| d))
        .collect();
    candidates.sort_unstable();
    candidates.dedup();
    let scores: Vec<(String, f64)> = candidates
        .into_iter()
        .map(|idx| (idx, score_doc(index, &query, idx)))
        .filter(|&(_, s)| s > 0.0)
        .map(|(idx, s)| (index.doc_ids[idx as usize].clone(), s))
        .collect();
    RankedResult::from_scores(scores, k)
}

/// Full score map over every passage in the index (zeros included), for
/// ensembling.
pub fn bm25_score_all(index: &Bm25Index, query_text: &str) -> BTreeMap<String, f64> {
    let query = tokenize(&index.tokenizer, query_text);
    let mut out: BTreeMap<String, f64> = index
        .doc_ids
        .iter()
        .map(|id| (id.clone(), 0.0))
        .collect();
    for term in query.iter() {
        if let Some(plist) = index.postings.get(term.as_str()) {
            let idf = index.idf(term);
            for &(doc_idx, tf) in plist {
                *out.get_mut(&index.doc_ids[doc_idx as usize]).unwrap() +=
                    idf * index.term_weight(tf, doc_idx);
            }
        }
    }
    out
}

/// Serialized size in bytes, without touching disk.
pub fn bm25_index_bytes(index: &Bm25Index) -> u64 {
    let mut buf = Vec::new();
    write_bm25(index, &mut buf);
    buf.len() as u64
}

/// Persist the index; see the module docs for the exact layout.
pub fn save_bm25(index: &Bm25Index, path: &Path) -> Result<()> {
    atomic_write(path, |buf| write_bm25(index, buf))
}

fn write_bm25(index: &Bm25Index, buf: &mut Vec<u8>) {
    {
        buf.extend_from_slice(BM25_MAGIC.as_bytes());
        buf.write_f64::<LittleEndian>(index.params.k1).unwrap();
        buf.write_f64::<LittleEndian>(index.params.b).unwrap();
        buf.write_u64::<LittleEndian>(index.n_docs() as u64).unwrap();
        buf.write_f64::<LittleEndian>(index.avgdl).unwrap();
        let t = &index.tokenizer;
        buf.push(t.lowercase as u8);
        buf.push(t.strip_punctuation as u8);
        buf.push(t.stem as u8);
        buf.write_u32::<LittleEndian>(t.stopwords.len() as u32).unwrap();
        for s in &t.stopwords {
            write_string(buf, s);
        }
        for (id, len) in index.doc_ids.iter().zip(&index.doc_len) {
            write_string(buf, id);
            buf.write_u32::<LittleEndian>(*len).unwrap();
        }
        buf.write_u64::<LittleEndian>(index.postings.len() as u64).unwrap();
        for (term, plist) in &index.postings {
            write_string(buf, term);
            buf.write_u32::<LittleEndian>(plist.len() as u32).unwrap();
            for &(doc_idx, tf) in plist {
                buf.write_u32::<LittleEndian>(doc_idx).unwrap();
                buf.write_u32::<LittleEndian>(tf).unwrap();
            }
        }
    }
}

pub fn load_bm25(path: &Path) -> Result<Bm25Index> {
    let mut r = FileReader::open(path)?;
    r.expect_magic(BM25_MAGIC)?;
    let k1 = r.read_f64()?;
    let b = r.read_f64()?;
    let n_docs = r.read_u64()? as usize;
    let avgdl = r.read_f64()?;
    let lowercase = r.read_u8()? != 0;
    let strip_punctuation = r.read_u8()? != 0;
    let stem = r.read_u8()? != 0;
    let n_stop = r.read_u32()? as usize;
    let mut stopwords = std::collections::BTreeSet::new();
    for _ in 0..n_stop {
        stopwords.insert(r.read_string()?);
    }
    let mut doc_ids = Vec::with_capacity(n_docs);
    let mut doc_len = Vec::with_capacity(n_docs);
    let mut id_to_idx = HashMap::with_capacity(n_docs);
    for idx in 0..n_docs {
        let id = r.read_string()?;
        doc_len.push(r.read_u32()?);
        if id_to_idx.insert(id.clone(), idx as u32).is_some() {
            return Err(Error::DuplicateId(id));
        }
        doc_ids.push(id);
    }
    let n_terms = r.read_u64()? as usize;
    let mut postings = BTreeMap::new();
    for _ in 0..n_terms {
        let term = r.read_string()?;
        let n = r.read_u32()? as usize;
        let mut plist = Vec::with_capacity(n);
        for _ in 0..n {
            plist.push((r.read_u32()?, r.read_u32()?));
        }
        postings.insert(term, plist);
    }
    Ok(Bm25Index {
        params: Bm25Params { k1, b },
        tokenizer: TokenizerConfig {
            lowercase,
            strip_punctuation,
            stopwords,
            stem,
        },
        doc_ids,
        id_to_idx,
        doc_len,
        avgdl,
        postings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn plain_config() -> TokenizerConfig {
        TokenizerConfig {
            lowercase: true,
            strip_punctuation: true,
            stopwords: Default::default(),
            stem: false,
        }
    }

    fn two_doc_index() -> Bm25Index {
        let passages = vec![
            Passage::new("d1", "cat sat"),
            Passage::new("d2", "dog sat"),
        ];
        build_bm25(&passages, &plain_config(), Bm25Params::default()).unwrap()
    }

    #[test]
    fn build_counts_and_vocabulary() {
        let idx = two_doc_index();
        assert_eq!(idx.n_docs(), 2);
        assert_relative_eq!(idx.avgdl(), 2.0);
        let terms: Vec<_> = idx.terms().collect();
        assert_eq!(terms, vec!["cat", "dog", "sat"]);
    }

    #[test]
    fn build_repeated_term() {
        let idx = build_bm25(
            &[Passage::new("d", "a a a")],
            &plain_config(),
            Bm25Params::default(),
        )
        .unwrap();
        assert_eq!(idx.doc_len("d"), Some(3));
        let terms: Vec<_> = idx.terms().collect();
        assert_eq!(terms, vec!["a"]);
    }

    #[test]
    fn build_allows_empty_doc() {
        let idx = build_bm25(
            &[Passage::new("d1", "cat"), Passage::new("d2", "")],
            &plain_config(),
            Bm25Params::default(),
        )
        .unwrap();
        assert_eq!(idx.doc_len("d2"), Some(0));
        assert_relative_eq!(idx.avgdl(), 0.5);
    }

    #[test]
    fn build_rejects_duplicates_and_empty_corpus() {
        let dup = build_bm25(
            &[Passage::new("x", "a"), Passage::new("x", "b")],
            &plain_config(),
            Bm25Params::default(),
        );
        assert!(matches!(dup, Err(Error::DuplicateId(id)) if id == "x"));
        assert!(matches!(
            build_bm25(&[], &plain_config(), Bm25Params::default()),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn worked_score_example() {
        let idx = two_doc_index();
        let q = tokenize(&plain_config(), "cat");
        let s = bm25_score(&idx, &q, "d1").unwrap();
        // idf = ln(1 + (2-1+0.5)/(1+0.5)) = ln 2; tf part = 2.2/2.2 = 1
        assert_relative_eq!(s, 2.0_f64.ln(), epsilon = 1e-9);
    }

    #[test]
    fn no_overlap_scores_zero() {
        let idx = two_doc_index();
        let q = tokenize(&plain_config(), "zebra quark");
        assert_relative_eq!(bm25_score(&idx, &q, "d1").unwrap(), 0.0);
    }

    #[test]
    fn symmetric_docs_score_identically() {
        let idx = two_doc_index();
        let q = tokenize(&plain_config(), "sat");
        let s1 = bm25_score(&idx, &q, "d1").unwrap();
        let s2 = bm25_score(&idx, &q, "d2").unwrap();
        assert_relative_eq!(s1, s2);
    }

    #[test]
    fn unknown_passage_is_an_error() {
        let idx = two_doc_index();
        let q = tokenize(&plain_config(), "cat");
        let err = bm25_score(&idx, &q, "nope").unwrap_err();
        assert!(matches!(err, Error::UnknownId { id, .. } if id == "nope"));
    }

    #[test]
    fn search_returns_matching_docs_only() {
        let idx = two_doc_index();
        let r = bm25_search(&idx, "cat", 2);
        assert_eq!(r.len(), 1);
        assert_eq!(r.items()[0].0, "d1");
        assert_relative_eq!(r.items()[0].1, 2.0_f64.ln(), epsilon = 1e-9);
    }

    #[test]
    fn search_saturates_and_handles_empty_query() {
        let idx = two_doc_index();
        assert_eq!(bm25_search(&idx, "sat", 100).len(), 2);
        assert!(bm25_search(&idx, "", 5).is_empty());
        assert!(bm25_search(&idx, "...", 5).is_empty());
    }

    #[test]
    fn repeated_query_terms_accumulate() {
        let idx = two_doc_index();
        let single = tokenize(&plain_config(), "cat");
        let double = tokenize(&plain_config(), "cat cat");
        let s1 = bm25_score(&idx, &single, "d1").unwrap();
        let s2 = bm25_score(&idx, &double, "d1").unwrap();
        assert_relative_eq!(s2, 2.0 * s1, epsilon = 1e-12);
    }

    #[test]
    fn idf_strictly_decreasing_in_df() {
        // three docs: "rare" in one, "mid" in two, "common" in all
        let passages = vec![
            Passage::new("a", "rare mid common"),
            Passage::new("b", "mid common"),
            Passage::new("c", "common"),
        ];
        let idx = build_bm25(&passages, &plain_config(), Bm25Params::default()).unwrap();
        assert!(idx.idf("rare") > idx.idf("mid"));
        assert!(idx.idf("mid") > idx.idf("common"));
        assert!(idx.idf("common") > 0.0);
    }

    #[test]
    fn b_zero_ignores_doc_length() {
        let passages = vec![
            Passage::new("short", "cat"),
            Passage::new("long", "cat filler words everywhere all the time"),
        ];
        let idx = build_bm25(
            &passages,
            &plain_config(),
            Bm25Params { k1: 1.2, b: 0.0 },
        )
        .unwrap();
        let q = tokenize(&plain_config(), "cat");
        let s_short = bm25_score(&idx, &q, "short").unwrap();
        let s_long = bm25_score(&idx, &q, "long").unwrap();
        assert_relative_eq!(s_short, s_long, epsilon = 1e-12);
    }

    #[test]
    fn score_all_covers_every_doc() {
        let idx = two_doc_index();
        let all = bm25_score_all(&idx, "cat");
        assert_eq!(all.len(), 2);
        assert_relative_eq!(all["d2"], 0.0);
        assert!(all["d1"] > 0.0);
    }

    #[test]
    fn save_load_roundtrip_is_exact() {
        let passages = vec![
            Passage::new("d1", "The cats were running fast."),
            Passage::new("d2", "A dog sat on the mat!"),
            Passage::new("d3", ""),
        ];
        let idx = build_bm25(
            &passages,
            &TokenizerConfig::sparse_default(),
            Bm25Params::default(),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("idx.bm25");
        save_bm25(&idx, &path).unwrap();
        let loaded = load_bm25(&path).unwrap();
        assert_eq!(idx, loaded);
    }

    #[test]
    fn load_rejects_bad_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.bm25");
        std::fs::write(&bad, b"NOT-AN-INDEX").unwrap();
        assert!(matches!(load_bm25(&bad), Err(Error::BadMagic { .. })));

        let idx = two_doc_index();
        let path = dir.path().join("ok.bm25");
        save_bm25(&idx, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let cut = dir.path().join("cut.bm25");
        std::fs::write(&cut, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load_bm25(&cut), Err(Error::Truncated(_))));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn toy_corpus() -> impl Strategy<Value = Vec<Passage>> {
            proptest::collection::vec("[a-e ]{0,20}", 1..8).prop_map(|texts| {
                texts
                    .into_iter()
                    .enumerate()
                    .map(|(i, t)| Passage::new(format!("p{i}"), t))
                    .collect()
            })
        }

        proptest! {
            /// Full-k search ordering matches exhaustive per-doc scoring.
            #[test]
            fn search_matches_exhaustive_scoring(
                passages in toy_corpus(),
                query in "[a-e ]{0,12}",
            ) {
                let cfg = plain_config();
                let idx = build_bm25(&passages, &cfg, Bm25Params::default()).unwrap();
                let got = bm25_search(&idx, &query, passages.len());

                let qtok = tokenize(&cfg, &query);
                let brute: Vec<(String, f64)> = passages
                    .iter()
                    .map(|p| (p.id.clone(), bm25_score(&idx, &qtok, &p.id).unwrap()))
                    .filter(|&(_, s)| s > 0.0)
                    .collect();
                let want = RankedResult::from_scores(brute, passages.len());
                prop_assert_eq!(got, want);
            }

            /// Terms absent from a doc never change its score.
            #[test]
            fn absent_terms_contribute_zero(query in "[a-c]{1,6}") {
                let idx = two_doc_index();
                let base = tokenize(&plain_config(), "cat");
                let with_noise = tokenize(&plain_config(), &format!("cat zzz{query}"));
                let s_base = bm25_score(&idx, &base, "d1").unwrap();
                let s_noise = bm25_score(&idx, &with_noise, "d1").unwrap();
                prop_assert!((s_base - s_noise).abs() < 1e-12);
            }
        }
    }
}
