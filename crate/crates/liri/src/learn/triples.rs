//! Training-triple curation: self-directed hard negatives, the all-negatives
//! baseline, and term-matching-guided negatives.
//!
//! The curation rule, given a ranking for query `q` whose gold passage sits
//! at rank `i` within the top `m`:
//!
//! - `i > 1`: one triple per passage ranked above the gold, negatives in rank
//!   order — exactly the passages the current model prefers over the answer;
//! - `i = 1`: the model already got it right, so emit `r_rand` triples with
//!   random gold-free negatives to keep the query represented;
//! - gold absent from the top `m`: every top-`m` passage outranks the gold,
//!   so all of them become negatives.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::data::Query;
use crate::error::{Error, Result};
use crate::io_util::atomic_write;
use crate::rank::RankedResult;
use crate::sparse::{bm25_search, Bm25Index};

/// One training unit: a query, its gold passage, and a negative.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingTriple {
    pub query_id: String,
    pub pos_id: String,
    pub neg_id: String,
}

impl TrainingTriple {
    pub fn new(
        query_id: impl Into<String>,
        pos_id: impl Into<String>,
        neg_id: impl Into<String>,
    ) -> Self {
        let t = TrainingTriple {
            query_id: query_id.into(),
            pos_id: pos_id.into(),
            neg_id: neg_id.into(),
        };
        debug_assert_ne!(t.pos_id, t.neg_id);
        t
    }
}

/// A curated batch, tagged with the checkpoint version whose rankings
/// produced it. An empty batch means the curating checkpoint ranked every
/// training query's gold first while `r_rand` was 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripleBatch {
    pub triples: Vec<TrainingTriple>,
    pub curated_by_version: u64,
}

impl TripleBatch {
    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }
}

/// Curate hard-negative triples from per-query rankings.
///
/// `rankings` must contain every query in `qrels`; `corpus_ids` supplies the
/// pool for random negatives on rank-1 hits (capped at corpus size minus the
/// gold). Queries are processed in id order, so output is deterministic for
/// a fixed rng.
pub fn curate_triples(
    rankings: &BTreeMap<String, RankedResult>,
    qrels: &BTreeMap<String, String>,
    corpus_ids: &[String],
    m: usize,
    r_rand: usize,
    rng: &mut ChaCha8Rng,
    curated_by_version: u64,
) -> Result<TripleBatch> {
    let mut triples = Vec::new();
    for (query_id, gold) in qrels {
        let ranking = rankings
            .get(query_id)
            .ok_or_else(|| Error::MissingRanking(query_id.clone()))?;
        let top_m = &ranking.items()[..ranking.len().min(m)];
        match top_m.iter().position(|(id, _)| id == gold) {
            Some(0) => {
                let mut pool: Vec<&String> =
                    corpus_ids.iter().filter(|id| *id != gold).collect();
                pool.shuffle(rng);
                for neg in pool.into_iter().take(r_rand) {
                    triples.push(TrainingTriple::new(query_id, gold, neg));
                }
            }
            Some(i) => {
                for (neg, _) in &top_m[..i] {
                    triples.push(TrainingTriple::new(query_id, gold, neg));
                }
            }
            None => {
                for (neg, _) in top_m {
                    triples.push(TrainingTriple::new(query_id, gold, neg));
                }
            }
        }
    }
    Ok(TripleBatch {
        triples,
        curated_by_version,
    })
}

/// One triple per (query, non-gold passage) pair: the exhaustive baseline.
pub fn all_negatives_triples(
    queries: &[Query],
    corpus_ids: &[String],
) -> TripleBatch {
    let mut triples = Vec::new();
    for q in queries {
        for neg in corpus_ids.iter().filter(|id| **id != q.gold) {
            triples.push(TrainingTriple::new(&q.id, &q.gold, neg));
        }
    }
    TripleBatch {
        triples,
        curated_by_version: 0,
    }
}

/// The curation rule applied to term-matching rankings instead of the
/// model's own.
pub fn bm25_guided_triples(
    index: &Bm25Index,
    queries: &[Query],
    m: usize,
    r_rand: usize,
    rng: &mut ChaCha8Rng,
) -> Result<TripleBatch> {
    let mut rankings = BTreeMap::new();
    let mut qrels = BTreeMap::new();
    for q in queries {
        rankings.insert(q.id.clone(), bm25_search(index, &q.text, m));
        qrels.insert(q.id.clone(), q.gold.clone());
    }
    curate_triples(
        &rankings,
        &qrels,
        index.doc_ids(),
        m,
        r_rand,
        rng,
        0,
    )
}

/// Tab-separated dump: `query_id <TAB> pos_id <TAB> neg_id`, one per line.
pub fn save_triples(batch: &TripleBatch, path: &Path) -> Result<()> {
    atomic_write(path, |buf| {
        for t in &batch.triples {
            buf.extend_from_slice(
                format!("{}\t{}\t{}\n", t.query_id, t.pos_id, t.neg_id).as_bytes(),
            );
        }
    })
}

/// Append triples to an existing dump (used by multi-round training).
pub fn append_triples(batch: &TripleBatch, path: &Path) -> Result<()> {
    use std::io::Write;
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    for t in &batch.triples {
        writeln!(file, "{}\t{}\t{}", t.query_id, t.pos_id, t.neg_id)
            .map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn ranking(ids: &[&str]) -> RankedResult {
        let scores: Vec<(String, f64)> = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.to_string(), (ids.len() - i) as f64))
            .collect();
        RankedResult::from_scores(scores, ids.len())
    }

    fn corpus(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("p{i}")).collect()
    }

    #[test]
    fn negatives_are_the_passages_above_gold() {
        let mut rankings = BTreeMap::new();
        rankings.insert("q".to_string(), ranking(&["p9", "p4", "p7", "p2", "p8"]));
        let mut qrels = BTreeMap::new();
        qrels.insert("q".to_string(), "p7".to_string());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch =
            curate_triples(&rankings, &qrels, &corpus(9), 5, 3, &mut rng, 4).unwrap();
        assert_eq!(batch.curated_by_version, 4);
        assert_eq!(
            batch.triples,
            vec![
                TrainingTriple::new("q", "p7", "p9"),
                TrainingTriple::new("q", "p7", "p4"),
            ]
        );
    }

    #[test]
    fn rank_one_hits_draw_random_gold_free_negatives() {
        let mut rankings = BTreeMap::new();
        rankings.insert("q".to_string(), ranking(&["p1", "p2", "p3"]));
        let mut qrels = BTreeMap::new();
        qrels.insert("q".to_string(), "p1".to_string());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch =
            curate_triples(&rankings, &qrels, &corpus(8), 3, 3, &mut rng, 0).unwrap();
        assert_eq!(batch.len(), 3);
        let mut negs: Vec<&str> = batch.triples.iter().map(|t| t.neg_id.as_str()).collect();
        assert!(negs.iter().all(|&n| n != "p1"));
        negs.sort_unstable();
        negs.dedup();
        assert_eq!(negs.len(), 3, "negatives drawn without replacement");
    }

    #[test]
    fn gold_outside_top_m_uses_all_of_it() {
        let mut rankings = BTreeMap::new();
        rankings.insert("q".to_string(), ranking(&["p2", "p3", "p4", "p5", "p6"]));
        let mut qrels = BTreeMap::new();
        qrels.insert("q".to_string(), "p9".to_string());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch =
            curate_triples(&rankings, &qrels, &corpus(9), 5, 3, &mut rng, 0).unwrap();
        assert_eq!(batch.len(), 5);
        let negs: Vec<&str> = batch.triples.iter().map(|t| t.neg_id.as_str()).collect();
        assert_eq!(negs, ["p2", "p3", "p4", "p5", "p6"]);
    }

    #[test]
    fn missing_ranking_is_an_error() {
        let rankings = BTreeMap::new();
        let mut qrels = BTreeMap::new();
        qrels.insert("lost".to_string(), "p1".to_string());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err =
            curate_triples(&rankings, &qrels, &corpus(3), 5, 3, &mut rng, 0).unwrap_err();
        assert!(matches!(err, Error::MissingRanking(q) if q == "lost"));
    }

    #[test]
    fn all_negatives_counts() {
        let queries = vec![
            Query::new("q1", "text", "p1"),
            Query::new("q2", "text", "p2"),
        ];
        let batch = all_negatives_triples(&queries, &corpus(3));
        assert_eq!(batch.len(), 4);
        assert!(batch.triples.iter().all(|t| t.pos_id != t.neg_id));

        let single = all_negatives_triples(&[Query::new("q", "t", "p1")], &corpus(1));
        assert!(single.is_empty());
    }

    #[test]
    fn bm25_guided_follows_the_same_rule() {
        use crate::sparse::{build_bm25, Bm25Params, Passage};
        use crate::text::TokenizerConfig;
        let passages = vec![
            Passage::new("p1", "apple banana"),
            Passage::new("p2", "cherry banana"),
            Passage::new("p3", "durian elderberry"),
        ];
        let idx = build_bm25(
            &passages,
            &TokenizerConfig::dense_default(),
            Bm25Params::default(),
        )
        .unwrap();
        // gold p2 but the query favors p1 lexically: negative = p1 only
        let queries = vec![Query::new("q1", "apple banana", "p2")];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch = bm25_guided_triples(&idx, &queries, 20, 3, &mut rng).unwrap();
        assert_eq!(batch.triples, vec![TrainingTriple::new("q1", "p2", "p1")]);

        // gold ranked first: r_rand random negatives
        let queries = vec![Query::new("q2", "durian", "p3")];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch = bm25_guided_triples(&idx, &queries, 20, 2, &mut rng).unwrap();
        assert_eq!(batch.len(), 2);
        assert!(batch.triples.iter().all(|t| t.neg_id != "p3"));

        // deterministic under a fixed seed
        let mut rng_a = ChaCha8Rng::seed_from_u64(9);
        let mut rng_b = ChaCha8Rng::seed_from_u64(9);
        let a = bm25_guided_triples(&idx, &queries, 20, 2, &mut rng_a).unwrap();
        let b = bm25_guided_triples(&idx, &queries, 20, 2, &mut rng_b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn triples_file_shape() {
        let batch = TripleBatch {
            triples: vec![
                TrainingTriple::new("q1", "p1", "p2"),
                TrainingTriple::new("q2", "p3", "p4"),
            ],
            curated_by_version: 1,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("triples.tsv");
        save_triples(&batch, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "q1\tp1\tp2\nq2\tp3\tp4\n");
        append_triples(&batch, &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 4);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            /// For gold at rank i in (1, m], the negatives are exactly the
            /// i-1 passages ranked above it.
            #[test]
            fn triple_count_law(
                n in 2usize..30,
                gold_pos in 0usize..30,
                m in 1usize..25,
            ) {
                let gold_pos = gold_pos % n;
                let ids: Vec<String> = (0..n).map(|i| format!("p{i}")).collect();
                let mut rankings = BTreeMap::new();
                let id_refs: Vec<&str> = ids.iter().map(|s| s.as_str()).collect();
                rankings.insert("q".to_string(), ranking(&id_refs));
                let mut qrels = BTreeMap::new();
                qrels.insert("q".to_string(), ids[gold_pos].clone());
                let mut rng = ChaCha8Rng::seed_from_u64(0);
                let batch = curate_triples(&rankings, &qrels, &ids, m, 2, &mut rng, 0).unwrap();

                let top_m = n.min(m);
                if gold_pos == 0 {
                    prop_assert_eq!(batch.len(), 2.min(n - 1));
                } else if gold_pos < top_m {
                    prop_assert_eq!(batch.len(), gold_pos);
                    let negs: Vec<&str> = batch.triples.iter().map(|t| t.neg_id.as_str()).collect();
                    let expect: Vec<&str> = id_refs[..gold_pos].to_vec();
                    prop_assert_eq!(negs, expect);
                } else {
                    prop_assert_eq!(batch.len(), top_m);
                }
            }
        }
    }
}
