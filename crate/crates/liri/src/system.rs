//! Retrieval systems behind one interface, so the evaluation protocol and
//! the benchmark harness can drive any of them.

use std::collections::BTreeMap;

use crate::dense::{
    dense_score_all, dense_search, search_exact, token_index_bytes, SearchMode, TokenVectorIndex,
};
use crate::encoder::EncoderParams;
use crate::error::Result;
use crate::evalbench::{ensemble_scores, EnsembleWeights};
use crate::rank::RankedResult;
use crate::sparse::{bm25_index_bytes, bm25_score_all, bm25_search, Bm25Index};

/// A retrieval system: text in, ranking out. `rank` includes query
/// preprocessing, so latency measured around it is end to end.
pub trait SearchSystem {
    fn name(&self) -> &str;
    fn rank(&self, query_text: &str, k: usize) -> Result<RankedResult>;
    /// Scores over the full corpus (for ensembling).
    fn score_all(&self, query_text: &str) -> Result<BTreeMap<String, f64>>;
    /// Serialized index footprint plus any parameter bytes.
    fn index_bytes(&self) -> u64;
}

/// Term-matching retrieval over the inverted index.
pub struct Bm25System {
    pub index: Bm25Index,
}

impl SearchSystem for Bm25System {
    fn name(&self) -> &str {
        "bm25"
    }

    fn rank(&self, query_text: &str, k: usize) -> Result<RankedResult> {
        Ok(bm25_search(&self.index, query_text, k))
    }

    fn score_all(&self, query_text: &str) -> Result<BTreeMap<String, f64>> {
        Ok(bm25_score_all(&self.index, query_text))
    }

    fn index_bytes(&self) -> u64 {
        bm25_index_bytes(&self.index)
    }
}

/// Dense retrieval over the token index, late-interaction or single-vector.
pub struct DenseSystem {
    pub params: EncoderParams,
    pub index: TokenVectorIndex,
    pub mode: SearchMode,
    pub k_tok: usize,
    pub nprobe: usize,
    /// Skip candidate generation and re-rank the whole corpus.
    pub exhaustive: bool,
}

impl DenseSystem {
    pub fn name_for_mode(mode: SearchMode) -> &'static str {
        match mode {
            SearchMode::LateInteraction => "dense",
            SearchMode::SingleVector => "single_vector",
        }
    }
}

impl SearchSystem for DenseSystem {
    fn name(&self) -> &str {
        Self::name_for_mode(self.mode)
    }

    fn rank(&self, query_text: &str, k: usize) -> Result<RankedResult> {
        if self.exhaustive && self.mode == SearchMode::LateInteraction {
            search_exact(&self.index, &self.params, query_text, k)
        } else {
            dense_search(
                &self.index,
                &self.params,
                query_text,
                k,
                self.k_tok,
                self.nprobe,
                self.mode,
            )
        }
    }

    fn score_all(&self, query_text: &str) -> Result<BTreeMap<String, f64>> {
        dense_score_all(&self.index, &self.params, query_text)
    }

    fn index_bytes(&self) -> u64 {
        token_index_bytes(&self.index) + self.params.table_bytes()
    }
}

/// Linear combination of two systems' full score maps.
pub struct EnsembleSystem {
    pub name: String,
    pub first: Box<dyn SearchSystem>,
    pub second: Box<dyn SearchSystem>,
    pub weights: EnsembleWeights,
}

impl SearchSystem for EnsembleSystem {
    fn name(&self) -> &str {
        &self.name
    }

    fn rank(&self, query_text: &str, k: usize) -> Result<RankedResult> {
        let a = self.first.score_all(query_text)?;
        let b = self.second.score_all(query_text)?;
        let full = ensemble_scores(&a, &b, &self.weights)?;
        Ok(RankedResult::from_scores(
            full.items().to_vec(),
            k,
        ))
    }

    fn score_all(&self, query_text: &str) -> Result<BTreeMap<String, f64>> {
        let a = self.first.score_all(query_text)?;
        let b = self.second.score_all(query_text)?;
        Ok(a.into_iter()
            .map(|(id, sa)| {
                let sb = b[&id];
                (id, self.weights.w_a * sa + self.weights.w_b * sb)
            })
            .collect())
    }

    fn index_bytes(&self) -> u64 {
        self.first.index_bytes() + self.second.index_bytes()
    }
}
