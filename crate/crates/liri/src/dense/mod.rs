//! Late-interaction and single-vector dense retrieval.
//!
//! Passages are encoded offline into per-token vectors. At query time the
//! query is encoded once; candidate passages are fetched by per-query-token
//! nearest-neighbor lookup (optionally through an IVF coarse quantizer) and
//! re-ranked exactly by the sum of per-query-token maximum similarities.
//!
//! # Index file format (`LIRI-TVIX-v1`)
//!
//! All integers little-endian; strings are `u32` length + UTF-8 bytes.
//!
//! ```text
//! magic          12 bytes  "LIRI-TVIX-v1"
//! version        u64   checkpoint version the index was built from
//! similarity     u8    (0 = neg_l2, 1 = dot)
//! dim            u32
//! build_seed     u64
//! n_passages     u32
//! per passage    string id, u32 n_rows,
//!                n_rows x dim f32 token vectors,
//!                n_rows x u32 bucket ids
//! n_entries      u64
//! entries        n x (u32 passage_index, u32 token_offset)
//! ivf            u8 flag; if 1: u32 clusters,
//!                clusters x dim f32 centroids,
//!                n_entries x u32 assignments
//! ```

mod ivf;

pub use ivf::KMeansFit;

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use byteorder::{LittleEndian, WriteBytesExt};

use crate::encoder::{encode, encode_single, EncoderParams, Role, Similarity, TokenMatrix};
use crate::error::{Error, Result};
use crate::io_util::{atomic_write, write_f32s, write_string, FileReader};
use crate::rank::RankedResult;
use crate::sparse::Passage;
use crate::text::{tokenize, TokenizerConfig};

pub const TVIX_MAGIC: &str = "LIRI-TVIX-v1";

/// How `dense_search` ranks passages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMode {
    /// Fetch candidates per query token, re-rank by summed max similarity.
    LateInteraction,
    /// Mean-pool both sides, rank by dot product, exhaustively.
    SingleVector,
}

/// Token-level similarity between two equal-length vectors.
pub fn sim(u: &[f32], v: &[f32], mode: Similarity) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    Ok(sim_unchecked(u, v, mode))
}

#[inline]
fn sim_unchecked(u: &[f32], v: &[f32], mode: Similarity) -> f64 {
    match mode {
        Similarity::NegL2 => {
            let mut acc = 0f64;
            for (&a, &b) in u.iter().zip(v) {
                let d = a as f64 - b as f64;
                acc += d * d;
            }
            -acc
        }
        Similarity::Dot => {
            let mut acc = 0f64;
            for (&a, &b) in u.iter().zip(v) {
                acc += a as f64 * b as f64;
            }
            acc
        }
    }
}

/// Sum over query rows of the maximum similarity to any passage row.
/// An empty query scores 0; an empty passage is an error.
pub fn summaxsim(query: &TokenMatrix, passage: &TokenMatrix, mode: Similarity) -> Result<f64> {
    Ok(summaxsim_argmax(query, passage, mode)?.0)
}

/// As `summaxsim`, also reporting the argmax passage row per query row
/// (first index wins on ties); used for gradient routing.
pub(crate) fn summaxsim_argmax(
    query: &TokenMatrix,
    passage: &TokenMatrix,
    mode: Similarity,
) -> Result<(f64, Vec<u32>)> {
    if passage.is_empty() {
        return Err(Error::EmptyPassage);
    }
    if query.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    if query.dim() != passage.dim() {
        return Err(Error::DimensionMismatch {
            left: query.dim(),
            right: passage.dim(),
        });
    }
    let mut total = 0f64;
    let mut argmax = Vec::with_capacity(query.n_rows());
    for qi in 0..query.n_rows() {
        let q = query.row(qi);
        let mut best = f64::NEG_INFINITY;
        let mut best_j = 0u32;
        for pj in 0..passage.n_rows() {
            let s = sim_unchecked(q, passage.row(pj), mode);
            if s > best {
                best = s;
                best_j = pj as u32;
            }
        }
        total += best;
        argmax.push(best_j);
    }
    Ok((total, argmax))
}

/// Dot product between pooled query and passage vectors.
pub fn single_vector_score(qv: &[f32], pv: &[f32]) -> Result<f64> {
    sim(qv, pv, Similarity::Dot)
}

/// Immutable token-level vector index over a corpus, tied to the checkpoint
/// version that encoded it.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenVectorIndex {
    built_from_version: u64,
    similarity: Similarity,
    dim: usize,
    build_seed: u64,
    passage_ids: Vec<String>,
    id_to_idx: HashMap<String, u32>,
    matrices: Vec<TokenMatrix>,
    /// (passage index, token offset) per token vector, corpus order.
    entries: Vec<(u32, u32)>,
    ivf: Option<IvfData>,
}

#[derive(Debug, Clone, PartialEq)]
struct IvfData {
    clusters: usize,
    centroids: Vec<f32>,
    assignments: Vec<u32>,
    /// Entry indexes per cluster, derived from `assignments`.
    lists: Vec<Vec<u32>>,
}

impl IvfData {
    fn from_fit(fit: KMeansFit) -> Self {
        let mut lists = vec![Vec::new(); fit.clusters];
        for (entry, &c) in fit.assignments.iter().enumerate() {
            lists[c as usize].push(entry as u32);
        }
        IvfData {
            clusters: fit.clusters,
            centroids: fit.centroids,
            assignments: fit.assignments,
            lists,
        }
    }
}

/// Build the token index for `passages` under `params`.
///
/// Passages whose text tokenizes to nothing are skipped: they have no token
/// vectors to match and can never be returned by the dense path. With
/// `ivf_clusters` set, a k-means coarse quantizer is fit over all token
/// vectors with the given seed.
pub fn build_token_index(
    params: &EncoderParams,
    passages: &[Passage],
    ivf_clusters: Option<usize>,
    seed: u64,
) -> Result<TokenVectorIndex> {
    if passages.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let tokenizer = TokenizerConfig::dense_default();
    let mut passage_ids = Vec::new();
    let mut id_to_idx = HashMap::new();
    let mut matrices = Vec::new();
    let mut entries = Vec::new();
    for passage in passages {
        if id_to_idx.contains_key(&passage.id) {
            return Err(Error::DuplicateId(passage.id.clone()));
        }
        let matrix = encode(params, &tokenize(&tokenizer, &passage.text), Role::Doc);
        if matrix.is_empty() {
            continue;
        }
        let pidx = passage_ids.len() as u32;
        id_to_idx.insert(passage.id.clone(), pidx);
        for offset in 0..matrix.n_rows() as u32 {
            entries.push((pidx, offset));
        }
        passage_ids.push(passage.id.clone());
        matrices.push(matrix);
    }
    if entries.is_empty() {
        return Err(Error::invalid("corpus", "no passage produced any tokens"));
    }

    let ivf = match ivf_clusters {
        None => None,
        Some(k) => {
            if k == 0 || k > entries.len() {
                return Err(Error::TooManyClusters {
                    requested: k,
                    available: entries.len(),
                });
            }
            let dim = params.config().dim;
            let mut flat = Vec::with_capacity(entries.len() * dim);
            for &(p, o) in &entries {
                flat.extend_from_slice(matrices[p as usize].row(o as usize));
            }
            Some(IvfData::from_fit(ivf::fit(
                &flat,
                entries.len(),
                dim,
                k,
                seed,
            )))
        }
    };

    Ok(TokenVectorIndex {
        built_from_version: params.version(),
        similarity: params.config().similarity,
        dim: params.config().dim,
        build_seed: seed,
        passage_ids,
        id_to_idx,
        matrices,
        entries,
        ivf,
    })
}

/// Rebuild for fresh params, keeping the previous IVF configuration and seed.
pub fn refresh_index(
    params: &EncoderParams,
    passages: &[Passage],
    prev: &TokenVectorIndex,
) -> Result<TokenVectorIndex> {
    build_token_index(params, passages, prev.ivf_clusters(), prev.build_seed)
}

impl TokenVectorIndex {
    pub fn built_from_version(&self) -> u64 {
        self.built_from_version
    }

    pub fn similarity(&self) -> Similarity {
        self.similarity
    }

    pub fn n_passages(&self) -> usize {
        self.passage_ids.len()
    }

    pub fn n_entries(&self) -> usize {
        self.entries.len()
    }

    pub fn ivf_clusters(&self) -> Option<usize> {
        self.ivf.as_ref().map(|i| i.clusters)
    }

    pub fn passage_ids(&self) -> &[String] {
        &self.passage_ids
    }

    pub fn matrix(&self, passage_id: &str) -> Option<&TokenMatrix> {
        self.id_to_idx
            .get(passage_id)
            .map(|&i| &self.matrices[i as usize])
    }

    fn entry_vec(&self, entry: usize) -> &[f32] {
        let (p, o) = self.entries[entry];
        self.matrices[p as usize].row(o as usize)
    }

    fn check_version(&self, params: &EncoderParams) -> Result<()> {
        if params.version() != self.built_from_version {
            return Err(Error::StaleIndex {
                index_version: self.built_from_version,
                params_version: params.version(),
            });
        }
        Ok(())
    }
}

/// Entry indexes to scan for one query row, honoring the IVF probe setting.
fn probe_entries(index: &TokenVectorIndex, q: &[f32], nprobe: usize) -> Vec<u32> {
    match &index.ivf {
        None => (0..index.entries.len() as u32).collect(),
        Some(ivf) => {
            let mut ranked: Vec<(f64, usize)> = (0..ivf.clusters)
                .map(|c| {
                    let cent = &ivf.centroids[c * index.dim..(c + 1) * index.dim];
                    (sim_unchecked(q, cent, index.similarity), c)
                })
                .collect();
            ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            ranked
                .iter()
                .take(nprobe.max(1))
                .flat_map(|&(_, c)| ivf.lists[c].iter().copied())
                .collect()
        }
    }
}

fn candidate_indexes(
    index: &TokenVectorIndex,
    query: &TokenMatrix,
    k_tok: usize,
    nprobe: usize,
) -> Vec<u32> {
    let mut passages = BTreeSet::new();
    for qi in 0..query.n_rows() {
        let q = query.row(qi);
        let pool = probe_entries(index, q, nprobe);
        let mut scored: Vec<(f64, u32)> = pool
            .into_iter()
            .map(|e| (sim_unchecked(q, index.entry_vec(e as usize), index.similarity), e))
            .collect();
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        for &(_, e) in scored.iter().take(k_tok) {
            passages.insert(index.entries[e as usize].0);
        }
    }
    passages.into_iter().collect()
}

/// Passage ids owning the `k_tok` nearest token vectors of each query row.
/// With IVF, only the `nprobe` closest centroids' entries are scanned.
pub fn ann_candidates(
    index: &TokenVectorIndex,
    query: &TokenMatrix,
    k_tok: usize,
    nprobe: usize,
) -> BTreeSet<String> {
    candidate_indexes(index, query, k_tok, nprobe)
        .into_iter()
        .map(|p| index.passage_ids[p as usize].clone())
        .collect()
}

/// Retrieve the top `k` passages for `query_text`.
///
/// `params` must be the checkpoint the index was built from; anything newer
/// or older is a stale-index error and the caller should refresh first.
pub fn dense_search(
    index: &TokenVectorIndex,
    params: &EncoderParams,
    query_text: &str,
    k: usize,
    k_tok: usize,
    nprobe: usize,
    mode: SearchMode,
) -> Result<RankedResult> {
    index.check_version(params)?;
    let tokens = tokenize(&TokenizerConfig::dense_default(), query_text);
    match mode {
        SearchMode::LateInteraction => {
            let query = encode(params, &tokens, Role::Query);
            if query.is_empty() {
                return Ok(RankedResult::empty());
            }
            let candidates = candidate_indexes(index, &query, k_tok, nprobe);
            let mut scores = Vec::with_capacity(candidates.len());
            for p in candidates {
                let s = summaxsim(&query, &index.matrices[p as usize], index.similarity)?;
                scores.push((index.passage_ids[p as usize].clone(), s));
            }
            Ok(RankedResult::from_scores(scores, k))
        }
        SearchMode::SingleVector => {
            if tokens.is_empty() {
                return Ok(RankedResult::empty());
            }
            let qv = encode_single(params, &tokens, Role::Query)?;
            let mut scores = Vec::with_capacity(index.n_passages());
            for (pidx, id) in index.passage_ids.iter().enumerate() {
                let pv = pooled(&index.matrices[pidx]);
                scores.push((id.clone(), single_vector_score(&qv, &pv)?));
            }
            Ok(RankedResult::from_scores(scores, k))
        }
    }
}

/// Late-interaction ranking over every indexed passage, skipping candidate
/// generation entirely. This is the reference scoring path used for training
/// accuracy checks and small corpora.
pub fn search_exact(
    index: &TokenVectorIndex,
    params: &EncoderParams,
    query_text: &str,
    k: usize,
) -> Result<RankedResult> {
    index.check_version(params)?;
    let tokens = tokenize(&TokenizerConfig::dense_default(), query_text);
    let query = encode(params, &tokens, Role::Query);
    if query.is_empty() {
        return Ok(RankedResult::empty());
    }
    let mut scores = Vec::with_capacity(index.n_passages());
    for (pidx, id) in index.passage_ids.iter().enumerate() {
        let s = summaxsim(&query, &index.matrices[pidx], index.similarity)?;
        scores.push((id.clone(), s));
    }
    Ok(RankedResult::from_scores(scores, k))
}

/// Exact top-`k` late-interaction ranking, equivalent to
/// `search_exact(..., k)` entry for entry.
///
/// Under neg_l2 every per-row maximum is <= 0, so a passage's partial sum
/// only decreases as query rows are consumed; once it drops strictly below
/// the current kth score the passage cannot reach the top `k` (tie-breaks
/// favor smaller ids only at equal scores) and scoring is abandoned. Dot
/// similarity admits no such bound and is scored in full.
pub fn search_exact_topk(
    index: &TokenVectorIndex,
    params: &EncoderParams,
    query_text: &str,
    k: usize,
) -> Result<RankedResult> {
    index.check_version(params)?;
    let tokens = tokenize(&TokenizerConfig::dense_default(), query_text);
    let query = encode(params, &tokens, Role::Query);
    if query.is_empty() || k == 0 {
        return Ok(RankedResult::empty());
    }
    let prune = index.similarity == Similarity::NegL2;
    // top slots sorted best-first by (score desc, id asc)
    let mut top: Vec<(f64, u32)> = Vec::with_capacity(k + 1);
    let better = |a: &(f64, u32), b: &(f64, u32), ids: &[String]| {
        a.0 > b.0 || (a.0 == b.0 && ids[a.1 as usize] < ids[b.1 as usize])
    };
    for pidx in 0..index.matrices.len() {
        let passage = &index.matrices[pidx];
        let bound = if top.len() == k { top[k - 1].0 } else { f64::NEG_INFINITY };
        let mut score = 0.0;
        let mut aborted = false;
        for qi in 0..query.n_rows() {
            let q = query.row(qi);
            let mut best = f64::NEG_INFINITY;
            for pj in 0..passage.n_rows() {
                let s = sim_unchecked(q, passage.row(pj), index.similarity);
                if s > best {
                    best = s;
                }
            }
            score += best;
            if prune && score < bound {
                aborted = true;
                break;
            }
        }
        if aborted {
            continue;
        }
        let entry = (score, pidx as u32);
        if top.len() == k && !better(&entry, &top[k - 1], &index.passage_ids) {
            continue;
        }
        let pos = top
            .iter()
            .position(|slot| better(&entry, slot, &index.passage_ids))
            .unwrap_or(top.len());
        top.insert(pos, entry);
        top.truncate(k);
    }
    Ok(RankedResult::from_scores(
        top.into_iter()
            .map(|(s, pidx)| (index.passage_ids[pidx as usize].clone(), s))
            .collect(),
        k,
    ))
}

/// Full late-interaction score map over every indexed passage.
pub fn dense_score_all(
    index: &TokenVectorIndex,
    params: &EncoderParams,
    query_text: &str,
) -> Result<std::collections::BTreeMap<String, f64>> {
    index.check_version(params)?;
    let tokens = tokenize(&TokenizerConfig::dense_default(), query_text);
    let query = encode(params, &tokens, Role::Query);
    let mut out = std::collections::BTreeMap::new();
    for (pidx, id) in index.passage_ids.iter().enumerate() {
        let s = if query.is_empty() {
            0.0
        } else {
            summaxsim(&query, &index.matrices[pidx], index.similarity)?
        };
        out.insert(id.clone(), s);
    }
    Ok(out)
}

fn pooled(matrix: &TokenMatrix) -> Vec<f32> {
    let n = matrix.n_rows() as f64;
    let mut acc = vec![0f64; matrix.dim()];
    for row in matrix.rows() {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += *v as f64;
        }
    }
    acc.into_iter().map(|a| (a / n) as f32).collect()
}

/// Serialized size in bytes, without touching disk.
pub fn token_index_bytes(index: &TokenVectorIndex) -> u64 {
    let mut buf = Vec::new();
    write_token_index(index, &mut buf);
    buf.len() as u64
}

/// Persist the index; see the module docs for the exact layout.
pub fn save_token_index(index: &TokenVectorIndex, path: &Path) -> Result<()> {
    atomic_write(path, |buf| write_token_index(index, buf))
}

fn write_token_index(index: &TokenVectorIndex, buf: &mut Vec<u8>) {
    {
        buf.extend_from_slice(TVIX_MAGIC.as_bytes());
        buf.write_u64::<LittleEndian>(index.built_from_version).unwrap();
        buf.push(match index.similarity {
            Similarity::NegL2 => 0,
            Similarity::Dot => 1,
        });
        buf.write_u32::<LittleEndian>(index.dim as u32).unwrap();
        buf.write_u64::<LittleEndian>(index.build_seed).unwrap();
        buf.write_u32::<LittleEndian>(index.passage_ids.len() as u32).unwrap();
        for (id, matrix) in index.passage_ids.iter().zip(&index.matrices) {
            write_string(buf, id);
            buf.write_u32::<LittleEndian>(matrix.n_rows() as u32).unwrap();
            for row in matrix.rows() {
                write_f32s(buf, row);
            }
            for &b in matrix.bucket_ids() {
                buf.write_u32::<LittleEndian>(b).unwrap();
            }
        }
        buf.write_u64::<LittleEndian>(index.entries.len() as u64).unwrap();
        for &(p, o) in &index.entries {
            buf.write_u32::<LittleEndian>(p).unwrap();
            buf.write_u32::<LittleEndian>(o).unwrap();
        }
        match &index.ivf {
            None => buf.push(0),
            Some(ivf) => {
                buf.push(1);
                buf.write_u32::<LittleEndian>(ivf.clusters as u32).unwrap();
                write_f32s(buf, &ivf.centroids);
                for &a in &ivf.assignments {
                    buf.write_u32::<LittleEndian>(a).unwrap();
                }
            }
        }
    }
}

pub fn load_token_index(path: &Path) -> Result<TokenVectorIndex> {
    let mut r = FileReader::open(path)?;
    r.expect_magic(TVIX_MAGIC)?;
    let built_from_version = r.read_u64()?;
    let similarity = match r.read_u8()? {
        0 => Similarity::NegL2,
        1 => Similarity::Dot,
        other => {
            return Err(Error::invalid("similarity tag", format!("{other}")));
        }
    };
    let dim = r.read_u32()? as usize;
    let build_seed = r.read_u64()?;
    let n_passages = r.read_u32()? as usize;
    let mut passage_ids = Vec::with_capacity(n_passages);
    let mut id_to_idx = HashMap::with_capacity(n_passages);
    let mut matrices = Vec::with_capacity(n_passages);
    for pidx in 0..n_passages {
        let id = r.read_string()?;
        let n_rows = r.read_u32()? as usize;
        let data = r.read_f32s(n_rows * dim)?;
        let mut bucket_ids = Vec::with_capacity(n_rows);
        for _ in 0..n_rows {
            bucket_ids.push(r.read_u32()?);
        }
        if id_to_idx.insert(id.clone(), pidx as u32).is_some() {
            return Err(Error::DuplicateId(id));
        }
        passage_ids.push(id);
        matrices.push(TokenMatrix::from_parts(dim, data, bucket_ids));
    }
    let n_entries = r.read_u64()? as usize;
    let mut entries = Vec::with_capacity(n_entries);
    for _ in 0..n_entries {
        let p = r.read_u32()?;
        let o = r.read_u32()?;
        if p as usize >= n_passages || o as usize >= matrices[p as usize].n_rows() {
            return Err(Error::Malformed {
                path: r.path().to_path_buf(),
                line: 0,
                msg: format!("entry ({p},{o}) out of range"),
            });
        }
        entries.push((p, o));
    }
    let ivf = match r.read_u8()? {
        0 => None,
        _ => {
            let clusters = r.read_u32()? as usize;
            let centroids = r.read_f32s(clusters * dim)?;
            let mut assignments = Vec::with_capacity(n_entries);
            let mut lists = vec![Vec::new(); clusters];
            for e in 0..n_entries {
                let a = r.read_u32()?;
                if a as usize >= clusters {
                    return Err(Error::Malformed {
                        path: r.path().to_path_buf(),
                        line: 0,
                        msg: format!("assignment {a} out of range"),
                    });
                }
                lists[a as usize].push(e as u32);
                assignments.push(a);
            }
            Some(IvfData {
                clusters,
                centroids,
                assignments,
                lists,
            })
        }
    };
    Ok(TokenVectorIndex {
        built_from_version,
        similarity,
        dim,
        build_seed,
        passage_ids,
        id_to_idx,
        matrices,
        entries,
        ivf,
    })
}
