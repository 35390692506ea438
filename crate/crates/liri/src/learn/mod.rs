//! Training: pairwise ranking loss with exact gradients through the
//! summed-max-similarity score, triple curation strategies, and the
//! iterative and asynchronous training loops.

mod asynctrain;
mod iterative;
mod triples;

pub use asynctrain::{
    async_train, async_train_instrumented, AsyncOptions, AsyncOutcome, BatchMailbox,
    CheckpointStore, EpochStat,
};
pub use iterative::{iterative_train, train_match1, train_one_pass};
pub use triples::{
    all_negatives_triples, append_triples, bm25_guided_triples, curate_triples, save_triples,
    TrainingTriple, TripleBatch,
};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::dense::summaxsim_argmax;
use crate::encoder::{encode, EncoderParams, Role, Similarity, TokenMatrix};
use crate::error::{Error, Result};
use crate::text::{tokenize, TokenSeq, TokenizerConfig};

/// Knobs for all training strategies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs_per_round: usize,
    pub max_rounds: usize,
    /// Rank cutoff when curating negatives.
    pub m: usize,
    /// Random triples emitted when the gold is already ranked first.
    pub r_rand: usize,
    /// Training accuracy at which the loop stops early.
    pub target_train_match1: f64,
    pub minibatch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            epochs_per_round: 6,
            max_rounds: 5,
            m: 20,
            r_rand: 3,
            target_train_match1: 0.95,
            minibatch_size: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs_per_round < 1
            || self.max_rounds < 1
            || self.m < 1
            || self.minibatch_size < 1
        {
            return Err(Error::invalid("train config", "counts must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.target_train_match1) {
            return Err(Error::invalid(
                "train config",
                "target_train_match1 must be in [0, 1]",
            ));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::invalid("train config", "learning_rate must be >= 0"));
        }
        Ok(())
    }
}

/// One completed training round.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    /// Triple-gradient updates performed this round (batch size x epochs).
    pub triples_trained_on: usize,
    pub mean_loss: f64,
    pub train_match1: f64,
    pub wall_ms: f64,
    pub checkpoint_version: u64,
}

/// Per-round records; rounds and checkpoint versions strictly increase.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub rounds: Vec<RoundRecord>,
}

impl TrainHistory {
    pub fn push(&mut self, record: RoundRecord) {
        if let Some(last) = self.rounds.last() {
            debug_assert!(record.round > last.round);
            debug_assert!(record.checkpoint_version > last.checkpoint_version);
        }
        self.rounds.push(record);
    }

    /// Total triple-gradient updates across all rounds.
    pub fn total_updates(&self) -> usize {
        self.rounds.iter().map(|r| r.triples_trained_on).sum()
    }

    pub fn final_train_match1(&self) -> Option<f64> {
        self.rounds.last().map(|r| r.train_match1)
    }

    pub fn total_wall_ms(&self) -> f64 {
        self.rounds.iter().map(|r| r.wall_ms).sum()
    }

    /// One JSON record per round.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.rounds {
            out.push_str(&serde_json::to_string(r).expect("serialize round"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: &std::path::Path) -> Result<()> {
        crate::io_util::atomic_write(path, |buf| {
            buf.extend_from_slice(self.to_jsonl().as_bytes());
        })
    }
}

/// Softmax cross-entropy over a (positive, negative) score pair:
/// `ln(1 + exp(s_neg - s_pos))`, computed in overflow-safe form.
pub fn pairwise_loss(s_pos: f64, s_neg: f64) -> Result<f64> {
    if !s_pos.is_finite() || !s_neg.is_finite() {
        return Err(Error::NonFinite("pairwise loss input"));
    }
    Ok(softplus(s_neg - s_pos))
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Sparse gradient over embedding-table rows.
#[derive(Debug, Clone, Default)]
pub struct TableGradient {
    rows: HashMap<u32, Vec<f64>>,
    dim: usize,
}

impl TableGradient {
    fn new(dim: usize) -> Self {
        TableGradient {
            rows: HashMap::new(),
            dim,
        }
    }

    fn add(&mut self, bucket: u32, col: usize, delta: f64) {
        self.rows
            .entry(bucket)
            .or_insert_with(|| vec![0.0; self.dim])
            [col] += delta;
    }

    fn scale(&mut self, factor: f64) {
        for row in self.rows.values_mut() {
            for v in row.iter_mut() {
                *v *= factor;
            }
        }
    }

    /// Gradient of the mean loss with respect to `table[bucket][col]`.
    pub fn get(&self, bucket: u32, col: usize) -> f64 {
        self.rows.get(&bucket).map_or(0.0, |r| r[col])
    }

    pub fn touched_buckets(&self) -> impl Iterator<Item = u32> + '_ {
        self.rows.keys().copied()
    }
}

/// Pre-tokenized views of a dataset's texts, shared by the training loops so
/// tokenization happens once per run.
pub(crate) struct TrainContext {
    query_tokens: HashMap<String, TokenSeq>,
    passage_tokens: HashMap<String, TokenSeq>,
}

impl TrainContext {
    pub(crate) fn new(dataset: &Dataset) -> Self {
        let cfg = TokenizerConfig::dense_default();
        TrainContext {
            query_tokens: dataset
                .train_queries()
                .iter()
                .map(|q| (q.id.clone(), tokenize(&cfg, &q.text)))
                .collect(),
            passage_tokens: dataset
                .passages()
                .iter()
                .map(|p| (p.id.clone(), tokenize(&cfg, &p.text)))
                .collect(),
        }
    }

    fn query(&self, id: &str) -> Result<&TokenSeq> {
        self.query_tokens.get(id).ok_or_else(|| Error::UnknownId {
            kind: "query",
            id: id.to_string(),
        })
    }

    fn passage(&self, id: &str) -> Result<&TokenSeq> {
        self.passage_tokens.get(id).ok_or_else(|| Error::UnknownId {
            kind: "passage",
            id: id.to_string(),
        })
    }
}

/// Loss and gradient of one triple, accumulated into `grad`.
///
/// Each query row's gradient flows only to its argmax passage row (first
/// index wins ties); rows sharing a hash bucket accumulate into the same
/// table row.
fn triple_loss_grad(
    params: &EncoderParams,
    query: &TokenSeq,
    pos: &TokenSeq,
    neg: &TokenSeq,
    grad: Option<&mut TableGradient>,
) -> Result<f64> {
    let mode = params.config().similarity;
    let qm = encode(params, query, Role::Query);
    let pm = encode(params, pos, Role::Doc);
    let nm = encode(params, neg, Role::Doc);
    let (s_pos, am_pos) = summaxsim_argmax(&qm, &pm, mode)?;
    let (s_neg, am_neg) = summaxsim_argmax(&qm, &nm, mode)?;
    let z = s_neg - s_pos;
    if let Some(grad) = grad {
        let g = sigmoid(z);
        accumulate(&qm, &pm, &am_pos, -g, mode, grad);
        accumulate(&qm, &nm, &am_neg, g, mode, grad);
    }
    Ok(softplus(z))
}

fn accumulate(
    qm: &TokenMatrix,
    pm: &TokenMatrix,
    argmax: &[u32],
    scale: f64,
    mode: Similarity,
    grad: &mut TableGradient,
) {
    for (qi, &pj) in argmax.iter().enumerate() {
        let qrow = qm.row(qi);
        let prow = pm.row(pj as usize);
        let qb = qm.bucket_ids()[qi];
        let pb = pm.bucket_ids()[pj as usize];
        match mode {
            Similarity::NegL2 => {
                for c in 0..qm.dim() {
                    let diff = qrow[c] as f64 - prow[c] as f64;
                    grad.add(qb, c, scale * -2.0 * diff);
                    grad.add(pb, c, scale * 2.0 * diff);
                }
            }
            Similarity::Dot => {
                for c in 0..qm.dim() {
                    grad.add(qb, c, scale * prow[c] as f64);
                    grad.add(pb, c, scale * qrow[c] as f64);
                }
            }
        }
    }
}

fn batch_loss_grad_ctx(
    params: &EncoderParams,
    minibatch: &[&TrainingTriple],
    ctx: &TrainContext,
    want_grad: bool,
) -> Result<(f64, TableGradient)> {
    debug_assert!(!minibatch.is_empty());
    let mut grad = TableGradient::new(params.config().dim);
    let mut loss_sum = 0.0;
    for t in minibatch {
        let q = ctx.query(&t.query_id)?;
        let p = ctx.passage(&t.pos_id)?;
        let n = ctx.passage(&t.neg_id)?;
        loss_sum += triple_loss_grad(params, q, p, n, want_grad.then_some(&mut grad))?;
    }
    let scale = 1.0 / minibatch.len() as f64;
    grad.scale(scale);
    Ok((loss_sum * scale, grad))
}

pub(crate) fn grad_step_ctx(
    mut params: EncoderParams,
    minibatch: &[&TrainingTriple],
    ctx: &TrainContext,
    lr: f64,
) -> Result<(EncoderParams, f64)> {
    let (loss, grad) = batch_loss_grad_ctx(&params, minibatch, ctx, lr != 0.0)?;
    let dim = params.config().dim;
    let table = params.table_mut();
    if lr != 0.0 {
        for (bucket, row) in &grad.rows {
            let base = *bucket as usize * dim;
            for (c, g) in row.iter().enumerate() {
                table[base + c] -= (lr * g) as f32;
            }
        }
    }
    params.bump_version();
    Ok((params, loss))
}

/// Mean pairwise loss of `minibatch` under `params`, without touching them.
pub fn batch_loss(
    params: &EncoderParams,
    minibatch: &[TrainingTriple],
    dataset: &Dataset,
) -> Result<f64> {
    let ctx = TrainContext::new(dataset);
    let refs: Vec<&TrainingTriple> = minibatch.iter().collect();
    Ok(batch_loss_grad_ctx(params, &refs, &ctx, false)?.0)
}

/// Mean loss and its analytic gradient with respect to the embedding table.
pub fn batch_gradient(
    params: &EncoderParams,
    minibatch: &[TrainingTriple],
    dataset: &Dataset,
) -> Result<(f64, TableGradient)> {
    let ctx = TrainContext::new(dataset);
    let refs: Vec<&TrainingTriple> = minibatch.iter().collect();
    batch_loss_grad_ctx(params, &refs, &ctx, true)
}

/// One plain gradient-descent step on the mean triple loss. Returns the
/// updated parameters (version advanced by one) and the mean loss at the
/// pre-step parameters.
pub fn grad_step(
    params: EncoderParams,
    minibatch: &[TrainingTriple],
    dataset: &Dataset,
    lr: f64,
) -> Result<(EncoderParams, f64)> {
    if minibatch.is_empty() {
        return Err(Error::invalid("minibatch", "must be nonempty"));
    }
    let ctx = TrainContext::new(dataset);
    let refs: Vec<&TrainingTriple> = minibatch.iter().collect();
    grad_step_ctx(params, &refs, &ctx, lr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Query;
    use crate::encoder::{init_params, EncoderConfig};
    use crate::sparse::Passage;
    use approx::assert_relative_eq;

    #[test]
    fn loss_hand_values() {
        assert_relative_eq!(pairwise_loss(1.0, 1.0).unwrap(), 2.0_f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(
            pairwise_loss(1.0, 0.0).unwrap(),
            (1.0 + (-1.0_f64).exp()).ln(),
            epsilon = 1e-12
        );
        assert!(pairwise_loss(50.0, 0.0).unwrap() < 1e-9);
        assert!(pairwise_loss(f64::NAN, 0.0).is_err());
        assert!(pairwise_loss(0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn loss_monotonicity() {
        // decreasing in s_pos, increasing in s_neg
        assert!(pairwise_loss(1.0, 0.0).unwrap() < pairwise_loss(0.5, 0.0).unwrap());
        assert!(pairwise_loss(0.0, 1.0).unwrap() > pairwise_loss(0.0, 0.5).unwrap());
        for s in [-300.0, -2.0, 0.0, 7.0, 444.0] {
            assert_relative_eq!(pairwise_loss(s, s).unwrap(), 2.0_f64.ln(), epsilon = 1e-12);
        }
    }

    fn toy_dataset() -> Dataset {
        Dataset::new(
            "toy",
            vec![
                Passage::new("pos", "alpha beta"),
                Passage::new("neg", "gamma delta"),
            ],
            vec![Query::new("q", "alpha beta", "pos")],
            vec![],
        )
        .unwrap()
    }

    fn toy_params(similarity: Similarity) -> EncoderParams {
        init_params(
            &EncoderConfig {
                dim: 3,
                buckets: 64,
                similarity,
                ..EncoderConfig::default()
            },
            12,
        )
        .unwrap()
    }

    #[test]
    fn zero_lr_leaves_table_but_bumps_version() {
        let params = toy_params(Similarity::NegL2);
        let before = params.clone();
        let triples = vec![TrainingTriple::new("q", "pos", "neg")];
        let (after, loss) = grad_step(params, &triples, &toy_dataset(), 0.0).unwrap();
        assert_eq!(after.version(), 1);
        assert_eq!(after.table(), before.table());
        assert!(loss.is_finite());
    }

    #[test]
    fn descent_on_perfect_positive() {
        // query tokens equal the positive passage tokens: s_pos = 0 always,
        // the step pushes the negative away and the loss must drop
        let dataset = toy_dataset();
        let triples = vec![TrainingTriple::new("q", "pos", "neg")];
        let params = toy_params(Similarity::NegL2);
        let before = batch_loss(&params, &triples, &dataset).unwrap();
        let (after, _) = grad_step(params, &triples, &dataset, 0.05).unwrap();
        let after_loss = batch_loss(&after, &triples, &dataset).unwrap();
        assert!(
            after_loss < before,
            "loss did not decrease: {before} -> {after_loss}"
        );
    }

    #[test]
    fn unresolvable_ids_are_named() {
        let params = toy_params(Similarity::NegL2);
        let triples = vec![TrainingTriple::new("q", "pos", "ghost")];
        let err = grad_step(params, &triples, &toy_dataset(), 0.1).unwrap_err();
        assert!(matches!(err, Error::UnknownId { id, .. } if id == "ghost"));
    }

    #[test]
    fn gradient_matches_finite_differences_both_modes() {
        for mode in [Similarity::NegL2, Similarity::Dot] {
            let dataset = Dataset::new(
                "fd",
                vec![
                    Passage::new("pos", "alpha beta gamma"),
                    Passage::new("neg", "delta beta epsilon"),
                ],
                vec![Query::new("q", "alpha epsilon", "pos")],
                vec![],
            )
            .unwrap();
            let params = init_params(
                &EncoderConfig {
                    dim: 3,
                    buckets: 8,
                    similarity: mode,
                    ..EncoderConfig::default()
                },
                3,
            )
            .unwrap();
            let triples = vec![TrainingTriple::new("q", "pos", "neg")];
            let (_, grad) = batch_gradient(&params, &triples, &dataset).unwrap();

            let mut max_rel = 0.0f64;
            for bucket in 0..8u32 {
                for col in 0..3 {
                    let fd = central_difference(&params, &triples, &dataset, bucket, col);
                    let an = grad.get(bucket, col);
                    if fd.abs() < 1e-9 && an.abs() < 1e-9 {
                        continue;
                    }
                    let rel = (fd - an).abs() / fd.abs().max(an.abs());
                    max_rel = max_rel.max(rel);
                }
            }
            assert!(max_rel < 1e-4, "{mode:?}: max relative error {max_rel}");
        }
    }

    /// Central finite difference through the actual f32 parameter values.
    fn central_difference(
        params: &EncoderParams,
        triples: &[TrainingTriple],
        dataset: &Dataset,
        bucket: u32,
        col: usize,
    ) -> f64 {
        let dim = params.config().dim;
        let idx = bucket as usize * dim + col;
        let eps = 1e-4f32;
        let base = params.table()[idx];

        let mut plus = params.clone();
        plus.table_mut()[idx] = base + eps;
        let mut minus = params.clone();
        minus.table_mut()[idx] = base - eps;

        let l_plus = batch_loss(&plus, triples, dataset).unwrap();
        let l_minus = batch_loss(&minus, triples, dataset).unwrap();
        let actual_step = plus.table()[idx] as f64 - minus.table()[idx] as f64;
        (l_plus - l_minus) / actual_step
    }
}
