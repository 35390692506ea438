//! Single-threaded training loops: the self-directed iterative strategy and
//! the one-pass strategy used by the all-negatives and term-guided baselines.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::dense::{build_token_index, search_exact_topk, TokenVectorIndex};
use crate::encoder::{init_params, EncoderConfig, EncoderParams};
use crate::error::Result;
use crate::rank::RankedResult;

use super::{
    curate_triples, grad_step_ctx, RoundRecord, TrainConfig, TrainContext, TrainHistory,
    TripleBatch,
};

/// Exact top-`k` rankings for every training query, keyed by query id.
pub(crate) fn rank_train_queries(
    index: &TokenVectorIndex,
    params: &EncoderParams,
    dataset: &Dataset,
    k: usize,
) -> Result<BTreeMap<String, RankedResult>> {
    let mut out = BTreeMap::new();
    for q in dataset.train_queries() {
        out.insert(q.id.clone(), search_exact_topk(index, params, &q.text, k)?);
    }
    Ok(out)
}

/// Fraction of training queries whose gold passage ranks first under exact
/// scoring with `params`.
pub fn train_match1(params: &EncoderParams, dataset: &Dataset) -> Result<f64> {
    let index = build_token_index(params, dataset.passages(), None, 0)?;
    let mut hits = 0usize;
    for q in dataset.train_queries() {
        let r = search_exact_topk(&index, params, &q.text, 1)?;
        if r.top_ids(1).first() == Some(&q.gold.as_str()) {
            hits += 1;
        }
    }
    Ok(hits as f64 / dataset.train_queries().len().max(1) as f64)
}

/// Run `epochs` shuffled minibatch epochs over a fixed batch.
/// Returns the updated params, mean loss per update, and update count.
pub(crate) fn run_epochs(
    mut params: EncoderParams,
    batch: &TripleBatch,
    ctx: &TrainContext,
    config: &TrainConfig,
    epochs: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(EncoderParams, f64, usize)> {
    let mut loss_sum = 0.0;
    let mut updates = 0usize;
    for _ in 0..epochs {
        let mut order: Vec<usize> = (0..batch.triples.len()).collect();
        order.shuffle(rng);
        for chunk in order.chunks(config.minibatch_size) {
            let minibatch: Vec<_> = chunk.iter().map(|&i| &batch.triples[i]).collect();
            let (next, loss) = grad_step_ctx(params, &minibatch, ctx, config.learning_rate)?;
            params = next;
            loss_sum += loss * minibatch.len() as f64;
            updates += minibatch.len();
        }
    }
    Ok((params, loss_sum / updates.max(1) as f64, updates))
}

/// Self-directed iterative training.
///
/// Each round: refresh the token index from the latest checkpoint, rank all
/// training queries exactly, curate hard-negative triples from those
/// rankings, then train for `epochs_per_round` epochs. Stops early when the
/// training accuracy target is met or a round curates no triples; the
/// first round's negatives come from the freshly initialized model's own
/// rankings. Fully deterministic for a fixed seed.
pub fn iterative_train(
    dataset: &Dataset,
    encoder_config: &EncoderConfig,
    config: &TrainConfig,
) -> Result<(EncoderParams, TrainHistory)> {
    config.validate()?;
    let mut params = init_params(encoder_config, config.seed)?;
    let ctx = TrainContext::new(dataset);
    let qrels = dataset.train_qrels();
    let corpus_ids = dataset.passage_ids();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x1741_7265));
    let mut history = TrainHistory::default();

    for round in 1..=config.max_rounds {
        let round_start = Instant::now();
        let index = build_token_index(&params, dataset.passages(), None, config.seed)?;
        let rankings = rank_train_queries(&index, &params, dataset, config.m)?;
        let batch = curate_triples(
            &rankings,
            &qrels,
            &corpus_ids,
            config.m,
            config.r_rand,
            &mut rng,
            params.version(),
        )?;
        if batch.is_empty() {
            // every gold ranked first and no random triples requested
            break;
        }
        let (next, mean_loss, updates) =
            run_epochs(params, &batch, &ctx, config, config.epochs_per_round, &mut rng)?;
        params = next;
        let match1 = train_match1(&params, dataset)?;
        history.push(RoundRecord {
            round,
            triples_trained_on: updates,
            mean_loss,
            train_match1: match1,
            wall_ms: round_start.elapsed().as_secs_f64() * 1e3,
            checkpoint_version: params.version(),
        });
        if match1 >= config.target_train_match1 {
            break;
        }
    }
    Ok((params, history))
}

/// One-pass training on a pre-curated batch for a fixed number of epochs
/// (the all-negatives and term-guided baselines).
pub fn train_one_pass(
    dataset: &Dataset,
    encoder_config: &EncoderConfig,
    config: &TrainConfig,
    batch: &TripleBatch,
    epochs: usize,
) -> Result<(EncoderParams, TrainHistory)> {
    config.validate()?;
    let mut params = init_params(encoder_config, config.seed)?;
    let mut history = TrainHistory::default();
    if batch.is_empty() {
        return Ok((params, history));
    }
    let ctx = TrainContext::new(dataset);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x1741_7265));
    let start = Instant::now();
    let (next, mean_loss, updates) = run_epochs(params, batch, &ctx, config, epochs, &mut rng)?;
    params = next;
    let match1 = train_match1(&params, dataset)?;
    history.push(RoundRecord {
        round: 1,
        triples_trained_on: updates,
        mean_loss,
        train_match1: match1,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
        checkpoint_version: params.version(),
    });
    Ok((params, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SynthConfig};
    use crate::learn::all_negatives_triples;

    fn small_corpus() -> Dataset {
        generate_synthetic(&SynthConfig {
            n_passages: 12,
            keywords_per_passage: 4,
            shared_vocab_size: 16,
            queries_per_passage: 2,
            paraphrase_noise: 0.3,
            seed: 42,
        })
        .unwrap()
    }

    fn small_encoder() -> EncoderConfig {
        EncoderConfig {
            dim: 16,
            buckets: 1 << 10,
            ..EncoderConfig::default()
        }
    }

    fn fast_config() -> TrainConfig {
        TrainConfig {
            max_rounds: 3,
            epochs_per_round: 3,
            seed: 7,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn iterative_improves_and_terminates() {
        let dataset = small_corpus();
        let (params, history) =
            iterative_train(&dataset, &small_encoder(), &fast_config()).unwrap();
        assert!(!history.rounds.is_empty());
        assert!(history.rounds.len() <= 3);
        assert!(params.version() > 0);
        // rounds and versions strictly increase
        for w in history.rounds.windows(2) {
            assert!(w[1].round > w[0].round);
            assert!(w[1].checkpoint_version > w[0].checkpoint_version);
        }
        let final_m1 = history.final_train_match1().unwrap();
        let initial = train_match1(
            &init_params(&small_encoder(), 7).unwrap(),
            &dataset,
        )
        .unwrap();
        assert!(
            final_m1 >= initial,
            "training hurt accuracy: {initial} -> {final_m1}"
        );
    }

    #[test]
    fn iterative_is_bit_reproducible() {
        let dataset = small_corpus();
        let (a, ha) = iterative_train(&dataset, &small_encoder(), &fast_config()).unwrap();
        let (b, hb) = iterative_train(&dataset, &small_encoder(), &fast_config()).unwrap();
        assert_eq!(a, b);
        assert_eq!(ha.total_updates(), hb.total_updates());
    }

    #[test]
    fn max_rounds_is_respected_when_target_unreachable() {
        let dataset = small_corpus();
        let config = TrainConfig {
            max_rounds: 2,
            epochs_per_round: 1,
            target_train_match1: 1.01, // can never be reached
            ..fast_config()
        };
        let err = config.validate();
        assert!(err.is_err(), "threshold outside [0,1] must be rejected");

        let config = TrainConfig {
            max_rounds: 2,
            epochs_per_round: 1,
            target_train_match1: 1.0,
            learning_rate: 0.0, // no learning: target stays out of reach
            ..fast_config()
        };
        let (_, history) = iterative_train(&dataset, &small_encoder(), &config).unwrap();
        assert_eq!(history.rounds.len(), 2);
    }

    #[test]
    fn one_pass_all_negatives_trains() {
        let dataset = small_corpus();
        let batch = all_negatives_triples(dataset.train_queries(), &dataset.passage_ids());
        assert_eq!(
            batch.len(),
            dataset.train_queries().len() * (dataset.passages().len() - 1)
        );
        let (params, history) =
            train_one_pass(&dataset, &small_encoder(), &fast_config(), &batch, 2).unwrap();
        assert_eq!(history.rounds.len(), 1);
        assert_eq!(history.total_updates(), batch.len() * 2);
        assert!(params.version() > 0);
    }

    #[test]
    fn history_jsonl_roundtrip_shape() {
        let dataset = small_corpus();
        let (_, history) = iterative_train(&dataset, &small_encoder(), &fast_config()).unwrap();
        let jsonl = history.to_jsonl();
        assert_eq!(jsonl.lines().count(), history.rounds.len());
        for line in jsonl.lines() {
            let r: RoundRecord = serde_json::from_str(line).unwrap();
            assert!(r.round >= 1);
        }
    }
}
