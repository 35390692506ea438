//! Asynchronous trainer/sampler orchestration.
//!
//! Two roles run concurrently and share exactly two pieces of state plus a
//! shutdown signal:
//!
//! - a monotone [`CheckpointStore`]: publish keeps only strictly newer
//!   versions, fetch returns the latest;
//! - a single-slot [`BatchMailbox`]: a deposited batch replaces any
//!   unconsumed one, so the trainer always sees the freshest curation.
//!
//! The sampler fetches the latest checkpoint, rebuilds the token index,
//! curates a batch from the refreshed rankings, deposits it, and waits for a
//! newer checkpoint. The trainer adopts a newer batch only at epoch
//! boundaries and otherwise keeps training on the batch it has — it never
//! waits on the sampler once the first batch has arrived — and publishes a
//! checkpoint after every epoch. Interleaving makes the run nondeterministic;
//! the stop conditions match the iterative loop.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::dense::build_token_index;
use crate::encoder::{init_params, EncoderConfig, EncoderParams};
use crate::error::{Error, Result};

use super::iterative::{rank_train_queries, run_epochs, train_match1};
use super::{curate_triples, RoundRecord, TrainConfig, TrainContext, TrainHistory, TripleBatch};

const POLL: Duration = Duration::from_millis(20);

/// Versioned checkpoint slot: last writer with the highest version wins.
pub struct CheckpointStore {
    slot: Mutex<EncoderParams>,
    changed: Condvar,
}

impl CheckpointStore {
    pub fn new(initial: EncoderParams) -> Self {
        CheckpointStore {
            slot: Mutex::new(initial),
            changed: Condvar::new(),
        }
    }

    /// Store `params` if strictly newer than the current checkpoint.
    pub fn publish(&self, params: &EncoderParams) {
        let mut slot = self.slot.lock().unwrap();
        if params.version() > slot.version() {
            *slot = params.clone();
            self.changed.notify_all();
        }
    }

    /// Clone of the newest checkpoint.
    pub fn fetch_latest(&self) -> EncoderParams {
        self.slot.lock().unwrap().clone()
    }

    /// Wait (bounded) for a checkpoint newer than `version`.
    pub fn wait_newer(&self, version: u64, timeout: Duration) -> Option<EncoderParams> {
        let slot = self.slot.lock().unwrap();
        let (slot, _) = self
            .changed
            .wait_timeout_while(slot, timeout, |p| p.version() <= version)
            .unwrap();
        (slot.version() > version).then(|| slot.clone())
    }
}

/// Single-slot mailbox; a new deposit replaces an unconsumed batch.
pub struct BatchMailbox {
    slot: Mutex<Option<TripleBatch>>,
    filled: Condvar,
}

impl BatchMailbox {
    pub fn new() -> Self {
        BatchMailbox {
            slot: Mutex::new(None),
            filled: Condvar::new(),
        }
    }

    pub fn deposit(&self, batch: TripleBatch) {
        *self.slot.lock().unwrap() = Some(batch);
        self.filled.notify_all();
    }

    /// Take the batch if one is present and curated strictly after
    /// `seen_version` (pass `None` to take anything).
    pub fn take_newer(&self, seen_version: Option<u64>) -> Option<TripleBatch> {
        let mut slot = self.slot.lock().unwrap();
        let newer = match (&*slot, seen_version) {
            (Some(_), None) => true,
            (Some(b), Some(v)) => b.curated_by_version > v,
            (None, _) => false,
        };
        if newer {
            slot.take()
        } else {
            None
        }
    }

    /// Bounded wait for any deposit newer than `seen_version`.
    pub fn wait_newer(&self, seen_version: Option<u64>, timeout: Duration) -> Option<TripleBatch> {
        let deadline = Instant::now() + timeout;
        loop {
            if let Some(batch) = self.take_newer(seen_version) {
                return Some(batch);
            }
            let now = Instant::now();
            if now >= deadline {
                return None;
            }
            let slot = self.slot.lock().unwrap();
            let _unused = self.filled.wait_timeout(slot, deadline - now).unwrap();
        }
    }
}

impl Default for BatchMailbox {
    fn default() -> Self {
        Self::new()
    }
}

/// Tuning for the asynchronous run; used by benchmarks and tests.
#[derive(Debug, Clone, Default)]
pub struct AsyncOptions {
    /// Artificial delay inserted before each sampling pass, for probing that
    /// the trainer does not block on the sampler.
    pub sampler_delay: Option<Duration>,
}

/// Wall time and workload of one trainer epoch.
#[derive(Debug, Clone, Copy)]
pub struct EpochStat {
    pub duration: Duration,
    pub triples: usize,
}

/// Result of an asynchronous run, with per-epoch timing for benchmarks.
#[derive(Debug)]
pub struct AsyncOutcome {
    pub params: EncoderParams,
    pub history: TrainHistory,
    pub epochs: Vec<EpochStat>,
}

struct SamplerShared {
    store: CheckpointStore,
    mailbox: BatchMailbox,
    shutdown: AtomicBool,
    sampler_dead: AtomicBool,
}

fn sampler_loop(
    shared: &SamplerShared,
    dataset: &Dataset,
    config: &TrainConfig,
    options: &AsyncOptions,
) -> Result<()> {
    let qrels = dataset.train_qrels();
    let corpus_ids = dataset.passage_ids();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5a31_13e5));
    let mut last_curated: Option<u64> = None;

    while !shared.shutdown.load(Ordering::Acquire) {
        let params = match last_curated {
            None => shared.store.fetch_latest(),
            Some(v) => match shared.store.wait_newer(v, POLL) {
                Some(p) => p,
                None => continue,
            },
        };
        if let Some(delay) = options.sampler_delay {
            std::thread::sleep(delay);
        }
        if shared.shutdown.load(Ordering::Acquire) {
            break;
        }
        let index = build_token_index(&params, dataset.passages(), None, config.seed)?;
        if shared.shutdown.load(Ordering::Acquire) {
            break;
        }
        let rankings = rank_train_queries(&index, &params, dataset, config.m)?;
        if shared.shutdown.load(Ordering::Acquire) {
            break;
        }
        let batch = curate_triples(
            &rankings,
            &qrels,
            &corpus_ids,
            config.m,
            config.r_rand,
            &mut rng,
            params.version(),
        )?;
        last_curated = Some(params.version());
        // an empty batch is deposited too: it tells the trainer that this
        // checkpoint already ranks every training gold first
        shared.mailbox.deposit(batch);
    }
    Ok(())
}

fn trainer_loop(
    shared: &SamplerShared,
    dataset: &Dataset,
    config: &TrainConfig,
    mut params: EncoderParams,
) -> Result<AsyncOutcome> {
    let ctx = TrainContext::new(dataset);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x7261_1e57));
    let mut history = TrainHistory::default();
    let mut epochs = Vec::new();

    let mut current: Option<TripleBatch> = None;
    let mut seen_version: Option<u64> = None;
    let mut round = 1usize;
    let mut epochs_this_round = 0usize;
    let mut updates_this_round = 0usize;
    let mut loss_sum_this_round = 0.0f64;
    let mut round_start = Instant::now();

    'rounds: while round <= config.max_rounds {
        if shared.sampler_dead.load(Ordering::Acquire) {
            return Err(Error::RoleFailed {
                role: "sampler",
                detail: "stopped before delivering a batch".into(),
            });
        }
        // adopt a fresher batch when one is waiting; block only when there is
        // nothing to train on at all
        let adopted = match shared.mailbox.take_newer(seen_version) {
            Some(batch) => Some(batch),
            None if current.is_none() => shared.mailbox.wait_newer(seen_version, POLL),
            None => None,
        };
        if let Some(batch) = adopted {
            seen_version = Some(batch.curated_by_version);
            if batch.is_empty() {
                let match1 = train_match1(&params, dataset)?;
                if match1 >= config.target_train_match1 {
                    params.bump_version();
                    shared.store.publish(&params);
                    history.push(RoundRecord {
                        round,
                        triples_trained_on: updates_this_round,
                        mean_loss: loss_sum_this_round / updates_this_round.max(1) as f64,
                        train_match1: match1,
                        wall_ms: round_start.elapsed().as_secs_f64() * 1e3,
                        checkpoint_version: params.version(),
                    });
                    break 'rounds;
                }
                // stale signal relative to our newer checkpoint: ignore
                continue;
            }
            current = Some(batch);
        }
        let Some(batch) = current.as_ref() else {
            continue;
        };

        let epoch_start = Instant::now();
        let (next, mean_loss, updates) = run_epochs(params, batch, &ctx, config, 1, &mut rng)?;
        params = next;
        epochs.push(EpochStat {
            duration: epoch_start.elapsed(),
            triples: updates,
        });
        shared.store.publish(&params);
        loss_sum_this_round += mean_loss * updates as f64;
        updates_this_round += updates;
        epochs_this_round += 1;

        if epochs_this_round == config.epochs_per_round {
            let match1 = train_match1(&params, dataset)?;
            history.push(RoundRecord {
                round,
                triples_trained_on: updates_this_round,
                mean_loss: loss_sum_this_round / updates_this_round.max(1) as f64,
                train_match1: match1,
                wall_ms: round_start.elapsed().as_secs_f64() * 1e3,
                checkpoint_version: params.version(),
            });
            if match1 >= config.target_train_match1 {
                break 'rounds;
            }
            round += 1;
            epochs_this_round = 0;
            updates_this_round = 0;
            loss_sum_this_round = 0.0;
            round_start = Instant::now();
        }
    }

    Ok(AsyncOutcome {
        params,
        history,
        epochs,
    })
}

/// Asynchronous training with explicit options and per-epoch timing.
pub fn async_train_instrumented(
    dataset: &Dataset,
    encoder_config: &EncoderConfig,
    config: &TrainConfig,
    options: AsyncOptions,
) -> Result<AsyncOutcome> {
    config.validate()?;
    let initial = init_params(encoder_config, config.seed)?;
    let shared = Arc::new(SamplerShared {
        store: CheckpointStore::new(initial.clone()),
        mailbox: BatchMailbox::new(),
        shutdown: AtomicBool::new(false),
        sampler_dead: AtomicBool::new(false),
    });

    let sampler_handle = {
        let shared = Arc::clone(&shared);
        let dataset = dataset.clone();
        let config = config.clone();
        std::thread::spawn(move || {
            let result = sampler_loop(&shared, &dataset, &config, &options);
            shared.sampler_dead.store(true, Ordering::Release);
            result
        })
    };

    let trainer_result = trainer_loop(&shared, dataset, config, initial);
    shared.shutdown.store(true, Ordering::Release);

    let sampler_result = match sampler_handle.join() {
        Ok(r) => r,
        Err(_) => Err(Error::RoleFailed {
            role: "sampler",
            detail: "panicked".into(),
        }),
    };

    match (trainer_result, sampler_result) {
        (Ok(outcome), Ok(())) => Ok(outcome),
        (Err(e), _) => match e {
            Error::RoleFailed { .. } => Err(e),
            other => Err(Error::RoleFailed {
                role: "trainer",
                detail: other.to_string(),
            }),
        },
        (_, Err(e)) => match e {
            Error::RoleFailed { .. } => Err(e),
            other => Err(Error::RoleFailed {
                role: "sampler",
                detail: other.to_string(),
            }),
        },
    }
}

/// Asynchronous training with default options.
pub fn async_train(
    dataset: &Dataset,
    encoder_config: &EncoderConfig,
    config: &TrainConfig,
) -> Result<(EncoderParams, TrainHistory)> {
    let outcome = async_train_instrumented(dataset, encoder_config, config, AsyncOptions::default())?;
    Ok((outcome.params, outcome.history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SynthConfig};
    use crate::learn::iterative_train;

    fn corpus() -> Dataset {
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

    fn encoder() -> EncoderConfig {
        EncoderConfig {
            dim: 16,
            buckets: 1 << 10,
            ..EncoderConfig::default()
        }
    }

    fn config() -> TrainConfig {
        TrainConfig {
            max_rounds: 3,
            epochs_per_round: 3,
            seed: 7,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn store_is_monotone() {
        let base = init_params(&encoder(), 1).unwrap();
        let store = CheckpointStore::new(base.clone());
        let mut newer = base.clone();
        newer.bump_version();
        store.publish(&newer);
        assert_eq!(store.fetch_latest().version(), 1);
        // stale publish is ignored
        store.publish(&base);
        assert_eq!(store.fetch_latest().version(), 1);
    }

    #[test]
    fn mailbox_replaces_unconsumed_batches() {
        let mailbox = BatchMailbox::new();
        mailbox.deposit(TripleBatch {
            triples: vec![],
            curated_by_version: 1,
        });
        mailbox.deposit(TripleBatch {
            triples: vec![],
            curated_by_version: 2,
        });
        let got = mailbox.take_newer(None).unwrap();
        assert_eq!(got.curated_by_version, 2);
        assert!(mailbox.take_newer(None).is_none());

        mailbox.deposit(TripleBatch {
            triples: vec![],
            curated_by_version: 2,
        });
        // not newer than what we've seen
        assert!(mailbox.take_newer(Some(2)).is_none());
        assert!(mailbox.take_newer(Some(1)).is_some());
    }

    #[test]
    fn async_run_completes_and_reports_rounds() {
        let dataset = corpus();
        let (params, history) = async_train(&dataset, &encoder(), &config()).unwrap();
        assert!(params.version() >= 1);
        assert!(!history.rounds.is_empty());
        for w in history.rounds.windows(2) {
            assert!(w[1].round > w[0].round);
            assert!(w[1].checkpoint_version > w[0].checkpoint_version);
        }
    }

    #[test]
    fn async_matches_iterative_accuracy_roughly() {
        let dataset = corpus();
        let (_, iter_history) = iterative_train(&dataset, &encoder(), &config()).unwrap();
        let (_, async_history) = async_train(&dataset, &encoder(), &config()).unwrap();
        let a = iter_history.final_train_match1().unwrap();
        let b = async_history.final_train_match1().unwrap();
        assert!(
            (a - b).abs() <= 0.25,
            "iterative {a} vs asynchronous {b} diverged"
        );
    }

    #[test]
    fn degenerate_run_terminates_without_adopting() {
        // separable corpus with zero noise: the untrained encoder already
        // ranks every gold first, so with r_rand = 0 the sampler can only
        // deposit empty batches and the trainer stops with a bumped version
        let dataset = generate_synthetic(&SynthConfig {
            n_passages: 8,
            keywords_per_passage: 4,
            shared_vocab_size: 12,
            queries_per_passage: 2,
            paraphrase_noise: 0.0,
            seed: 3,
        })
        .unwrap();
        let cfg = TrainConfig {
            r_rand: 0,
            ..config()
        };
        let outcome =
            async_train_instrumented(&dataset, &encoder(), &cfg, AsyncOptions::default())
                .unwrap();
        assert!(outcome.params.version() >= 1);
        assert!(outcome.epochs.is_empty(), "no batch was adopted");
        assert_eq!(outcome.history.rounds.len(), 1);
        assert!(outcome.history.rounds[0].train_match1 >= 0.95);
    }
}
