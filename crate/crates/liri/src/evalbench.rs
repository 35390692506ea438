//! Match@k metrics, the seeded k-examples-per-passage protocol, score
//! ensembling, and the latency benchmark.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Query};
use crate::error::{Error, Result};
use crate::rank::RankedResult;
use crate::system::SearchSystem;

/// query id -> gold passage id.
pub type Qrels = BTreeMap<String, String>;

/// Fraction of queries whose gold passage appears in the top `k`.
pub fn match_at_k(
    rankings: &BTreeMap<String, RankedResult>,
    qrels: &Qrels,
    k: usize,
) -> Result<f64> {
    if qrels.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for (query_id, gold) in qrels {
        let ranking = rankings
            .get(query_id)
            .ok_or_else(|| Error::MissingRanking(query_id.clone()))?;
        if ranking.rank_of(gold).is_some_and(|r| r <= k) {
            hits += 1;
        }
    }
    Ok(hits as f64 / qrels.len() as f64)
}

/// Nonnegative ensemble weights, not both zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleWeights {
    pub w_a: f64,
    pub w_b: f64,
}

impl EnsembleWeights {
    pub fn new(w_a: f64, w_b: f64) -> Result<Self> {
        if !(w_a >= 0.0 && w_b >= 0.0) || (w_a == 0.0 && w_b == 0.0) {
            return Err(Error::invalid(
                "ensemble weights",
                "weights must be nonnegative and not both zero",
            ));
        }
        Ok(EnsembleWeights { w_a, w_b })
    }

    /// Parse the `A:B` flag form, e.g. `0.3:1`.
    pub fn parse(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| Error::invalid("ensemble weights", format!("`{s}` is not A:B")))?;
        let w_a: f64 = a
            .trim()
            .parse()
            .map_err(|_| Error::invalid("ensemble weights", format!("bad number `{a}`")))?;
        let w_b: f64 = b
            .trim()
            .parse()
            .map_err(|_| Error::invalid("ensemble weights", format!("bad number `{b}`")))?;
        EnsembleWeights::new(w_a, w_b)
    }
}

/// Combine two full score maps linearly: `w_a * a + w_b * b`, ranked
/// descending with ascending-id tie-break. No normalization is applied.
/// The maps must cover the same passage ids.
pub fn ensemble_scores(
    full_scores_a: &BTreeMap<String, f64>,
    full_scores_b: &BTreeMap<String, f64>,
    weights: &EnsembleWeights,
) -> Result<RankedResult> {
    if full_scores_a.len() != full_scores_b.len()
        || full_scores_a.keys().ne(full_scores_b.keys())
    {
        let only_a: Vec<String> = full_scores_a
            .keys()
            .filter(|k| !full_scores_b.contains_key(*k))
            .cloned()
            .collect();
        let only_b: Vec<String> = full_scores_b
            .keys()
            .filter(|k| !full_scores_a.contains_key(*k))
            .cloned()
            .collect();
        return Err(Error::ScoreKeyMismatch { only_a, only_b });
    }
    let combined: Vec<(String, f64)> = full_scores_a
        .iter()
        .map(|(id, &sa)| (id.clone(), weights.w_a * sa + weights.w_b * full_scores_b[id]))
        .collect();
    let n = combined.len();
    Ok(RankedResult::from_scores(combined, n))
}

/// One seed's evaluation numbers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub match1: f64,
    pub match3: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub samples: usize,
}

/// Aggregated evaluation: per-seed Match@1/Match@3 with mean and sample
/// standard deviation, plus optional latency and footprint numbers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub system: String,
    pub k_ex_per_doc: usize,
    pub per_seed: Vec<SeedOutcome>,
    pub match1_mean: f64,
    pub match1_std: f64,
    pub match3_mean: f64,
    pub match3_std: f64,
    pub latency: Option<LatencyStats>,
    pub index_bytes: Option<u64>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (mean, std)
}

impl EvalReport {
    pub fn aggregate(system: impl Into<String>, k_ex_per_doc: usize, per_seed: Vec<SeedOutcome>) -> Self {
        let m1: Vec<f64> = per_seed.iter().map(|s| s.match1).collect();
        let m3: Vec<f64> = per_seed.iter().map(|s| s.match3).collect();
        let (match1_mean, match1_std) = mean_std(&m1);
        let (match3_mean, match3_std) = mean_std(&m3);
        EvalReport {
            system: system.into(),
            k_ex_per_doc,
            per_seed,
            match1_mean,
            match1_std,
            match3_mean,
            match3_std,
            latency: None,
            index_bytes: None,
        }
    }

    /// `mean(std)` in percent, one decimal, e.g. `42.4(1.7)`.
    pub fn cell(mean: f64, std: f64) -> String {
        format!("{:.1}({:.1})", mean * 100.0, std * 100.0)
    }

    /// One record per seed plus an aggregate line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.per_seed {
            out.push_str(&format!(
                "seed {}\tmatch@1 {:.4}\tmatch@3 {:.4}\n",
                s.seed, s.match1, s.match3
            ));
        }
        out.push_str(&format!(
            "aggregate {} k={} match@1 {} match@3 {}\n",
            self.system,
            self.k_ex_per_doc,
            Self::cell(self.match1_mean, self.match1_std),
            Self::cell(self.match3_mean, self.match3_std),
        ));
        if let Some(l) = &self.latency {
            out.push_str(&format!(
                "latency mean {:.3} ms\tp50 {:.3} ms\tp95 {:.3} ms over {} samples\n",
                l.mean_ms, l.p50_ms, l.p95_ms, l.samples
            ));
        }
        if let Some(b) = self.index_bytes {
            out.push_str(&format!("index bytes {b}\n"));
        }
        out
    }
}

/// Tab-separated row: system, then `mean(std)` per requested shot count
/// (`-` where a report is missing).
pub fn summary_row(system: &str, by_k: &BTreeMap<usize, EvalReport>, ks: &[usize]) -> String {
    let mut cells = vec![system.to_string()];
    for k in ks {
        cells.push(match by_k.get(k) {
            Some(r) => EvalReport::cell(r.match1_mean, r.match1_std),
            None => "-".to_string(),
        });
    }
    cells.join("\t")
}

/// Builds a system from a training subset and a seed.
pub type SystemFactory<'a> = dyn Fn(&Dataset, u64) -> Result<Box<dyn SearchSystem>> + 'a;

/// The k-examples-per-passage protocol.
///
/// For each seed: sample `k_ex_per_doc` training queries per passage without
/// replacement, build a system from that subset, and measure Match@1/Match@3
/// on the held-out test queries. `k_ex_per_doc = 0` skips sampling and hands
/// the factory an empty training split. Seeds are `base_seed..base_seed+n`.
pub fn run_protocol(
    dataset: &Dataset,
    k_ex_per_doc: usize,
    n_seeds: usize,
    base_seed: u64,
    factory: &SystemFactory,
) -> Result<EvalReport> {
    if n_seeds == 0 {
        return Err(Error::invalid("protocol", "n_seeds must be >= 1"));
    }
    let mut per_seed = Vec::with_capacity(n_seeds);
    let mut system_name = String::new();
    for i in 0..n_seeds {
        let seed = base_seed + i as u64;
        let train = if k_ex_per_doc == 0 {
            Vec::new()
        } else {
            sample_train_queries(dataset, k_ex_per_doc, seed)?
        };
        let subset = dataset.with_train_queries(train)?;
        let system = factory(&subset, seed)?;
        system_name = system.name().to_string();
        let (match1, match3) = evaluate_on_tests(system.as_ref(), dataset)?;
        per_seed.push(SeedOutcome {
            seed,
            match1,
            match3,
        });
    }
    Ok(EvalReport::aggregate(system_name, k_ex_per_doc, per_seed))
}

/// Sample `k` training queries per passage, without replacement, seeded.
/// Passages lacking `k` examples are reported by id.
pub fn sample_train_queries(dataset: &Dataset, k: usize, seed: u64) -> Result<Vec<Query>> {
    let mut by_passage: BTreeMap<&str, Vec<&Query>> = BTreeMap::new();
    for p in dataset.passages() {
        by_passage.insert(&p.id, Vec::new());
    }
    for q in dataset.train_queries() {
        by_passage.get_mut(q.gold.as_str()).expect("validated gold").push(q);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(k * by_passage.len());
    for (passage, mut queries) in by_passage {
        if queries.len() < k {
            return Err(Error::NotEnoughExamples {
                passage: passage.to_string(),
                available: queries.len(),
                needed: k,
            });
        }
        queries.shuffle(&mut rng);
        out.extend(queries.into_iter().take(k).cloned());
    }
    Ok(out)
}

fn evaluate_on_tests(system: &dyn SearchSystem, dataset: &Dataset) -> Result<(f64, f64)> {
    let mut rankings = BTreeMap::new();
    for q in dataset.test_queries() {
        rankings.insert(q.id.clone(), system.rank(&q.text, 3)?);
    }
    let qrels = dataset.test_qrels();
    Ok((
        match_at_k(&rankings, &qrels, 1)?,
        match_at_k(&rankings, &qrels, 3)?,
    ))
}

/// End-to-end single-query latency, sequential and single-threaded.
///
/// Runs `warmup` passes over the queries that are discarded, then `reps`
/// measured passes; each measurement covers preprocessing, encoding, and
/// ranking. Also reports the system's serialized footprint.
pub fn benchmark_latency(
    system: &dyn SearchSystem,
    queries: &[String],
    warmup: usize,
    reps: usize,
    k: usize,
) -> Result<(LatencyStats, u64)> {
    if reps == 0 {
        return Err(Error::invalid("benchmark", "reps must be >= 1"));
    }
    for _ in 0..warmup {
        for q in queries {
            system.rank(q, k)?;
        }
    }
    let mut samples_ms = Vec::with_capacity(reps * queries.len());
    for _ in 0..reps {
        for q in queries {
            let t0 = Instant::now();
            let _ = system.rank(q, k)?;
            samples_ms.push(t0.elapsed().as_secs_f64() * 1e3);
        }
    }
    let mut sorted = samples_ms.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pct = |p: f64| sorted[((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1];
    let stats = LatencyStats {
        mean_ms: samples_ms.iter().sum::<f64>() / samples_ms.len() as f64,
        p50_ms: pct(0.50),
        p95_ms: pct(0.95),
        samples: samples_ms.len(),
    };
    Ok((stats, system.index_bytes()))
}
