use liri::data::{generate_synthetic, SynthConfig};
use liri::encoder::EncoderConfig;
use liri::learn::*;
use liri::sparse::{build_bm25, Bm25Params};
use liri::text::TokenizerConfig;
use liri::evalbench::match_at_k;
use liri::system::{DenseSystem, SearchSystem};
use liri::dense::{build_token_index, SearchMode};
use std::collections::BTreeMap;

fn test_match1(params: &liri::encoder::EncoderParams, dataset: &liri::data::Dataset) -> f64 {
    let index = build_token_index(params, dataset.passages(), None, 0).unwrap();
    let sys = DenseSystem { params: params.clone(), index, mode: SearchMode::LateInteraction, k_tok: 8, nprobe: 4, exhaustive: true };
    let mut rankings = BTreeMap::new();
    for q in dataset.test_queries() {
        rankings.insert(q.id.clone(), sys.rank(&q.text, 3).unwrap());
    }
    match_at_k(&rankings, &dataset.test_qrels(), 1).unwrap()
}

fn main() {
    // convergence corpus (gen seed 13)
    let synth = SynthConfig { n_passages: 50, keywords_per_passage: 6, shared_vocab_size: 40,
        queries_per_passage: 3, paraphrase_noise: 0.2, seed: 13 };
    let dataset = generate_synthetic(&synth).unwrap();
    let enc = EncoderConfig { dim: 32, buckets: 1 << 12, ..EncoderConfig::default() };

    // default target 0.95
    let cfg95 = TrainConfig { seed: 13, ..TrainConfig::default() };
    let t0 = std::time::Instant::now();
    let (_, h) = iterative_train(&dataset, &enc, &cfg95).unwrap();
    println!("target95: rounds {} final train m@1 {:.3} wall {:?}",
        h.rounds.len(), h.final_train_match1().unwrap(), t0.elapsed());

    // full budget for trends
    let cfg = TrainConfig { seed: 13, target_train_match1: 1.0, ..TrainConfig::default() };
    let (pi, hi) = iterative_train(&dataset, &enc, &cfg).unwrap();
    let batch = all_negatives_triples(dataset.train_queries(), &dataset.passage_ids());
    let (pa, ha) = train_one_pass(&dataset, &enc, &cfg, &batch, 10).unwrap();
    let bm25 = build_bm25(dataset.passages(), &TokenizerConfig::sparse_default(), Bm25Params::default()).unwrap();
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let gb = bm25_guided_triples(&bm25, dataset.train_queries(), cfg.m, cfg.r_rand, &mut rng).unwrap();
    let (pb, _) = train_one_pass(&dataset, &enc, &cfg, &gb, 10).unwrap();
    println!("trend: ratio {:.3} iter {:.3} allneg {:.3} guided {:.3}",
        hi.total_updates() as f64 / ha.total_updates() as f64,
        test_match1(&pi, &dataset), test_match1(&pa, &dataset), test_match1(&pb, &dataset));

    // delay insensitivity on the pairing corpus
    let synth7 = SynthConfig { n_passages: 400, keywords_per_passage: 6, shared_vocab_size: 100,
        queries_per_passage: 1, paraphrase_noise: 0.3, seed: 5 };
    let d7 = generate_synthetic(&synth7).unwrap();
    let cfg7 = TrainConfig { seed: 3, target_train_match1: 1.0, ..TrainConfig::default() };
    let per_triple_median = |stats: &Vec<EpochStat>| {
        let mut v: Vec<f64> = stats.iter().filter(|e| e.triples > 0)
            .map(|e| e.duration.as_secs_f64() / e.triples as f64).collect();
        v.sort_by(|a,b| a.partial_cmp(b).unwrap());
        v[v.len()/2] * 1e6
    };
    for _ in 0..2 {
        let plain = async_train_instrumented(&d7, &enc, &cfg7, AsyncOptions::default()).unwrap();
        let delayed = async_train_instrumented(&d7, &enc, &cfg7,
            AsyncOptions { sampler_delay: Some(std::time::Duration::from_millis(100)) }).unwrap();
        println!("per-triple µs: plain {:.2} delayed {:.2} ratio {:.3}",
            per_triple_median(&plain.epochs), per_triple_median(&delayed.epochs),
            per_triple_median(&delayed.epochs) / per_triple_median(&plain.epochs));
    }
}
