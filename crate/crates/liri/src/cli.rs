//! Command-line driver.
//!
//! Subcommands: `synth`, `index`, `search`, `train`, `evaluate`, `ensemble`,
//! `benchmark`. Exit codes: 0 success, 1 usage error, 2 data error.
//!
//! An index directory holds `bm25.idx`, `encoder.ckpt`, and `tokens.tvix`;
//! `train` rewrites `encoder.ckpt` (plus `history.jsonl` and `triples.tsv`)
//! without touching `tokens.tvix`, so a dense search against the directory
//! fails with a stale-index error until `index` is rerun with the new
//! checkpoint.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{generate_synthetic, load_dataset, save_dataset, Dataset, SynthConfig};
use crate::dense::{
    build_token_index, dense_score_all, dense_search, load_token_index, save_token_index,
    search_exact, SearchMode,
};
use crate::encoder::{
    init_params, load_checkpoint, save_checkpoint, EncoderConfig, EncoderParams, Similarity,
};
use crate::error::{Error, Result};
use crate::evalbench::{
    benchmark_latency, ensemble_scores, match_at_k, run_protocol, summary_row, EnsembleWeights,
    EvalReport,
};
use crate::io_util::atomic_write;
use crate::learn::{
    all_negatives_triples, async_train, bm25_guided_triples, curate_triples, iterative_train,
    save_triples, train_one_pass, TrainConfig,
};
use crate::rank::RankedResult;
use crate::sparse::{build_bm25, load_bm25, save_bm25, Bm25Params};
use crate::system::{Bm25System, DenseSystem, SearchSystem};
use crate::text::TokenizerConfig;

const BM25_FILE: &str = "bm25.idx";
const CKPT_FILE: &str = "encoder.ckpt";
const TOKENS_FILE: &str = "tokens.tvix";

#[derive(Parser)]
#[command(
    name = "liri",
    about = "FAQ answer retrieval: term-matching and late-interaction dense search with trainable encoders",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic FAQ dataset directory
    Synth(SynthArgs),
    /// Build and persist the sparse and dense indexes for a dataset
    Index(IndexArgs),
    /// Query an index directory, or dump full score maps for a query split
    Search(SearchArgs),
    /// Train the encoder with a chosen strategy
    Train(TrainArgs),
    /// Run the k-examples-per-passage evaluation protocol
    Evaluate(EvaluateArgs),
    /// Combine two score dumps linearly
    Ensemble(EnsembleArgs),
    /// Measure single-query latency and index footprint
    Benchmark(BenchmarkArgs),
}

#[derive(Args)]
struct EncoderFlags {
    /// Embedding dimension
    #[arg(long, default_value_t = 32)]
    dim: usize,
    /// Hash table rows
    #[arg(long, default_value_t = 1 << 15)]
    buckets: usize,
    #[arg(long = "query-maxlen", default_value_t = 32)]
    query_maxlen: usize,
    #[arg(long = "doc-maxlen", default_value_t = 128)]
    doc_maxlen: usize,
    /// Token similarity: neg_l2 or dot
    #[arg(long, default_value = "neg_l2")]
    similarity: String,
    #[arg(long = "hash-seed", default_value_t = 0)]
    hash_seed: u64,
}

impl EncoderFlags {
    fn to_config(&self) -> Result<EncoderConfig> {
        let config = EncoderConfig {
            dim: self.dim,
            buckets: self.buckets,
            query_maxlen: self.query_maxlen,
            doc_maxlen: self.doc_maxlen,
            similarity: Similarity::parse(&self.similarity)?,
            hash_seed: self.hash_seed,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Output dataset directory
    #[arg(long)]
    out: PathBuf,
    #[arg(long = "n-passages", default_value_t = 50)]
    n_passages: usize,
    #[arg(long = "keywords-per-passage", default_value_t = 6)]
    keywords_per_passage: usize,
    #[arg(long = "shared-vocab-size", default_value_t = 40)]
    shared_vocab_size: usize,
    #[arg(long = "queries-per-passage", default_value_t = 3)]
    queries_per_passage: usize,
    /// Probability that a query is phrased in paraphrase tokens
    #[arg(long, default_value_t = 0.2)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct IndexArgs {
    /// Dataset directory
    #[arg(long)]
    data: PathBuf,
    /// Index directory to create or refresh
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
    /// Reuse an existing checkpoint instead of initializing one
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[command(flatten)]
    encoder: EncoderFlags,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Coarse clusters for the token index (omit for exact search)
    #[arg(long = "ivf-clusters")]
    ivf_clusters: Option<usize>,
    #[arg(long, default_value_t = 1.2)]
    k1: f64,
    #[arg(long, default_value_t = 0.75)]
    b: f64,
}

#[derive(Args)]
struct SearchArgs {
    /// Index directory produced by `index`
    #[arg(long = "index-dir")]
    index_dir: PathBuf,
    /// Query text (single-query mode)
    #[arg(long, conflicts_with = "scores_out")]
    query: Option<String>,
    /// System: bm25, dense, or single_vector
    #[arg(long, default_value = "dense")]
    system: String,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long = "k-tok", default_value_t = 8)]
    k_tok: usize,
    #[arg(long, default_value_t = 4)]
    nprobe: usize,
    /// Re-rank the whole corpus instead of fetched candidates
    #[arg(long, default_value_t = false)]
    exact: bool,
    /// Dataset directory (batch mode; scores every split query)
    #[arg(long, requires = "scores_out")]
    data: Option<PathBuf>,
    /// Query split for batch mode: train or test
    #[arg(long, default_value = "test")]
    split: String,
    /// Write full per-query score maps to this file
    #[arg(long = "scores-out", requires = "data")]
    scores_out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
    /// allneg, bm25guided, iterative, or async
    #[arg(long)]
    strategy: String,
    #[command(flatten)]
    encoder: EncoderFlags,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    /// Epochs per round (iterative/async) or total epochs (one-pass)
    #[arg(long, default_value_t = 6)]
    epochs: usize,
    #[arg(long, default_value_t = 5)]
    rounds: usize,
    /// Negative-curation rank cutoff
    #[arg(long, default_value_t = 20)]
    m: usize,
    #[arg(long = "r-rand", default_value_t = 3)]
    r_rand: usize,
    #[arg(long = "target-match1", default_value_t = 0.95)]
    target_match1: f64,
    #[arg(long, default_value_t = 32)]
    minibatch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    /// bm25, dense, or single_vector
    #[arg(long)]
    system: String,
    /// Training strategy for trainable systems
    #[arg(long, default_value = "iterative")]
    strategy: String,
    #[arg(long = "k-ex-per-doc", default_value_t = 1)]
    k_ex_per_doc: usize,
    #[arg(long, default_value_t = 10)]
    seeds: usize,
    #[arg(long = "base-seed", default_value_t = 0)]
    base_seed: u64,
    /// Report file (text plus summary row)
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    encoder: EncoderFlags,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 6)]
    epochs: usize,
    #[arg(long, default_value_t = 5)]
    rounds: usize,
    #[arg(long, default_value_t = 20)]
    m: usize,
    #[arg(long = "r-rand", default_value_t = 3)]
    r_rand: usize,
    #[arg(long = "target-match1", default_value_t = 0.95)]
    target_match1: f64,
    #[arg(long, default_value_t = 32)]
    minibatch: usize,
    #[arg(long = "k-tok", default_value_t = 8)]
    k_tok: usize,
    #[arg(long, default_value_t = 4)]
    nprobe: usize,
    #[arg(long, default_value_t = false)]
    exact: bool,
}

#[derive(Args)]
struct EnsembleArgs {
    /// First score dump (query_id, passage_id, score; tab-separated)
    #[arg(long = "scores-a")]
    scores_a: PathBuf,
    /// Second score dump
    #[arg(long = "scores-b")]
    scores_b: PathBuf,
    /// Weight pair `A:B`, e.g. `0.3:1`
    #[arg(long)]
    weights: String,
    /// Combined dump output
    #[arg(long)]
    out: PathBuf,
    /// Dataset directory; when given, Match@1/Match@3 of the combination is
    /// printed against this split's qrels
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    split: String,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long = "index-dir")]
    index_dir: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "dense")]
    system: String,
    #[arg(long, default_value_t = 2)]
    warmup: usize,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long = "k-tok", default_value_t = 8)]
    k_tok: usize,
    #[arg(long, default_value_t = 4)]
    nprobe: usize,
    #[arg(long, default_value_t = false)]
    exact: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Entry point used by `main`; returns the process exit code.
pub fn cli_main<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprint!("{e}");
            return 1;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Index(args) => cmd_index(args),
        Command::Search(args) => cmd_search(args),
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Ensemble(args) => cmd_ensemble(args),
        Command::Benchmark(args) => cmd_benchmark(args),
    }
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let config = SynthConfig {
        n_passages: args.n_passages,
        keywords_per_passage: args.keywords_per_passage,
        shared_vocab_size: args.shared_vocab_size,
        queries_per_passage: args.queries_per_passage,
        paraphrase_noise: args.noise,
        seed: args.seed,
    };
    let dataset = generate_synthetic(&config)?;
    save_dataset(&dataset, &args.out)?;
    println!(
        "wrote {} ({} passages, {} train queries, {} test queries)",
        args.out.display(),
        dataset.passages().len(),
        dataset.train_queries().len(),
        dataset.test_queries().len()
    );
    Ok(())
}

fn cmd_index(args: IndexArgs) -> Result<()> {
    let dataset = load_dataset(&args.data)?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;

    let bm25 = build_bm25(
        dataset.passages(),
        &TokenizerConfig::sparse_default(),
        Bm25Params {
            k1: args.k1,
            b: args.b,
        },
    )?;
    save_bm25(&bm25, &args.out_dir.join(BM25_FILE))?;

    let params = match &args.checkpoint {
        Some(path) => load_checkpoint(path)?,
        None => init_params(&args.encoder.to_config()?, args.seed)?,
    };
    save_checkpoint(&params, &args.out_dir.join(CKPT_FILE))?;

    let tokens = build_token_index(&params, dataset.passages(), args.ivf_clusters, args.seed)?;
    save_token_index(&tokens, &args.out_dir.join(TOKENS_FILE))?;

    println!(
        "indexed {} passages: {} terms, {} token vectors (checkpoint v{})",
        dataset.passages().len(),
        bm25.terms().count(),
        tokens.n_entries(),
        params.version()
    );
    Ok(())
}

fn load_dense(dir: &Path) -> Result<(EncoderParams, crate::dense::TokenVectorIndex)> {
    let params = load_checkpoint(&dir.join(CKPT_FILE))?;
    let index = load_token_index(&dir.join(TOKENS_FILE))?;
    Ok((params, index))
}

fn query_split<'a>(dataset: &'a Dataset, split: &str) -> Result<&'a [crate::data::Query]> {
    match split {
        "train" => Ok(dataset.train_queries()),
        "test" => Ok(dataset.test_queries()),
        other => Err(Error::invalid("split", format!("`{other}`"))),
    }
}

fn cmd_search(args: SearchArgs) -> Result<()> {
    if let Some(scores_out) = &args.scores_out {
        let data = args.data.as_ref().expect("clap enforces --data");
        let dataset = load_dataset(data)?;
        let queries = query_split(&dataset, &args.split)?;
        let mut dump = String::new();
        match args.system.as_str() {
            "bm25" => {
                let index = load_bm25(&args.index_dir.join(BM25_FILE))?;
                for q in queries {
                    for (pid, s) in crate::sparse::bm25_score_all(&index, &q.text) {
                        dump.push_str(&format!("{}\t{}\t{:.17e}\n", q.id, pid, s));
                    }
                }
            }
            "dense" => {
                let (params, index) = load_dense(&args.index_dir)?;
                for q in queries {
                    for (pid, s) in dense_score_all(&index, &params, &q.text)? {
                        dump.push_str(&format!("{}\t{}\t{:.17e}\n", q.id, pid, s));
                    }
                }
            }
            other => {
                return Err(Error::invalid("system", format!("`{other}`")));
            }
        }
        atomic_write(scores_out, |buf| buf.extend_from_slice(dump.as_bytes()))?;
        println!("wrote {}", scores_out.display());
        return Ok(());
    }

    let query = args
        .query
        .as_deref()
        .ok_or_else(|| Error::invalid("search", "either --query or --scores-out is required"))?;
    let result = match args.system.as_str() {
        "bm25" => {
            let index = load_bm25(&args.index_dir.join(BM25_FILE))?;
            crate::sparse::bm25_search(&index, query, args.k)
        }
        "dense" | "single_vector" => {
            let (params, index) = load_dense(&args.index_dir)?;
            let mode = if args.system == "dense" {
                SearchMode::LateInteraction
            } else {
                SearchMode::SingleVector
            };
            if args.exact && mode == SearchMode::LateInteraction {
                search_exact(&index, &params, query, args.k)?
            } else {
                dense_search(&index, &params, query, args.k, args.k_tok, args.nprobe, mode)?
            }
        }
        other => {
            return Err(Error::invalid("system", format!("`{other}`")));
        }
    };
    for (rank, (id, score)) in result.items().iter().enumerate() {
        println!("{}\t{}\t{:.6}", rank + 1, id, score);
    }
    Ok(())
}

fn train_config(args: &TrainArgs) -> TrainConfig {
    TrainConfig {
        learning_rate: args.lr,
        epochs_per_round: args.epochs,
        max_rounds: args.rounds,
        m: args.m,
        r_rand: args.r_rand,
        target_train_match1: args.target_match1,
        minibatch_size: args.minibatch,
        seed: args.seed,
    }
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let dataset = load_dataset(&args.data)?;
    let encoder_config = args.encoder.to_config()?;
    let config = train_config(&args);
    config.validate()?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;

    let (params, history) = match args.strategy.as_str() {
        "iterative" => iterative_train(&dataset, &encoder_config, &config)?,
        "async" => async_train(&dataset, &encoder_config, &config)?,
        "allneg" => {
            let batch = all_negatives_triples(dataset.train_queries(), &dataset.passage_ids());
            save_triples(&batch, &args.out_dir.join("triples.tsv"))?;
            train_one_pass(&dataset, &encoder_config, &config, &batch, args.epochs)?
        }
        "bm25guided" => {
            let bm25 = build_bm25(
                dataset.passages(),
                &TokenizerConfig::sparse_default(),
                Bm25Params::default(),
            )?;
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let batch = bm25_guided_triples(
                &bm25,
                dataset.train_queries(),
                config.m,
                config.r_rand,
                &mut rng,
            )?;
            save_triples(&batch, &args.out_dir.join("triples.tsv"))?;
            train_one_pass(&dataset, &encoder_config, &config, &batch, args.epochs)?
        }
        other => {
            return Err(Error::invalid("strategy", format!("`{other}`")));
        }
    };

    if matches!(args.strategy.as_str(), "iterative" | "async") {
        // what the final checkpoint still gets wrong, for inspection
        let index = build_token_index(&params, dataset.passages(), None, config.seed)?;
        let mut rankings = BTreeMap::new();
        for q in dataset.train_queries() {
            rankings.insert(
                q.id.clone(),
                crate::dense::search_exact_topk(&index, &params, &q.text, config.m)?,
            );
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let batch = curate_triples(
            &rankings,
            &dataset.train_qrels(),
            &dataset.passage_ids(),
            config.m,
            config.r_rand,
            &mut rng,
            params.version(),
        )?;
        save_triples(&batch, &args.out_dir.join("triples.tsv"))?;
    }

    save_checkpoint(&params, &args.out_dir.join(CKPT_FILE))?;
    history.write_jsonl(&args.out_dir.join("history.jsonl"))?;
    println!(
        "{}: {} rounds, {} triple updates, final train match@1 {:.4}, checkpoint v{}",
        args.strategy,
        history.rounds.len(),
        history.total_updates(),
        history.final_train_match1().unwrap_or(0.0),
        params.version()
    );
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let dataset = load_dataset(&args.data)?;
    let encoder_config = args.encoder.to_config()?;
    let config = TrainConfig {
        learning_rate: args.lr,
        epochs_per_round: args.epochs,
        max_rounds: args.rounds,
        m: args.m,
        r_rand: args.r_rand,
        target_train_match1: args.target_match1,
        minibatch_size: args.minibatch,
        seed: 0,
    };
    let strategy = args.strategy.clone();
    let system_kind = args.system.clone();
    let (k_tok, nprobe, exact) = (args.k_tok, args.nprobe, args.exact);

    let factory = |subset: &Dataset, seed: u64| -> Result<Box<dyn SearchSystem>> {
        match system_kind.as_str() {
            "bm25" => Ok(Box::new(Bm25System {
                index: build_bm25(
                    subset.passages(),
                    &TokenizerConfig::sparse_default(),
                    Bm25Params::default(),
                )?,
            })),
            "dense" | "single_vector" => {
                let config = TrainConfig { seed, ..config.clone() };
                let params = if subset.train_queries().is_empty() {
                    init_params(&encoder_config, seed)?
                } else {
                    match strategy.as_str() {
                        "iterative" => iterative_train(subset, &encoder_config, &config)?.0,
                        "async" => async_train(subset, &encoder_config, &config)?.0,
                        "allneg" => {
                            let batch = all_negatives_triples(
                                subset.train_queries(),
                                &subset.passage_ids(),
                            );
                            train_one_pass(subset, &encoder_config, &config, &batch, args.epochs)?.0
                        }
                        "bm25guided" => {
                            let bm25 = build_bm25(
                                subset.passages(),
                                &TokenizerConfig::sparse_default(),
                                Bm25Params::default(),
                            )?;
                            let mut rng = ChaCha8Rng::seed_from_u64(seed);
                            let batch = bm25_guided_triples(
                                &bm25,
                                subset.train_queries(),
                                config.m,
                                config.r_rand,
                                &mut rng,
                            )?;
                            train_one_pass(subset, &encoder_config, &config, &batch, args.epochs)?.0
                        }
                        other => {
                            return Err(Error::invalid("strategy", format!("`{other}`")));
                        }
                    }
                };
                let index = build_token_index(&params, subset.passages(), None, seed)?;
                let mode = if system_kind == "dense" {
                    SearchMode::LateInteraction
                } else {
                    SearchMode::SingleVector
                };
                Ok(Box::new(DenseSystem {
                    params,
                    index,
                    mode,
                    k_tok,
                    nprobe,
                    exhaustive: exact,
                }))
            }
            other => Err(Error::invalid("system", format!("`{other}`"))),
        }
    };

    let report = run_protocol(&dataset, args.k_ex_per_doc, args.seeds, args.base_seed, &factory)?;
    let mut by_k = BTreeMap::new();
    by_k.insert(args.k_ex_per_doc, report.clone());
    let text = format!(
        "{}\nsystem\t0-shot\t1 ex/doc\t3 ex/doc\n{}\n",
        report.to_text(),
        summary_row(&report.system, &by_k, &[0, 1, 3])
    );
    print!("{text}");
    if let Some(out) = &args.out {
        atomic_write(out, |buf| buf.extend_from_slice(text.as_bytes()))?;
    }
    Ok(())
}

type ScoreDump = BTreeMap<String, BTreeMap<String, f64>>;

fn read_score_dump(path: &Path) -> Result<ScoreDump> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut dump: ScoreDump = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let (Some(qid), Some(pid), Some(score)) = (parts.next(), parts.next(), parts.next())
        else {
            return Err(Error::Malformed {
                path: path.to_path_buf(),
                line: lineno + 1,
                msg: "expected query_id<TAB>passage_id<TAB>score".into(),
            });
        };
        let score: f64 = score.parse().map_err(|_| Error::Malformed {
            path: path.to_path_buf(),
            line: lineno + 1,
            msg: format!("bad score `{score}`"),
        })?;
        dump.entry(qid.to_string())
            .or_default()
            .insert(pid.to_string(), score);
    }
    Ok(dump)
}

fn cmd_ensemble(args: EnsembleArgs) -> Result<()> {
    let weights = EnsembleWeights::parse(&args.weights)?;
    let dump_a = read_score_dump(&args.scores_a)?;
    let dump_b = read_score_dump(&args.scores_b)?;
    if dump_a.keys().ne(dump_b.keys()) {
        let only_a = dump_a.keys().filter(|k| !dump_b.contains_key(*k)).cloned().collect();
        let only_b = dump_b.keys().filter(|k| !dump_a.contains_key(*k)).cloned().collect();
        return Err(Error::ScoreKeyMismatch { only_a, only_b });
    }

    let mut out_text = String::new();
    let mut rankings: BTreeMap<String, RankedResult> = BTreeMap::new();
    for (qid, scores_a) in &dump_a {
        let combined = ensemble_scores(scores_a, &dump_b[qid], &weights)?;
        for (pid, s) in combined.items() {
            out_text.push_str(&format!("{}\t{}\t{:.17e}\n", qid, pid, s));
        }
        rankings.insert(qid.clone(), combined);
    }
    atomic_write(&args.out, |buf| buf.extend_from_slice(out_text.as_bytes()))?;
    println!("wrote {}", args.out.display());

    if let Some(data) = &args.data {
        let dataset = load_dataset(data)?;
        let queries = query_split(&dataset, &args.split)?;
        let qrels: BTreeMap<String, String> = queries
            .iter()
            .filter(|q| rankings.contains_key(&q.id))
            .map(|q| (q.id.clone(), q.gold.clone()))
            .collect();
        if !qrels.is_empty() {
            println!(
                "match@1 {:.4}\tmatch@3 {:.4} over {} queries",
                match_at_k(&rankings, &qrels, 1)?,
                match_at_k(&rankings, &qrels, 3)?,
                qrels.len()
            );
        }
    }
    Ok(())
}

fn cmd_benchmark(args: BenchmarkArgs) -> Result<()> {
    let dataset = load_dataset(&args.data)?;
    let queries: Vec<String> = dataset.test_queries().iter().map(|q| q.text.clone()).collect();
    let system: Box<dyn SearchSystem> = match args.system.as_str() {
        "bm25" => Box::new(Bm25System {
            index: load_bm25(&args.index_dir.join(BM25_FILE))?,
        }),
        "dense" | "single_vector" => {
            let (params, index) = load_dense(&args.index_dir)?;
            let mode = if args.system == "dense" {
                SearchMode::LateInteraction
            } else {
                SearchMode::SingleVector
            };
            Box::new(DenseSystem {
                params,
                index,
                mode,
                k_tok: args.k_tok,
                nprobe: args.nprobe,
                exhaustive: args.exact,
            })
        }
        other => {
            return Err(Error::invalid("system", format!("`{other}`")));
        }
    };
    let (stats, index_bytes) =
        benchmark_latency(system.as_ref(), &queries, args.warmup, args.reps, args.k)?;
    let mut report = EvalReport::aggregate(system.name(), 0, vec![]);
    report.latency = Some(stats);
    report.index_bytes = Some(index_bytes);
    let text = format!(
        "system {}\nmean {:.3} ms\tp50 {:.3} ms\tp95 {:.3} ms\tsamples {}\nindex bytes {}\n",
        system.name(),
        stats.mean_ms,
        stats.p50_ms,
        stats.p95_ms,
        stats.samples,
        index_bytes
    );
    print!("{text}");
    if let Some(out) = &args.out {
        atomic_write(out, |buf| buf.extend_from_slice(text.as_bytes()))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_cli(args: &[&str]) -> i32 {
        cli_main(std::iter::once("liri").chain(args.iter().copied()))
    }

    #[test]
    fn unknown_subcommand_is_usage_error() {
        assert_eq!(run_cli(&["frobnicate"]), 1);
        assert_eq!(run_cli(&["search", "--no-such-flag"]), 1);
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(run_cli(&["--help"]), 0);
        assert_eq!(run_cli(&["train", "--help"]), 0);
    }

    #[test]
    fn missing_data_is_a_data_error() {
        assert_eq!(
            run_cli(&["index", "--data", "/nonexistent", "--out-dir", "/tmp/liri-nope"]),
            2
        );
    }
}
