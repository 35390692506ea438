//! liri: a self-contained answer-retrieval engine for small FAQ corpora.
//!
//! Combines a BM25 inverted index, late-interaction dense retrieval over a
//! trainable hashed-token encoder (sum of per-query-token maximum
//! similarities, with optional IVF candidate generation), single-vector
//! retrieval, hard-negative training loops (one-pass, iterative, and
//! asynchronous), score ensembling, and an evaluation/benchmark harness.

pub mod error;
pub mod io_util;
pub mod rank;
pub mod text;
pub mod sparse;
pub mod encoder;
pub mod dense;
pub mod data;
pub mod learn;
pub mod evalbench;
pub mod system;
pub mod cli;

pub use error::{Error, Result};
pub use rank::RankedResult;
pub use sparse::Passage;
