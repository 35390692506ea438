//! Deterministic text preprocessing shared by the sparse and dense paths.
//!
//! Tokenization is a pure function of `(TokenizerConfig, text)`: whitespace
//! split, then per-token lowercasing, edge punctuation stripping, stopword
//! removal, and stemming, each individually switchable. Punctuation-only
//! tokens are dropped rather than kept and masked at scoring time; keeping
//! masked tokens is a viable alternative but would bloat every index with
//! vectors that never contribute.

mod porter;
mod stopwords;

pub use porter::stem;
pub use stopwords::{builtin, load_stopword_file, BUILTIN_STOPWORDS};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use unicode_properties::{GeneralCategoryGroup, UnicodeGeneralCategory};

/// Tokenization switches. Same config + same text always yields the same
/// tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    pub lowercase: bool,
    pub strip_punctuation: bool,
    pub stopwords: BTreeSet<String>,
    pub stem: bool,
}

impl TokenizerConfig {
    /// Full pipeline used by the BM25 index: lowercase, strip punctuation,
    /// built-in stopwords, Porter stemming.
    pub fn sparse_default() -> Self {
        TokenizerConfig {
            lowercase: true,
            strip_punctuation: true,
            stopwords: stopwords::builtin(),
            stem: true,
        }
    }

    /// Raw word tokens for the encoder: lowercase and punctuation stripping
    /// only. No stopword removal or stemming, so the trainable table sees
    /// every surface form.
    pub fn dense_default() -> Self {
        TokenizerConfig {
            lowercase: true,
            strip_punctuation: true,
            stopwords: BTreeSet::new(),
            stem: false,
        }
    }
}

/// An ordered token sequence. Tokens are never empty and never contain
/// whitespace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, String> {
        self.0.iter()
    }

    /// Rejoin tokens with single spaces (useful for re-tokenization checks).
    pub fn joined(&self) -> String {
        self.0.join(" ")
    }
}

impl From<Vec<String>> for TokenSeq {
    fn from(tokens: Vec<String>) -> Self {
        debug_assert!(tokens
            .iter()
            .all(|t| !t.is_empty() && !t.chars().any(char::is_whitespace)));
        TokenSeq(tokens)
    }
}

/// Unicode general categories P (punctuation) and S (symbol).
fn is_punct_or_symbol(c: char) -> bool {
    matches!(
        c.general_category_group(),
        GeneralCategoryGroup::Punctuation | GeneralCategoryGroup::Symbol
    )
}

/// Tokenize `text` under `config`. Empty or all-stopword input yields an
/// empty sequence; surviving tokens keep their original order.
pub fn tokenize(config: &TokenizerConfig, text: &str) -> TokenSeq {
    let mut out = Vec::new();
    for raw in text.split_whitespace() {
        let mut token = if config.lowercase {
            raw.to_lowercase()
        } else {
            raw.to_string()
        };
        if config.strip_punctuation {
            token = token
                .trim_matches(is_punct_or_symbol)
                .to_string();
        }
        if token.is_empty() || config.stopwords.contains(&token) {
            continue;
        }
        if config.stem {
            token = porter::stem(&token);
        }
        out.push(token);
    }
    TokenSeq(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(lowercase: bool, strip: bool, stops: &[&str], stem: bool) -> TokenizerConfig {
        TokenizerConfig {
            lowercase,
            strip_punctuation: strip,
            stopwords: stops.iter().map(|s| s.to_string()).collect(),
            stem,
        }
    }

    #[test]
    fn lowercase_strip_and_stopwords() {
        let c = cfg(true, true, &["the"], false);
        let toks = tokenize(&c, "The cat sat.");
        assert_eq!(toks.tokens(), ["cat", "sat"]);
    }

    #[test]
    fn empty_input_yields_empty_seq() {
        for c in [
            TokenizerConfig::sparse_default(),
            TokenizerConfig::dense_default(),
            cfg(false, false, &[], false),
        ] {
            assert!(tokenize(&c, "").is_empty());
        }
    }

    #[test]
    fn stemming_applies_after_filters() {
        let c = cfg(true, true, &[], true);
        let toks = tokenize(&c, "running runs");
        assert_eq!(toks.tokens(), ["run", "run"]);
    }

    #[test]
    fn punctuation_only_tokens_are_dropped() {
        let c = cfg(true, true, &[], false);
        let toks = tokenize(&c, "hello -- world !!");
        assert_eq!(toks.tokens(), ["hello", "world"]);
    }

    #[test]
    fn edge_stripping_keeps_interior_punctuation() {
        let c = cfg(true, true, &[], false);
        let toks = tokenize(&c, "(self-contained), e.g. \u{201c}quoted\u{201d}");
        assert_eq!(toks.tokens(), ["self-contained", "e.g", "quoted"]);
    }

    #[test]
    fn all_stopword_text_yields_empty() {
        let c = TokenizerConfig::sparse_default();
        assert!(tokenize(&c, "the of and").is_empty());
    }

    #[test]
    fn no_lowercase_keeps_case() {
        let c = cfg(false, true, &[], false);
        let toks = tokenize(&c, "Hello World");
        assert_eq!(toks.tokens(), ["Hello", "World"]);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            /// Re-tokenizing joined output is a fixpoint when stemming is off.
            #[test]
            fn casing_idempotent(text in "\\PC{0,60}") {
                let c = cfg(true, true, &["the", "a"], false);
                let once = tokenize(&c, &text);
                let twice = tokenize(&c, &once.joined());
                prop_assert_eq!(once, twice);
            }

            /// Identical inputs give identical outputs.
            #[test]
            fn deterministic(text in "\\PC{0,60}") {
                let c = TokenizerConfig::sparse_default();
                prop_assert_eq!(tokenize(&c, &text), tokenize(&c, &text));
            }

            /// Stopword removal preserves the relative order of survivors.
            #[test]
            fn stopwords_preserve_order(words in proptest::collection::vec("[a-z]{1,8}", 0..20)) {
                let text = words.join(" ");
                let with = tokenize(&cfg(true, true, &["the", "of", "cat"], false), &text);
                let without = tokenize(&cfg(true, true, &[], false), &text);
                let filtered: Vec<_> = without
                    .tokens()
                    .iter()
                    .filter(|t| !["the", "of", "cat"].contains(&t.as_str()))
                    .cloned()
                    .collect();
                prop_assert_eq!(with.tokens().to_vec(), filtered);
            }
        }
    }
}
