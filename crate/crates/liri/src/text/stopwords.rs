//! Built-in English stopword list and stopword-file loading.

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};

/// Default English stopword list (120 high-frequency function words).
pub const BUILTIN_STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are",
    "as", "at", "be", "because", "been", "before", "being", "below", "between", "both", "but",
    "by", "can", "could", "did", "do", "does", "doing", "down", "during", "each", "few", "for",
    "from", "further", "had", "has", "have", "having", "he", "her", "here", "hers", "him", "his",
    "how", "i", "if", "in", "into", "is", "it", "its", "just", "me", "more", "most", "my", "no",
    "nor", "not", "now", "of", "off", "on", "once", "only", "or", "other", "our", "ours", "out",
    "over", "own", "s", "same", "she", "should", "so", "some", "such", "t", "than", "that", "the",
    "their", "theirs", "them", "then", "there", "these", "they", "this", "those", "through", "to",
    "too", "under", "until", "up", "very", "was", "we", "were", "what", "when", "where", "which",
    "while", "who", "whom", "why", "will", "with", "would", "you", "your", "yours",
];

/// The built-in list as an owned set.
pub fn builtin() -> BTreeSet<String> {
    BUILTIN_STOPWORDS.iter().map(|s| s.to_string()).collect()
}

/// Load a stopword set from a file: one token per line, UTF-8, `#` starts a
/// comment, blank lines ignored.
pub fn load_stopword_file(path: &Path) -> Result<BTreeSet<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut set = BTreeSet::new();
    for line in text.lines() {
        let entry = match line.find('#') {
            Some(pos) => &line[..pos],
            None => line,
        };
        let entry = entry.trim();
        if !entry.is_empty() {
            set.insert(entry.to_string());
        }
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_has_expected_size() {
        assert_eq!(BUILTIN_STOPWORDS.len(), 120);
        assert!(builtin().contains("the"));
    }

    #[test]
    fn file_parsing_skips_comments_and_blanks() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stop.txt");
        std::fs::write(&path, "# header\nthe\n\nand # trailing\n  of  \n").unwrap();
        let set = load_stopword_file(&path).unwrap();
        assert_eq!(
            set.into_iter().collect::<Vec<_>>(),
            vec!["and", "of", "the"]
        );
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let err = load_stopword_file(Path::new("/nonexistent/stop.txt")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
