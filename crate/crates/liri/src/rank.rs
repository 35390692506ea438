//! Ranked retrieval results shared by the sparse and dense paths.

use serde::{Deserialize, Serialize};

/// A scored ranking over passage ids, strictly descending by score.
///
/// Ties are broken by ascending passage id (lexicographic byte order) so that
/// every ranking is fully deterministic. Duplicate ids are rejected at
/// construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    items: Vec<(String, f64)>,
}

impl RankedResult {
    /// Build a ranking from unordered `(passage_id, score)` pairs.
    ///
    /// Sorts descending by score with ascending-id tie-break and keeps the
    /// first `k` entries. Later duplicates of the same id are dropped.
    pub fn from_scores(mut scores: Vec<(String, f64)>, k: usize) -> Self {
        scores.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.0.cmp(&b.0))
        });
        let mut seen = std::collections::HashSet::new();
        let mut items = Vec::with_capacity(scores.len().min(k));
        for (id, s) in scores {
            if items.len() == k {
                break;
            }
            if seen.insert(id.clone()) {
                items.push((id, s));
            }
        }
        RankedResult { items }
    }

    pub fn empty() -> Self {
        RankedResult { items: Vec::new() }
    }

    pub fn items(&self) -> &[(String, f64)] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// 1-based rank of `id`, if present.
    pub fn rank_of(&self, id: &str) -> Option<usize> {
        self.items.iter().position(|(p, _)| p == id).map(|i| i + 1)
    }

    /// Ids of the top `n` entries, in rank order.
    pub fn top_ids(&self, n: usize) -> Vec<&str> {
        self.items.iter().take(n).map(|(id, _)| id.as_str()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orders_descending_with_id_tiebreak() {
        let r = RankedResult::from_scores(
            vec![
                ("b".into(), 1.0),
                ("a".into(), 1.0),
                ("c".into(), 2.0),
            ],
            10,
        );
        let ids: Vec<_> = r.items().iter().map(|(id, _)| id.as_str()).collect();
        assert_eq!(ids, vec!["c", "a", "b"]);
    }

    #[test]
    fn truncates_to_k() {
        let r = RankedResult::from_scores(
            vec![("a".into(), 3.0), ("b".into(), 2.0), ("c".into(), 1.0)],
            2,
        );
        assert_eq!(r.len(), 2);
        assert_eq!(r.rank_of("a"), Some(1));
        assert_eq!(r.rank_of("c"), None);
    }

    #[test]
    fn drops_duplicate_ids() {
        let r = RankedResult::from_scores(vec![("a".into(), 3.0), ("a".into(), 1.0)], 10);
        assert_eq!(r.len(), 1);
    }
}
