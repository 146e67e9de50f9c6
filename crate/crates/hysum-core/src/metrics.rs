//! Retrieval quality metrics.

use alloc::collections::BTreeSet;
use alloc::string::String;

/// Fraction of gold ids appearing in the top `k` of the ranked list.
/// An empty gold set scores 1.0 by definition (nothing relevant to miss).
///
/// ```
/// use std::collections::BTreeSet;
/// use hysum_core::metrics::recall_at_k;
///
/// let ranked = vec!["a".to_string(), "b".to_string(), "c".to_string()];
/// let gold: BTreeSet<String> = ["a", "c"].iter().map(|s| s.to_string()).collect();
/// assert_eq!(recall_at_k(&ranked, &gold, 2), 0.5);
/// ```
pub fn recall_at_k(ranked: &[String], gold: &BTreeSet<String>, k: usize) -> f64 {
    if gold.is_empty() {
        return 1.0;
    }
    let hits = ranked
        .iter()
        .take(k)
        .filter(|id| gold.contains(*id))
        .count();
    hits as f64 / gold.len() as f64
}

/// Fraction of the top `k` ranked ids that are gold. Zero when `k` is zero.
pub fn precision_at_k(ranked: &[String], gold: &BTreeSet<String>, k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let hits = ranked
        .iter()
        .take(k)
        .filter(|id| gold.contains(*id))
        .count();
    hits as f64 / k as f64
}

/// Reciprocal rank of the first gold id; 0 if none is present.
pub fn mrr(ranked: &[String], gold: &BTreeSet<String>) -> f64 {
    for (index, id) in ranked.iter().enumerate() {
        if gold.contains(id) {
            return 1.0 / (index + 1) as f64;
        }
    }
    0.0
}
