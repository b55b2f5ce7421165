use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::ScoredCandidate;
use crate::hints::HintSet;

/// Weights of the two hint-agreement terms. Dropping a hint zeroes its weight
/// and the remaining one is renormalized to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HintWeights {
    pub closure: f64,
    pub entity_types: f64,
}

impl Default for HintWeights {
    fn default() -> Self {
        Self {
            closure: 0.5,
            entity_types: 0.5,
        }
    }
}

impl HintWeights {
    pub fn with_dropped(drop_et: bool, drop_dc: bool) -> Self {
        match (drop_et, drop_dc) {
            (false, false) => Self::default(),
            (true, false) => Self {
                closure: 1.0,
                entity_types: 0.0,
            },
            (false, true) => Self {
                closure: 0.0,
                entity_types: 1.0,
            },
            (true, true) => Self {
                closure: 0.0,
                entity_types: 0.0,
            },
        }
    }
}

/// Jaccard index of two sets; two empty sets count as identical.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

pub fn hint_similarity(a: &HintSet, b: &HintSet) -> f64 {
    hint_similarity_weighted(a, b, HintWeights::default())
}

pub fn hint_similarity_weighted(a: &HintSet, b: &HintSet, w: HintWeights) -> f64 {
    let dc = if a.dialog_closure == b.dialog_closure { 1.0 } else { 0.0 };
    let sa: BTreeSet<&str> = a.entity_types.iter().map(String::as_str).collect();
    let sb: BTreeSet<&str> = b.entity_types.iter().map(String::as_str).collect();
    w.closure * dc + w.entity_types * jaccard(&sa, &sb)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankOutcome {
    pub selected: Vec<ScoredCandidate>,
    /// Set when fewer than `m` candidates were available.
    pub short: bool,
}

/// Scores each candidate by hint agreement with the query and keeps the best
/// `m`, breaking ties by retrieval rank.
pub fn rerank_select<'a>(
    candidates: &[ScoredCandidate],
    query_hints: &HintSet,
    gold_hints: impl Fn(&str) -> Option<&'a HintSet>,
    weights: HintWeights,
    m: usize,
) -> RerankOutcome {
    let mut scored: Vec<ScoredCandidate> = candidates
        .iter()
        .map(|c| {
            let mut c = c.clone();
            c.hint_score = gold_hints(&c.sample_id)
                .map(|h| hint_similarity_weighted(query_hints, h, weights))
                .unwrap_or(0.0);
            c
        })
        .collect();
    scored.sort_by(|a, b| {
        b.hint_score
            .total_cmp(&a.hint_score)
            .then(a.retrieval_rank.cmp(&b.retrieval_rank))
    });
    let short = scored.len() < m;
    scored.truncate(m);
    RerankOutcome { selected: scored, short }
}

/// Selection without re-ranking: the first `m` by retrieval rank.
pub fn top_by_retrieval(candidates: &[ScoredCandidate], m: usize) -> RerankOutcome {
    let mut selected = candidates.to_vec();
    selected.sort_by_key(|c| c.retrieval_rank);
    let short = selected.len() < m;
    selected.truncate(m);
    RerankOutcome { selected, short }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(id: &str, rank: usize) -> ScoredCandidate {
        ScoredCandidate {
            sample_id: id.into(),
            retrieval_score: 1.0 / rank as f64,
            retrieval_rank: rank,
            hint_score: 0.0,
        }
    }

    #[test]
    fn similarity_values() {
        let q = HintSet::new(["name", "area"], false, 10);
        assert_eq!(hint_similarity(&q, &q), 1.0);
        let other = HintSet::new(["name"], true, 3);
        assert!((hint_similarity(&q, &other) - 0.25).abs() < 1e-12);
        let empty_a = HintSet::new(Vec::<String>::new(), true, 1);
        let empty_b = HintSet::new(Vec::<String>::new(), false, 1);
        assert_eq!(hint_similarity(&empty_a, &empty_b), 0.5);
    }

    #[test]
    fn dropped_weights_renormalize() {
        let q = HintSet::new(["name"], false, 10);
        let c = HintSet::new(["area"], false, 10);
        assert_eq!(hint_similarity_weighted(&q, &c, HintWeights::with_dropped(true, false)), 1.0);
        assert_eq!(hint_similarity_weighted(&q, &c, HintWeights::with_dropped(false, true)), 0.0);
    }

    #[test]
    fn rerank_prefers_hint_match_then_rank() {
        let q = HintSet::new(["name"], false, 5);
        let good = HintSet::new(["name"], false, 5);
        let bad = HintSet::new(["phone"], true, 5);
        let cands = vec![cand("a", 1), cand("b", 2), cand("c", 3)];
        let lookup = |id: &str| match id {
            "a" => Some(&bad),
            _ => Some(&good),
        };
        let out = rerank_select(&cands, &q, lookup, HintWeights::default(), 2);
        let ids: Vec<_> = out.selected.iter().map(|c| c.sample_id.as_str()).collect();
        assert_eq!(ids, ["b", "c"]);
        assert!(!out.short);
    }

    #[test]
    fn short_flag() {
        let q = HintSet::new(["name"], false, 5);
        let out = rerank_select(&[cand("a", 1)], &q, |_| None, HintWeights::default(), 2);
        assert!(out.short);
        assert_eq!(out.selected.len(), 1);
    }
}
