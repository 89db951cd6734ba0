//! Retrieval accuracy: Hit@k, Recall@k, Precision@k, and their overall
//! (full-selection) counterparts.
//!
//! `selected` is the method's own ranking — whatever order it considers
//! most-relevant-first — and `@k` metrics read its length-k prefix.
//! Precision@k divides by the nominal k even when fewer than k turns were
//! selected: a method that answers with 2 turns at k=5 is not rewarded
//! for abstaining.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

/// Metrics at one cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtK {
    /// 1.0 when any gold turn appears in the top-k, else 0.0.
    pub hit: f64,
    /// Fraction of gold turns covered by the top-k.
    pub recall: f64,
    /// Fraction of the nominal k occupied by gold turns.
    pub precision: f64,
}

/// Per-case metrics: overall plus each requested cutoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseMetrics {
    pub hit: f64,
    pub recall: f64,
    pub precision: f64,
    pub at: BTreeMap<usize, AtK>,
}

/// Scores one ranked selection against a gold set at the given cutoffs.
///
/// Returns `None` when `gold` is empty — recall and hit are undefined
/// there; callers tally such cases separately instead of averaging them.
pub fn retrieval_metrics(
    selected: &[usize],
    gold: &BTreeSet<usize>,
    ks: &[usize],
) -> Option<CaseMetrics> {
    if gold.is_empty() {
        return None;
    }
    let matched_upto = |k: usize| -> usize {
        selected.iter().take(k).filter(|t| gold.contains(t)).count()
    };

    let total_matched = matched_upto(selected.len());
    let overall_precision = if selected.is_empty() {
        0.0
    } else {
        total_matched as f64 / selected.len() as f64
    };
    let mut at = BTreeMap::new();
    for &k in ks {
        if k == 0 {
            continue; // a zero cutoff is meaningless; ignore rather than divide by it
        }
        let matched = matched_upto(k);
        at.insert(
            k,
            AtK {
                hit: if matched > 0 { 1.0 } else { 0.0 },
                recall: matched as f64 / gold.len() as f64,
                precision: matched as f64 / k as f64,
            },
        );
    }
    Some(CaseMetrics {
        hit: if total_matched > 0 { 1.0 } else { 0.0 },
        recall: total_matched as f64 / gold.len() as f64,
        precision: overall_precision,
        at,
    })
}
