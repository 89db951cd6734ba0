//! Token counting for context budgeting.
//!
//! Exact token counts are tokenizer-specific; budget comparisons here only
//! need a consistent, monotone estimate, so the default is the usual
//! chars/4 heuristic. Anything needing exact counts can plug in its own
//! [`TokenEstimator`].

/// Pluggable token counter.
pub trait TokenEstimator: Send + Sync {
    fn estimate(&self, text: &str) -> usize;
}

/// `ceil(character count / 4)` — characters, not bytes, so multi-byte
/// text does not inflate the estimate.
#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicEstimator;

impl TokenEstimator for HeuristicEstimator {
    fn estimate(&self, text: &str) -> usize {
        estimate_tokens(text)
    }
}

/// The default heuristic as a plain function.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}
