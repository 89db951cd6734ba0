//! Context pruning for multi-turn dialogue.
//!
//! A long dialogue rarely needs to travel with a query in full. This crate
//! scores every past turn against the incoming query with embedding inner
//! products, z-normalizes the scores, and extracts high-relevance
//! *contiguous spans* of turns by iterating a masked maximum-subarray pass
//! ([`kadane::kadane_dial`]). Selected spans are reassembled in
//! chronological order into a compact context with elision markers at the
//! seams.
//!
//! The crate is organized as:
//!
//! - [`kadane`] — score normalization and iterated span extraction, plus a
//!   brute-force oracle used by the test suite;
//! - [`provider`] — the embedding-provider abstraction: an HTTP client and
//!   a deterministic hashing embedder for offline use;
//! - [`store`] — dialogue turns, embedding matrices kept in lockstep, and
//!   a binary on-disk embedding cache;
//! - [`scoring`] — query-vs-history relevance scores;
//! - [`engine`] — end-to-end pruning, the `full`/`none`/`topk` baselines,
//!   bottom-m span ablation, and context rendering;
//! - [`tokens`] — the character-based token estimate used for budget
//!   accounting;
//! - [`eval`] — datasets, retrieval metrics, the planted-segment synthetic
//!   benchmark, judge-prompt construction, and the comparison harness.
//!
//! ```
//! use dycp_core::{prune, DialogueHistory, PruneConfig, TestEmbedder};
//!
//! let embedder = TestEmbedder::new(64);
//! let mut history = DialogueHistory::new("demo");
//! for (user, agent) in [
//!     ("how do I reset the router", "hold the back button for ten seconds"),
//!     ("what's the default password", "it is printed on the underside label"),
//!     ("thanks, that worked", "glad to hear it"),
//! ] {
//!     history.append_turn(user, agent, &embedder).unwrap();
//! }
//! let selection = prune(
//!     &history.view(),
//!     "router default password",
//!     &embedder,
//!     &PruneConfig::default(),
//! )
//! .unwrap();
//! assert!(!selection.turn_indices.is_empty());
//! ```

pub mod engine;
pub mod error;
pub mod eval;
pub mod kadane;
pub mod provider;
pub mod scoring;
pub mod store;
pub mod tokens;

pub use engine::{
    ablate_bottom, prune, prune_scored, prune_with_query, render_context, segment_stats,
    select_baseline, select_baseline_scored, MethodSpec, PruneResponse, PrunedSelection,
    SegmentStats, ELISION_MARKER,
};
pub use error::{DycpError, Result};
pub use kadane::{
    gains_from, kadane_dial, max_subarray, oracle_kadane_dial, zscore_normalize, PruneConfig,
    ScoreSequence, Span, SpanSet, EPS_STD,
};
pub use provider::{
    parse_embedder_spec, EmbeddingProvider, HttpEmbedder, TestEmbedder, DEFAULT_MODEL,
};
pub use scoring::{embed_query, score_history, score_history_with, QueryEmbedding, Similarity};
pub use store::{
    load_cache, render_encoded_unit, save_cache, DialogueHistory, EmbeddingMatrix, HistoryView,
    TurnRecord,
};
pub use tokens::{estimate_tokens, HeuristicEstimator, TokenEstimator};
