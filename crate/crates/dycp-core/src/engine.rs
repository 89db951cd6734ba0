//! The pruning pipeline: score → select spans → assemble pruned context.
//!
//! [`prune`] is the live path: embed the query, score every visible turn,
//! run the span extraction, and render the selected turns chronologically
//! with elision markers at the discontinuities. [`select_baseline`] gives
//! the full/none/top-k reference selections used by the evaluation
//! harness, and [`ablate_bottom`] strips the least-relevant turns out of
//! each selected span for the continuity ablation.
//!
//! Every function here is pure with respect to the history snapshot it is
//! handed; concurrent pruning against a shared history is safe.

use serde::{Deserialize, Serialize};

use crate::error::{DycpError, Result};
use crate::kadane::{gains_from, kadane_dial, zscore_normalize, PruneConfig, Span, SpanSet};
use crate::provider::EmbeddingProvider;
use crate::scoring::{embed_query, score_history, QueryEmbedding};
use crate::store::HistoryView;
use crate::tokens::estimate_tokens;

/// Marker rendered between selected turns that are not adjacent in the
/// original dialogue.
pub const ELISION_MARKER: &str = "…";

/// Segment-shape statistics of a selection.
///
/// Segments are maximal runs of consecutive selected turn indices — the
/// same accounting for every method, so a span method and a top-k method
/// are comparable. Two extracted spans that happen to touch count as one
/// segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentStats {
    /// RS: number of maximal consecutive runs.
    pub retrieved_segments: usize,
    /// TpS: mean run length; 0 when nothing was selected.
    pub turns_per_segment: f64,
    pub turns_total: usize,
}

/// Runs-of-consecutive-indices statistics over an ascending turn list.
pub fn segment_stats(turn_indices: &[usize]) -> SegmentStats {
    let mut segments = 0usize;
    let mut prev: Option<usize> = None;
    for &t in turn_indices {
        if prev.is_none_or(|p| t > p + 1) {
            segments += 1;
        }
        prev = Some(t);
    }
    let total = turn_indices.len();
    SegmentStats {
        retrieved_segments: segments,
        turns_per_segment: if segments > 0 { total as f64 / segments as f64 } else { 0.0 },
        turns_total: total,
    }
}

/// Which selection strategy to run.
#[derive(Debug, Clone, PartialEq)]
pub enum MethodSpec {
    /// Span extraction with the given thresholds.
    Dycp(PruneConfig),
    /// The whole history.
    Full,
    /// No history at all.
    None,
    /// The `k` highest-scoring turns, ties broken toward the earlier
    /// turn, reported chronologically.
    TopK { k: usize },
}

impl MethodSpec {
    /// Stable identifier used in reports and file names.
    pub fn id(&self) -> String {
        match self {
            MethodSpec::Dycp(_) => "dycp".into(),
            MethodSpec::Full => "full".into(),
            MethodSpec::None => "none".into(),
            MethodSpec::TopK { k } => format!("topk:{k}"),
        }
    }
}

/// A completed selection: which turns, in what preference order, and the
/// rendered context with its token accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrunedSelection {
    /// Method identifier (see [`MethodSpec::id`]; ablation appends
    /// `+bottom<m>`).
    pub method: String,
    /// Spans in the method's preference order (extraction order for span
    /// selection; for rebuilt selections, gain-descending).
    pub spans: SpanSet,
    /// Selected turns, ascending.
    pub turn_indices: Vec<usize>,
    /// Per-selected-turn gain, aligned with `turn_indices`: shifted
    /// z-score (z−τ) for span selection, plain z for baselines. Kept so
    /// rebuilt spans after ablation still have well-defined gains.
    pub turn_gains: Vec<f64>,
    /// Selected turns in the method's own ranking order — what top-k
    /// metric cutoffs apply to. For span selection: spans in extraction
    /// order, turns within a span by score descending.
    pub ranking: Vec<usize>,
    /// Selected turns in chronological order, elision markers between
    /// non-adjacent neighbors.
    pub rendered_context: String,
    pub stats: SegmentStats,
    /// Token estimate of the unpruned, fully rendered history.
    pub token_full: usize,
    /// Token estimate of `rendered_context`.
    pub token_pruned: usize,
}

/// The selection as served over the wire and printed by `--format json`:
/// same shape on both surfaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneResponse {
    pub spans: Vec<Span>,
    pub turns: Vec<usize>,
    pub rs: usize,
    pub tps: f64,
    pub tokens_full: usize,
    pub tokens_pruned: usize,
    pub context: String,
}

impl From<&PrunedSelection> for PruneResponse {
    fn from(sel: &PrunedSelection) -> Self {
        PruneResponse {
            spans: sel.spans.spans().to_vec(),
            turns: sel.turn_indices.clone(),
            rs: sel.stats.retrieved_segments,
            tps: sel.stats.turns_per_segment,
            tokens_full: sel.token_full,
            tokens_pruned: sel.token_pruned,
            context: sel.rendered_context.clone(),
        }
    }
}

/// Renders the given turns in ascending order, inserting an
/// [`ELISION_MARKER`] block wherever consecutive selected turns are not
/// adjacent in the dialogue. Blocks are separated by blank lines. No
/// leading or trailing marker: only interior discontinuities are flagged.
pub fn render_context(view: &HistoryView<'_>, turn_indices: &[usize]) -> String {
    let mut blocks: Vec<&str> = Vec::with_capacity(turn_indices.len());
    let mut prev: Option<usize> = None;
    for &t in turn_indices {
        if let Some(p) = prev {
            if t > p + 1 {
                blocks.push(ELISION_MARKER);
            }
        }
        blocks.push(&view.turn(t).encoded_unit);
        prev = Some(t);
    }
    blocks.join("\n\n")
}

fn render_full(view: &HistoryView<'_>) -> String {
    let blocks: Vec<&str> = view.turns().iter().map(|t| t.encoded_unit.as_str()).collect();
    blocks.join("\n\n")
}

/// Common assembly: derive per-turn gains, chronological indices, stats,
/// rendering, and token accounting from a finished span set.
fn assemble(
    view: &HistoryView<'_>,
    method: String,
    spans: SpanSet,
    per_turn_gains: &[f64],
    ranking: Vec<usize>,
) -> PrunedSelection {
    let turn_indices = spans.turn_indices();
    let turn_gains = turn_indices.iter().map(|&t| per_turn_gains[t - 1]).collect();
    let rendered_context = render_context(view, &turn_indices);
    let stats = segment_stats(&turn_indices);
    let token_full = estimate_tokens(&render_full(view));
    let token_pruned = estimate_tokens(&rendered_context);
    PrunedSelection {
        method,
        spans,
        turn_indices,
        turn_gains,
        ranking,
        rendered_context,
        stats,
        token_full,
        token_pruned,
    }
}

/// Ranking for span selections: spans in extraction order, then turns
/// within each span by score descending (earlier turn on ties).
fn span_ranking(spans: &SpanSet, scores: &[f64]) -> Vec<usize> {
    let mut ranking = Vec::new();
    for span in spans.spans() {
        let mut members: Vec<usize> = (span.start..=span.end).collect();
        members.sort_by(|&a, &b| {
            scores[b - 1].partial_cmp(&scores[a - 1]).unwrap().then(a.cmp(&b))
        });
        ranking.extend(members);
    }
    ranking
}

/// Full pipeline from raw scores: normalize, extract spans, assemble.
/// Pure and deterministic; this is also the hot path the latency budget
/// applies to, downstream of the query embedding.
pub fn prune_scored(
    view: &HistoryView<'_>,
    scores: &[f64],
    config: &PruneConfig,
) -> Result<PrunedSelection> {
    if scores.len() != view.len() {
        return Err(DycpError::Validation(format!(
            "{} scores for {} visible turns",
            scores.len(),
            view.len()
        )));
    }
    let spans = kadane_dial(scores, config);
    let gains = gains_from(zscore_normalize(scores), config.tau)
        .gains
        .expect("gains_from always sets gains");
    let ranking = span_ranking(&spans, scores);
    Ok(assemble(view, "dycp".into(), spans, &gains, ranking))
}

/// Scores the history against an already-embedded query, then selects and
/// assembles.
pub fn prune_with_query(
    view: &HistoryView<'_>,
    query: &QueryEmbedding,
    config: &PruneConfig,
) -> Result<PrunedSelection> {
    let scores = score_history(view, query)?;
    prune_scored(view, &scores, config)
}

/// The live entry point: embeds `query_text`, scores, selects, assembles.
/// An empty history yields an empty selection with an empty context.
pub fn prune(
    view: &HistoryView<'_>,
    query_text: &str,
    provider: &dyn EmbeddingProvider,
    config: &PruneConfig,
) -> Result<PrunedSelection> {
    if view.is_empty() {
        return Ok(assemble(view, "dycp".into(), SpanSet::empty(), &[], Vec::new()));
    }
    let query = embed_query(provider, query_text)?;
    prune_with_query(view, &query, config)
}

/// Runs one of the reference strategies. `full` and `topk` still embed
/// the query (their per-turn gains are z-scores); `none` touches neither
/// the provider nor the scores.
pub fn select_baseline(
    view: &HistoryView<'_>,
    query_text: &str,
    provider: &dyn EmbeddingProvider,
    method: &MethodSpec,
) -> Result<PrunedSelection> {
    match method {
        MethodSpec::Dycp(config) => prune(view, query_text, provider, config),
        MethodSpec::None => {
            Ok(assemble(view, "none".into(), SpanSet::empty(), &[], Vec::new()))
        }
        MethodSpec::Full | MethodSpec::TopK { .. } => {
            if view.is_empty() {
                return Ok(assemble(view, method.id(), SpanSet::empty(), &[], Vec::new()));
            }
            let query = embed_query(provider, query_text)?;
            let scores = score_history(view, &query)?;
            select_baseline_scored(view, &scores, method)
        }
    }
}

/// Baseline selection from precomputed scores (shared with the harness,
/// which scores once per case and reuses).
pub fn select_baseline_scored(
    view: &HistoryView<'_>,
    scores: &[f64],
    method: &MethodSpec,
) -> Result<PrunedSelection> {
    if scores.len() != view.len() {
        return Err(DycpError::Validation(format!(
            "{} scores for {} visible turns",
            scores.len(),
            view.len()
        )));
    }
    let m = view.len();
    let z = zscore_normalize(scores).z;
    match method {
        MethodSpec::Dycp(config) => prune_scored(view, scores, config),
        MethodSpec::None => {
            Ok(assemble(view, "none".into(), SpanSet::empty(), &[], Vec::new()))
        }
        MethodSpec::Full => {
            let spans = if m == 0 {
                SpanSet::empty()
            } else {
                SpanSet::from_spans(vec![Span { start: 1, end: m, gain: z.iter().sum() }])
            };
            let ranking = (1..=m).collect();
            Ok(assemble(view, "full".into(), spans, &z, ranking))
        }
        MethodSpec::TopK { k } => {
            let mut order: Vec<usize> = (1..=m).collect();
            order.sort_by(|&a, &b| {
                scores[b - 1].partial_cmp(&scores[a - 1]).unwrap().then(a.cmp(&b))
            });
            order.truncate((*k).min(m));
            let mut selected = order.clone();
            selected.sort_unstable();
            let spans = spans_from_runs(&selected, &z);
            Ok(assemble(view, method.id(), spans, &z, order))
        }
    }
}

/// Groups an ascending turn list into maximal consecutive runs, each
/// becoming a span whose gain is the sum of its members' per-turn gains.
/// Resulting spans are ordered by gain descending (start ascending on
/// ties) so the set keeps the usual preference-order semantics.
fn spans_from_runs(selected: &[usize], per_turn_gains: &[f64]) -> SpanSet {
    let mut spans: Vec<Span> = Vec::new();
    let mut i = 0;
    while i < selected.len() {
        let start = selected[i];
        let mut end = start;
        let mut gain = per_turn_gains[start - 1];
        while i + 1 < selected.len() && selected[i + 1] == end + 1 {
            i += 1;
            end = selected[i];
            gain += per_turn_gains[end - 1];
        }
        spans.push(Span { start, end, gain });
        i += 1;
    }
    spans.sort_by(|a, b| b.gain.partial_cmp(&a.gain).unwrap().then(a.start.cmp(&b.start)));
    SpanSet::from_spans(spans)
}

/// Continuity ablation: within each span of `selection` independently,
/// drop the `m` lowest-scoring turns (ties drop the later turn first).
/// A span that would lose everything keeps exactly its highest-scoring
/// turn (earlier turn on score ties). Survivors are regrouped into runs;
/// each original span contributes at least one turn.
///
/// `scores` must cover every visible turn of `view` — the same score list
/// the selection was made from.
pub fn ablate_bottom(
    view: &HistoryView<'_>,
    selection: &PrunedSelection,
    scores: &[f64],
    m: usize,
) -> Result<PrunedSelection> {
    if m < 1 {
        return Err(DycpError::Validation("bottom-m ablation needs m ≥ 1".into()));
    }
    if scores.len() != view.len() {
        return Err(DycpError::Validation(format!(
            "{} scores for {} visible turns",
            scores.len(),
            view.len()
        )));
    }
    // Per-turn gains of the original selection, by turn index.
    let gain_of = |t: usize| -> f64 {
        let at = selection.turn_indices.binary_search(&t).expect("selected turn");
        selection.turn_gains[at]
    };

    let mut survivors: Vec<usize> = Vec::new();
    for span in selection.spans() {
        let members: Vec<usize> = (span.start..=span.end).collect();
        if m >= members.len() {
            // Anchor rule: keep the span's single most relevant turn.
            let &anchor = members
                .iter()
                .max_by(|&&a, &&b| {
                    scores[a - 1]
                        .partial_cmp(&scores[b - 1])
                        .unwrap()
                        .then(b.cmp(&a)) // ties: earlier turn wins
                })
                .unwrap();
            survivors.push(anchor);
        } else {
            // Drop the m lowest scores, later turn first on ties.
            let mut removal: Vec<usize> = members.clone();
            removal.sort_by(|&a, &b| {
                scores[a - 1].partial_cmp(&scores[b - 1]).unwrap().then(b.cmp(&a))
            });
            let dropped: std::collections::BTreeSet<usize> =
                removal.into_iter().take(m).collect();
            survivors.extend(members.into_iter().filter(|t| !dropped.contains(t)));
        }
    }
    survivors.sort_unstable();

    let mut gains_by_turn = vec![0.0f64; view.len()];
    for &t in &survivors {
        gains_by_turn[t - 1] = gain_of(t);
    }
    let spans = spans_from_runs(&survivors, &gains_by_turn);
    let ranking = span_ranking(&spans, scores);
    let method = format!("{}+bottom{m}", selection.method);
    Ok(assemble(view, method, spans, &gains_by_turn, ranking))
}

impl PrunedSelection {
    /// Spans in preference order (convenience passthrough).
    pub fn spans(&self) -> &[Span] {
        self.spans.spans()
    }
}
