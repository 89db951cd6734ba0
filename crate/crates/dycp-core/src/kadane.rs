//! Score normalization and iterated masked maximum-subarray span selection.
//!
//! The selection pipeline: z-normalize the raw relevance scores, shift them
//! by the gain threshold `tau` so only above-average turns contribute
//! positive gain, then repeatedly extract the maximum-sum contiguous span
//! with a single Kadane scan, masking each extracted span so later
//! iterations pick disjoint intervals. Extraction continues while the most
//! recently extracted span's cumulative gain is at or above the stopping
//! threshold `theta`; the first span is extracted unconditionally, so any
//! non-empty input yields at least one span.
//!
//! Everything here is a pure function of its inputs; no I/O, no shared
//! state, safe to call concurrently.

use std::num::NonZeroUsize;

use serde::{Deserialize, Serialize};

/// Standard deviations at or below this are treated as zero: all z-scores
/// become 0, gains become `-tau`, and selection degenerates to a single
/// earliest turn. Keeps constant and single-score inputs well-defined.
pub const EPS_STD: f64 = 1e-12;

/// A raw score list together with its derived normalization products.
///
/// Population statistics (the `1/m` variance) are used throughout, so a
/// single score normalizes to z = 0 via the degenerate-σ convention.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSequence {
    /// Raw relevance scores, one per history turn, in turn order.
    pub raw: Vec<f64>,
    /// Population mean μ of `raw` (0 when empty).
    pub mean: f64,
    /// Population standard deviation σ of `raw` (0 when empty).
    pub std: f64,
    /// z_i = (s_i − μ)/σ, or all zeros when σ ≤ [`EPS_STD`].
    pub z: Vec<f64>,
    /// g_i = z_i − τ once a gain shift has been applied; `None` until then.
    pub gains: Option<Vec<f64>>,
}

/// One contiguous selected span of turns, inclusive on both ends.
///
/// Indices are 1-based turn numbers. `gain` is the cumulative shifted
/// z-score over the span at the time it was extracted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub gain: f64,
}

impl Span {
    /// Number of turns covered.
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false // start ≤ end always holds; a span covers at least one turn
    }

    /// Whether the 1-based turn index falls inside this span.
    pub fn contains(&self, turn: usize) -> bool {
        self.start <= turn && turn <= self.end
    }
}

/// Thresholds controlling span extraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruneConfig {
    /// Gain threshold τ subtracted from every z-score.
    pub tau: f64,
    /// Stopping threshold θ: extraction continues while the previously
    /// extracted span's gain is ≥ θ. Never applied to the first span.
    pub theta: f64,
    /// Safety cap on the number of extracted spans. `None` means no cap
    /// for histories up to 10,000 turns and a cap of one span per turn
    /// beyond that (each iteration masks at least one turn, so the loop
    /// is finite either way; the cap bounds worst-case quadratic work).
    pub max_spans: Option<NonZeroUsize>,
}

impl Default for PruneConfig {
    fn default() -> Self {
        PruneConfig { tau: 0.6, theta: 1.0, max_spans: None }
    }
}

impl PruneConfig {
    pub fn new(tau: f64, theta: f64) -> Self {
        PruneConfig { tau, theta, max_spans: None }
    }

    fn effective_max_spans(&self, m: usize) -> usize {
        match self.max_spans {
            Some(n) => n.get(),
            None if m > 10_000 => m,
            None => usize::MAX,
        }
    }
}

/// Spans in extraction order (gains non-increasing), with chronological
/// views derived on demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpanSet {
    spans: Vec<Span>,
}

impl SpanSet {
    pub fn empty() -> Self {
        SpanSet { spans: Vec::new() }
    }

    /// Wraps externally built spans (baseline selections, ablation
    /// rebuilds). The caller guarantees pairwise disjoint intervals and a
    /// meaningful order; nothing is re-sorted.
    pub fn from_spans(spans: Vec<Span>) -> Self {
        debug_assert!(
            {
                let mut sorted = spans.clone();
                sorted.sort_by_key(|s| s.start);
                sorted.windows(2).all(|p| p[0].end < p[1].start)
                    && sorted.iter().all(|s| s.start >= 1 && s.start <= s.end)
            },
            "spans must be disjoint, ordered intervals"
        );
        SpanSet { spans }
    }

    /// Spans in the order they were extracted.
    pub fn spans(&self) -> &[Span] {
        &self.spans
    }

    /// Spans sorted by start turn. Non-overlap makes this a total order.
    pub fn chronological(&self) -> Vec<Span> {
        let mut sorted = self.spans.clone();
        sorted.sort_by_key(|s| s.start);
        sorted
    }

    /// Ascending list of every turn index covered by some span.
    pub fn turn_indices(&self) -> Vec<usize> {
        let mut turns: Vec<usize> =
            self.spans.iter().flat_map(|s| s.start..=s.end).collect();
        turns.sort_unstable();
        turns
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }
}

/// z-normalizes `raw` with population statistics. Gains are left unset.
///
/// When σ ≤ [`EPS_STD`] (constant input, single score, or empty), every
/// z-score is 0 by convention rather than dividing by ~zero.
pub fn zscore_normalize(raw: &[f64]) -> ScoreSequence {
    let m = raw.len();
    if m == 0 {
        return ScoreSequence { raw: Vec::new(), mean: 0.0, std: 0.0, z: Vec::new(), gains: None };
    }
    let mean = raw.iter().sum::<f64>() / m as f64;
    let var = raw.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / m as f64;
    let std = var.sqrt();
    let z = if std > EPS_STD {
        raw.iter().map(|s| (s - mean) / std).collect()
    } else {
        vec![0.0; m]
    };
    ScoreSequence { raw: raw.to_vec(), mean, std, z, gains: None }
}

/// Applies the gain shift g_i = z_i − τ to a normalized sequence.
pub fn gains_from(seq: ScoreSequence, tau: f64) -> ScoreSequence {
    let gains = seq.z.iter().map(|z| z - tau).collect();
    ScoreSequence { gains: Some(gains), ..seq }
}

/// Maximum-sum contiguous span over the unmasked entries, or `None` when
/// every entry is masked (or the slice is empty).
///
/// `None` entries are masked: a span can neither contain nor cross one, so
/// the running sum resets after each. Comparisons are strict, which fixes
/// the tie behavior: among equal-sum candidates the earliest end wins, and
/// among candidates sharing that end the latest start wins (a prefix whose
/// sum is exactly zero is dropped rather than kept).
pub fn max_subarray(gains: &[Option<f64>]) -> Option<Span> {
    let mut best: Option<Span> = None;
    // (running sum, 1-based start of the current run)
    let mut run: Option<(f64, usize)> = None;
    for (idx, slot) in gains.iter().enumerate() {
        let here = idx + 1;
        let Some(g) = *slot else {
            run = None;
            continue;
        };
        run = Some(match run {
            // Strict '>': extend only when the carried prefix is worth
            // strictly more than restarting at this element.
            Some((sum, start)) if sum + g > g => (sum + g, start),
            _ => (g, here),
        });
        let (sum, start) = run.unwrap();
        let improves = match &best {
            Some(b) => sum > b.gain, // strict '>': ties keep the earlier end
            None => true,
        };
        if improves {
            best = Some(Span { start, end: here, gain: sum });
        }
    }
    best
}

/// Iterated masked span extraction over raw scores.
///
/// Normalizes, applies the gain shift, then loops: extract the maximum
/// subarray, record it, mask its entries. The loop continues while the
/// last extracted gain is ≥ `theta` (the tracking value starts at +∞, so
/// the first span is unconditional) and stops early once everything is
/// masked or the span cap is reached. A final span with gain below
/// `theta` is still recorded — the threshold gates continuing, not
/// keeping.
pub fn kadane_dial(scores: &[f64], config: &PruneConfig) -> SpanSet {
    let seq = gains_from(zscore_normalize(scores), config.tau);
    let gains = seq.gains.expect("gains_from always sets gains");
    let m = gains.len();
    if m == 0 {
        return SpanSet { spans: Vec::new() };
    }
    let cap = config.effective_max_spans(m);

    // Unmasked maximal intervals (0-based inclusive), in positional order,
    // each with its cached best span. Masking a span splits one interval,
    // so only the two fragments need re-folding — noisy score sequences
    // extract O(m) spans, and re-scanning the whole array for each would
    // go quadratic. The fold per fragment is exactly the restarted fold
    // the whole-array scan performs after a mask, so results are
    // bit-identical to [`max_subarray`] over the masked array.
    let mut segments: Vec<(usize, usize)> = vec![(0, m - 1)];
    let mut bests: Vec<Option<Span>> = vec![best_in_segment(&gains, 0, m - 1)];

    let mut spans: Vec<Span> = Vec::new();
    let mut last_gain = f64::INFINITY;
    while last_gain >= config.theta && spans.len() < cap {
        // Left-to-right strict '>' over segment winners reproduces the
        // whole-array tie rule: equal sums keep the earlier end, which
        // lives in the earlier segment; within a segment the fold already
        // resolved earliest-end-then-latest-start.
        let mut chosen: Option<(usize, Span)> = None;
        for (idx, best) in bests.iter().enumerate() {
            if let Some(cand) = best {
                let improves = match &chosen {
                    Some((_, c)) => cand.gain > c.gain,
                    None => true,
                };
                if improves {
                    chosen = Some((idx, *cand));
                }
            }
        }
        let Some((idx, span)) = chosen else { break };
        last_gain = span.gain;
        spans.push(span);

        let (lo, hi) = segments[idx];
        segments.remove(idx);
        bests.remove(idx);
        let (s0, e0) = (span.start - 1, span.end - 1);
        if e0 < hi {
            segments.insert(idx, (e0 + 1, hi));
            bests.insert(idx, best_in_segment(&gains, e0 + 1, hi));
        }
        if s0 > lo {
            segments.insert(idx, (lo, s0 - 1));
            bests.insert(idx, best_in_segment(&gains, lo, s0 - 1));
        }
    }
    SpanSet { spans }
}

/// Best span of one fully-unmasked interval (0-based inclusive bounds),
/// via the same strict-'>' fold as [`max_subarray`].
fn best_in_segment(gains: &[f64], lo: usize, hi: usize) -> Option<Span> {
    let mut best: Option<Span> = None;
    let mut run: Option<(f64, usize)> = None;
    for (idx, &g) in gains.iter().enumerate().take(hi + 1).skip(lo) {
        let here = idx + 1;
        run = Some(match run {
            Some((sum, start)) if sum + g > g => (sum + g, start),
            _ => (g, here),
        });
        let (sum, start) = run.unwrap();
        let improves = match &best {
            Some(b) => sum > b.gain,
            None => true,
        };
        if improves {
            best = Some(Span { start, end: here, gain: sum });
        }
    }
    best
}

/// Reference implementation of [`kadane_dial`] that finds each iteration's
/// best span by enumerating every contiguous unmasked interval. Quadratic
/// per iteration — test oracle only, refuses inputs longer than 4096.
///
/// Tie resolution matches the strict-comparison scan exactly: equal sums
/// prefer the earlier end, then the later start.
pub fn oracle_kadane_dial(scores: &[f64], config: &PruneConfig) -> SpanSet {
    assert!(scores.len() <= 4096, "oracle is quadratic; refusing m > 4096");
    let m = scores.len();
    // Independent naive statistics (same population formulas).
    let mut total = 0.0;
    for &s in scores {
        total += s;
    }
    let mean = if m == 0 { 0.0 } else { total / m as f64 };
    let mut sq_dev = 0.0;
    for &s in scores {
        sq_dev += (s - mean) * (s - mean);
    }
    let std = if m == 0 { 0.0 } else { (sq_dev / m as f64).sqrt() };
    let mut work: Vec<Option<f64>> = scores
        .iter()
        .map(|&s| {
            let z = if std > EPS_STD { (s - mean) / std } else { 0.0 };
            Some(z - config.tau)
        })
        .collect();

    let cap = config.effective_max_spans(m);
    let mut spans: Vec<Span> = Vec::new();
    let mut last_gain = f64::INFINITY;
    while last_gain >= config.theta && spans.len() < cap {
        let Some(span) = exhaustive_best_span(&work) else { break };
        for slot in &mut work[span.start - 1..span.end] {
            *slot = None;
        }
        last_gain = span.gain;
        spans.push(span);
    }
    SpanSet { spans }
}

/// All-pairs scan: every contiguous interval that contains no masked entry.
fn exhaustive_best_span(gains: &[Option<f64>]) -> Option<Span> {
    let m = gains.len();
    let mut best: Option<Span> = None;
    for start in 1..=m {
        let mut sum = 0.0;
        for end in start..=m {
            let Some(g) = gains[end - 1] else { break };
            sum += g;
            let replace = match &best {
                None => true,
                Some(b) => {
                    sum > b.gain
                        || (sum == b.gain
                            && (end < b.end || (end == b.end && start > b.start)))
                }
            };
            if replace {
                best = Some(Span { start, end, gain: sum });
            }
        }
    }
    best
}
