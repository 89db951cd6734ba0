//! Method-comparison runs: evaluate selection methods over a dataset,
//! aggregate retrieval/token/latency statistics, and emit reports.
//!
//! Reports are deterministic by construction — ordered maps, a run id
//! derived from the parameters rather than a timestamp, and timing
//! collection off by default (the `prune_ms` fields then stay 0.0) — so
//! repeating a run over the same dataset with the offline embedder
//! reproduces every output byte.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::dataset::DialogueSource;
use super::metrics::{retrieval_metrics, CaseMetrics};
use crate::engine::{
    ablate_bottom, prune_scored, select_baseline_scored, MethodSpec, PrunedSelection,
};
use crate::error::{DycpError, Result};
use crate::kadane::PruneConfig;
use crate::provider::{fnv1a64, EmbeddingProvider};
use crate::scoring::{embed_query, score_history, QueryEmbedding};
use crate::store::DialogueHistory;

/// A method as requested on the command line; `TopKAuto` still needs its
/// budget resolved against a measured selection volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodChoice {
    Dycp,
    Full,
    None,
    TopK(usize),
    /// Fixed top-k with k matched to the mean number of turns the span
    /// method selects on this dataset (rounded).
    TopKAuto,
}

impl MethodChoice {
    pub fn id(&self) -> String {
        match self {
            MethodChoice::Dycp => "dycp".into(),
            MethodChoice::Full => "full".into(),
            MethodChoice::None => "none".into(),
            MethodChoice::TopK(k) => format!("topk:{k}"),
            MethodChoice::TopKAuto => "topk:auto".into(),
        }
    }
}

/// Parses `dycp`, `full`, `none`, `topk:auto`, or `topk:<k>`.
pub fn parse_method(s: &str) -> Result<MethodChoice> {
    match s {
        "dycp" => Ok(MethodChoice::Dycp),
        "full" => Ok(MethodChoice::Full),
        "none" => Ok(MethodChoice::None),
        "topk:auto" => Ok(MethodChoice::TopKAuto),
        _ => {
            if let Some(rest) = s.strip_prefix("topk:") {
                let k: usize = rest.parse().map_err(|_| {
                    DycpError::Validation(format!("bad top-k budget {rest:?}"))
                })?;
                if k == 0 {
                    return Err(DycpError::Validation("top-k budget must be ≥ 1".into()));
                }
                return Ok(MethodChoice::TopK(k));
            }
            Err(DycpError::Validation(format!(
                "unknown method {s:?} (expected dycp, full, none, topk:<k>, or topk:auto)"
            )))
        }
    }
}

/// Harness-level knobs shared by every method in a comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonConfig {
    pub prune: PruneConfig,
    /// Metric cutoffs; normalized to sorted-unique at run start.
    pub ks: Vec<usize>,
    /// Wall-time collection. Off by default so repeated runs emit
    /// byte-identical reports; on, each case row carries its measured
    /// score+select+assemble milliseconds.
    pub collect_timing: bool,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        ComparisonConfig { prune: PruneConfig::default(), ks: vec![1, 3, 5], collect_timing: false }
    }
}

/// Parameters echoed into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunParams {
    pub tau: f64,
    pub theta: f64,
    pub ks: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_auto: Option<bool>,
    /// Bottom-m ablation depth, present only on ablated runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bottom: Option<usize>,
    pub embedder: String,
    pub collect_timing: bool,
}

/// Case tallies for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunCounts {
    /// Cases that produced a metric row.
    pub cases: usize,
    /// Cases skipped because their gold set was empty.
    pub skipped_empty_gold: usize,
}

/// One evaluated test case under one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRow {
    pub dialogue_id: String,
    /// 0-based test index within its dialogue.
    pub case: usize,
    pub hit: f64,
    pub recall: f64,
    pub precision: f64,
    pub hit_at: BTreeMap<usize, f64>,
    pub recall_at: BTreeMap<usize, f64>,
    pub precision_at: BTreeMap<usize, f64>,
    pub turns_total: usize,
    pub rs: usize,
    pub tps: f64,
    pub tokens_full: usize,
    pub tokens_pruned: usize,
    pub prune_ms: f64,
}

/// Across-case means for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallStats {
    pub hit: f64,
    pub recall: f64,
    pub precision: f64,
    pub hit_at: BTreeMap<usize, f64>,
    pub recall_at: BTreeMap<usize, f64>,
    pub precision_at: BTreeMap<usize, f64>,
    pub tokens_full_mean: f64,
    pub tokens_pruned_mean: f64,
    pub tps: f64,
    pub rs: f64,
    pub prune_ms_mean: f64,
}

/// A full evaluated run of one method over one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub method: String,
    pub params: RunParams,
    pub counts: RunCounts,
    pub overall: OverallStats,
    pub cases: Vec<CaseRow>,
}

/// Evaluates each method over the dataset. Histories and queries are
/// embedded once up front (batched per dialogue); `topk:auto` resolves
/// its budget from a span-method pass before any record is produced.
pub fn run_comparison(
    dataset: &[DialogueSource],
    methods: &[MethodChoice],
    provider: &dyn EmbeddingProvider,
    cfg: &ComparisonConfig,
) -> Result<Vec<RunRecord>> {
    let mut ks = cfg.ks.clone();
    ks.retain(|&k| k > 0);
    ks.sort_unstable();
    ks.dedup();
    let cfg = ComparisonConfig { ks, ..cfg.clone() };

    let histories: Vec<DialogueHistory> =
        dataset.iter().map(|d| d.build_history(provider)).collect::<Result<_>>()?;
    let queries = embed_all_queries(dataset, provider)?;

    let auto_k = if methods.iter().any(|m| matches!(m, MethodChoice::TopKAuto)) {
        Some(matched_budget(dataset, &histories, &queries, &cfg)?)
    } else {
        None
    };

    methods
        .iter()
        .map(|&choice| {
            let (spec, k, k_auto) = match choice {
                MethodChoice::Dycp => (MethodSpec::Dycp(cfg.prune), None, None),
                MethodChoice::Full => (MethodSpec::Full, None, None),
                MethodChoice::None => (MethodSpec::None, None, None),
                MethodChoice::TopK(k) => (MethodSpec::TopK { k }, Some(k), None),
                MethodChoice::TopKAuto => {
                    let k = auto_k.expect("resolved above");
                    (MethodSpec::TopK { k }, Some(k), Some(true))
                }
            };
            evaluate_method(dataset, &histories, &queries, &spec, choice.id(), k, k_auto, provider, &cfg)
        })
        .collect()
}

fn embed_all_queries(
    dataset: &[DialogueSource],
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<Vec<QueryEmbedding>>> {
    dataset
        .iter()
        .map(|d| {
            let texts: Vec<&str> = d.tests.iter().map(|t| t.query.as_str()).collect();
            if texts.is_empty() {
                return Ok(Vec::new());
            }
            let rows = provider.embed(&texts)?;
            if rows.len() != texts.len() {
                return Err(DycpError::ProviderContract(format!(
                    "asked for {} embeddings, got {}",
                    texts.len(),
                    rows.len()
                )));
            }
            rows.into_iter().map(QueryEmbedding::new).collect()
        })
        .collect()
}

/// Mean selected-turn count of the span method across every case,
/// rounded to the nearest whole turn (at least 1).
fn matched_budget(
    dataset: &[DialogueSource],
    histories: &[DialogueHistory],
    queries: &[Vec<QueryEmbedding>],
    cfg: &ComparisonConfig,
) -> Result<usize> {
    let spec = MethodSpec::Dycp(cfg.prune);
    let mut total = 0usize;
    let mut cases = 0usize;
    for (d_idx, d) in dataset.iter().enumerate() {
        for (t_idx, test) in d.tests.iter().enumerate() {
            let view = histories[d_idx].view_upto(test.asked_after_turn)?;
            let scores = score_history(&view, &queries[d_idx][t_idx])?;
            let sel = select_baseline_scored(&view, &scores, &spec)?;
            total += sel.stats.turns_total;
            cases += 1;
        }
    }
    if cases == 0 {
        return Err(DycpError::Validation("no test cases to match a budget against".into()));
    }
    Ok(((total as f64 / cases as f64).round() as usize).max(1))
}

#[allow(clippy::too_many_arguments)]
fn evaluate_method(
    dataset: &[DialogueSource],
    histories: &[DialogueHistory],
    queries: &[Vec<QueryEmbedding>],
    spec: &MethodSpec,
    method_id: String,
    k: Option<usize>,
    k_auto: Option<bool>,
    provider: &dyn EmbeddingProvider,
    cfg: &ComparisonConfig,
) -> Result<RunRecord> {
    let mut rows: Vec<CaseRow> = Vec::new();
    let mut skipped = 0usize;
    for (d_idx, d) in dataset.iter().enumerate() {
        for (t_idx, test) in d.tests.iter().enumerate() {
            let view = histories[d_idx].view_upto(test.asked_after_turn)?;
            // Timed region = the full pruning side: embed the query, score,
            // select, render. With timing off, queries were already embedded
            // in one batch up front and the region is skipped entirely.
            let (sel, prune_ms) = if cfg.collect_timing {
                let started = Instant::now();
                let q = crate::scoring::embed_query(provider, &test.query)?;
                let scores = score_history(&view, &q)?;
                let sel = select_baseline_scored(&view, &scores, spec)?;
                (sel, started.elapsed().as_secs_f64() * 1e3)
            } else {
                let scores = score_history(&view, &queries[d_idx][t_idx])?;
                let sel = select_baseline_scored(&view, &scores, spec)?;
                (sel, 0.0)
            };

            if test.gold_turns.is_empty() {
                skipped += 1;
                continue;
            }
            let m = retrieval_metrics(&sel.ranking, &test.gold_turns, &cfg.ks)
                .expect("gold is non-empty here");
            rows.push(case_row(&d.dialogue_id, t_idx, &m, &sel, prune_ms));
        }
    }

    let params = RunParams {
        tau: cfg.prune.tau,
        theta: cfg.prune.theta,
        ks: cfg.ks.clone(),
        k,
        k_auto,
        bottom: None,
        embedder: provider.name().to_string(),
        collect_timing: cfg.collect_timing,
    };
    Ok(finish_record(method_id, params, rows, skipped, &cfg.ks))
}

fn case_row(
    dialogue_id: &str,
    case: usize,
    m: &CaseMetrics,
    sel: &PrunedSelection,
    prune_ms: f64,
) -> CaseRow {
    CaseRow {
        dialogue_id: dialogue_id.to_string(),
        case,
        hit: m.hit,
        recall: m.recall,
        precision: m.precision,
        hit_at: m.at.iter().map(|(&k, v)| (k, v.hit)).collect(),
        recall_at: m.at.iter().map(|(&k, v)| (k, v.recall)).collect(),
        precision_at: m.at.iter().map(|(&k, v)| (k, v.precision)).collect(),
        turns_total: sel.stats.turns_total,
        rs: sel.stats.retrieved_segments,
        tps: sel.stats.turns_per_segment,
        tokens_full: sel.token_full,
        tokens_pruned: sel.token_pruned,
        prune_ms,
    }
}

fn finish_record(
    method_id: String,
    params: RunParams,
    rows: Vec<CaseRow>,
    skipped: usize,
    ks: &[usize],
) -> RunRecord {
    let params_json = serde_json::to_string(&params).expect("params serialize to JSON");
    let run_id = format!(
        "{}-{:016x}",
        method_id.replace(':', "-"),
        fnv1a64(params_json.as_bytes())
    );
    RunRecord {
        run_id,
        method: method_id,
        params,
        counts: RunCounts { cases: rows.len(), skipped_empty_gold: skipped },
        overall: aggregate(&rows, ks),
        cases: rows,
    }
}

/// Ablation sweep: the span method unablated, then `dycp+bottom{m}` for
/// each requested depth — per case, prune as usual, then drop the m
/// lowest-scoring turns of each span (argmax-anchored) before scoring
/// retrieval metrics and token counts.
pub fn run_ablation(
    dataset: &[DialogueSource],
    provider: &dyn EmbeddingProvider,
    cfg: &ComparisonConfig,
    bottoms: &[usize],
) -> Result<Vec<RunRecord>> {
    if bottoms.contains(&0) {
        return Err(DycpError::Validation("ablation depths must be ≥ 1".into()));
    }
    let mut ks = cfg.ks.clone();
    ks.retain(|&k| k > 0);
    ks.sort_unstable();
    ks.dedup();
    let cfg = ComparisonConfig { ks, ..cfg.clone() };

    let histories: Vec<DialogueHistory> =
        dataset.iter().map(|d| d.build_history(provider)).collect::<Result<_>>()?;
    let queries = embed_all_queries(dataset, provider)?;

    let mut records = vec![evaluate_method(
        dataset,
        &histories,
        &queries,
        &MethodSpec::Dycp(cfg.prune),
        "dycp".into(),
        None,
        None,
        provider,
        &cfg,
    )?];

    for &depth in bottoms {
        let mut rows: Vec<CaseRow> = Vec::new();
        let mut skipped = 0usize;
        for (d_idx, d) in dataset.iter().enumerate() {
            for (t_idx, test) in d.tests.iter().enumerate() {
                let view = histories[d_idx].view_upto(test.asked_after_turn)?;
                let ablated = |scores: &[f64]| -> Result<PrunedSelection> {
                    let base = prune_scored(&view, scores, &cfg.prune)?;
                    if base.turn_indices.is_empty() {
                        return Ok(base);
                    }
                    ablate_bottom(&view, &base, scores, depth)
                };
                let (sel, prune_ms) = if cfg.collect_timing {
                    let started = Instant::now();
                    let q = embed_query(provider, &test.query)?;
                    let scores = score_history(&view, &q)?;
                    let sel = ablated(&scores)?;
                    (sel, started.elapsed().as_secs_f64() * 1e3)
                } else {
                    let scores = score_history(&view, &queries[d_idx][t_idx])?;
                    (ablated(&scores)?, 0.0)
                };
                if test.gold_turns.is_empty() {
                    skipped += 1;
                    continue;
                }
                let m = retrieval_metrics(&sel.ranking, &test.gold_turns, &cfg.ks)
                    .expect("gold is non-empty here");
                rows.push(case_row(&d.dialogue_id, t_idx, &m, &sel, prune_ms));
            }
        }
        let params = RunParams {
            tau: cfg.prune.tau,
            theta: cfg.prune.theta,
            ks: cfg.ks.clone(),
            k: None,
            k_auto: None,
            bottom: Some(depth),
            embedder: provider.name().to_string(),
            collect_timing: cfg.collect_timing,
        };
        records.push(finish_record(format!("dycp+bottom{depth}"), params, rows, skipped, &cfg.ks));
    }
    Ok(records)
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in values {
        sum += v;
        n += 1;
    }
    if n > 0 {
        sum / n as f64
    } else {
        0.0
    }
}

fn aggregate(rows: &[CaseRow], ks: &[usize]) -> OverallStats {
    let at_mean = |pick: fn(&CaseRow) -> &BTreeMap<usize, f64>| -> BTreeMap<usize, f64> {
        ks.iter().map(|&k| (k, mean(rows.iter().map(|r| pick(r)[&k])))).collect()
    };
    OverallStats {
        hit: mean(rows.iter().map(|r| r.hit)),
        recall: mean(rows.iter().map(|r| r.recall)),
        precision: mean(rows.iter().map(|r| r.precision)),
        hit_at: at_mean(|r| &r.hit_at),
        recall_at: at_mean(|r| &r.recall_at),
        precision_at: at_mean(|r| &r.precision_at),
        tokens_full_mean: mean(rows.iter().map(|r| r.tokens_full as f64)),
        tokens_pruned_mean: mean(rows.iter().map(|r| r.tokens_pruned as f64)),
        tps: mean(rows.iter().map(|r| r.tps)),
        rs: mean(rows.iter().map(|r| r.rs as f64)),
        prune_ms_mean: mean(rows.iter().map(|r| r.prune_ms)),
    }
}

/// Writes one run's record as pretty-printed JSON (stable key order,
/// trailing newline).
pub fn write_results_json(record: &RunRecord, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(record)
        .map_err(|e| DycpError::Validation(format!("serializing report: {e}")))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Writes the flat per-case table for any number of runs into one CSV.
pub fn write_cases_csv(records: &[RunRecord], ks: &[usize], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec![
        "method".to_string(),
        "dialogue_id".to_string(),
        "case".to_string(),
        "hit".to_string(),
        "recall".to_string(),
        "precision".to_string(),
    ];
    for &k in ks {
        header.push(format!("hit_at_{k}"));
        header.push(format!("recall_at_{k}"));
        header.push(format!("precision_at_{k}"));
    }
    header.extend(
        ["turns_total", "rs", "tps", "tokens_full", "tokens_pruned", "prune_ms"]
            .map(String::from),
    );
    w.write_record(&header).map_err(csv_err)?;
    for r in records {
        for row in &r.cases {
            let mut rec = vec![
                r.method.clone(),
                row.dialogue_id.clone(),
                row.case.to_string(),
                row.hit.to_string(),
                row.recall.to_string(),
                row.precision.to_string(),
            ];
            for &k in ks {
                rec.push(row.hit_at[&k].to_string());
                rec.push(row.recall_at[&k].to_string());
                rec.push(row.precision_at[&k].to_string());
            }
            rec.push(row.turns_total.to_string());
            rec.push(row.rs.to_string());
            rec.push(row.tps.to_string());
            rec.push(row.tokens_full.to_string());
            rec.push(row.tokens_pruned.to_string());
            rec.push(row.prune_ms.to_string());
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> DycpError {
    DycpError::Validation(format!("csv: {e}"))
}

/// Plain-text summary across runs, one row per method.
pub fn render_summary_table(records: &[RunRecord]) -> String {
    let ks: Vec<usize> = records
        .first()
        .map(|r| r.params.ks.clone())
        .unwrap_or_default();
    let mut out = String::new();
    out.push_str(&format!("{:<12} {:>6} {:>6} {:>6}", "method", "H", "R", "P"));
    for &k in &ks {
        out.push_str(&format!(" {:>6}", format!("R@{k}")));
    }
    out.push_str(&format!(
        " {:>10} {:>12} {:>6} {:>6} {:>9}\n",
        "tok_full", "tok_pruned", "TpS", "RS", "prune_ms"
    ));
    for r in records {
        let o = &r.overall;
        out.push_str(&format!(
            "{:<12} {:>6.3} {:>6.3} {:>6.3}",
            r.method, o.hit, o.recall, o.precision
        ));
        for &k in &ks {
            out.push_str(&format!(" {:>6.3}", o.recall_at.get(&k).copied().unwrap_or(0.0)));
        }
        out.push_str(&format!(
            " {:>10.1} {:>12.1} {:>6.2} {:>6.2} {:>9.3}\n",
            o.tokens_full_mean, o.tokens_pruned_mean, o.tps, o.rs, o.prune_ms_mean
        ));
    }
    out
}
