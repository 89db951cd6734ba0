//! Evaluation harness: datasets, retrieval metrics, the planted-segment
//! synthetic benchmark, comparison runs with report emission, and judge
//! prompt plumbing.

pub mod dataset;
pub mod judge;
pub mod metrics;
pub mod planted;
pub mod run;

pub use dataset::{load_dialogues, write_dialogues, DialogueSource, TestCase};
pub use judge::{build_judge_prompt, em_contains, parse_rating, JudgePrompt};
pub use metrics::{retrieval_metrics, AtK, CaseMetrics};
pub use planted::{generate_planted_benchmark, PlantedConfig};
pub use run::{
    parse_method, render_summary_table, run_ablation, run_comparison, write_cases_csv,
    write_results_json, CaseRow, ComparisonConfig, MethodChoice, OverallStats, RunCounts,
    RunParams, RunRecord,
};
