//! Subcommand implementations. Each takes fully-resolved settings and
//! returns the shared error type; exit-code mapping lives in `main`.

use std::path::{Path, PathBuf};

use dycp_core::eval::{
    generate_planted_benchmark, load_dialogues, render_summary_table, run_ablation,
    run_comparison, write_cases_csv, write_dialogues, write_results_json, ComparisonConfig,
    DialogueSource, MethodChoice, PlantedConfig, RunRecord,
};
use dycp_core::{
    load_cache, parse_embedder_spec, save_cache, DialogueHistory, DycpError, EmbeddingProvider,
    PruneConfig, PruneResponse, Result,
};

/// Dialogue ids become cache file names; keep them path-safe.
pub fn safe_file_name(id: &str) -> String {
    id.chars().map(|c| if c.is_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn cache_path(dir: &Path, dialogue_id: &str) -> PathBuf {
    dir.join(format!("{}.emb", safe_file_name(dialogue_id)))
}

/// Builds a history from a cache file when one exists (no provider
/// calls), else by embedding every turn.
pub(crate) fn build_history(
    source: &DialogueSource,
    provider: &dyn EmbeddingProvider,
    cache_dir: Option<&Path>,
) -> Result<DialogueHistory> {
    if let Some(dir) = cache_dir {
        let path = cache_path(dir, &source.dialogue_id);
        if path.exists() {
            let matrix = load_cache(&path)?;
            if matrix.rows() != source.turn_count() {
                return Err(DycpError::Validation(format!(
                    "cache {} has {} rows but dialogue {:?} has {} turns",
                    path.display(),
                    matrix.rows(),
                    source.dialogue_id,
                    source.turn_count()
                )));
            }
            let mut history = DialogueHistory::new(source.dialogue_id.clone());
            for (i, (user, agent)) in source.turns.iter().enumerate() {
                history.append_turn_with_vector(user, agent, matrix.row(i).to_vec())?;
            }
            return Ok(history);
        }
    }
    source.build_history(provider)
}

pub fn cmd_ingest(dialogues: &Path, embedder_spec: &str, cache_dir: &Path) -> Result<()> {
    let sources = load_dialogues(dialogues)?;
    let provider = parse_embedder_spec(embedder_spec)?;
    std::fs::create_dir_all(cache_dir)?;
    let mut turns = 0usize;
    let mut dim: Option<usize> = None;
    for source in &sources {
        let history = source.build_history(provider.as_ref())?;
        turns += history.turn_count();
        if dim.is_none() {
            dim = history.embeddings().dim();
        }
        save_cache(&history, &cache_path(cache_dir, &source.dialogue_id))?;
    }
    println!(
        "ingested {} dialogues, {} turns, dim {}",
        sources.len(),
        turns,
        dim.unwrap_or(0)
    );
    Ok(())
}

pub struct PruneSettings {
    pub dialogues: PathBuf,
    pub cache: Option<PathBuf>,
    pub embedder: String,
    pub config: PruneConfig,
    pub format: OutputFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Text,
    Json,
}

pub fn cmd_prune(dialogue_id: &str, query: &str, s: &PruneSettings) -> Result<()> {
    let sources = load_dialogues(&s.dialogues)?;
    let source = sources
        .iter()
        .find(|d| d.dialogue_id == dialogue_id)
        .ok_or_else(|| DycpError::Dataset(format!("unknown dialogue {dialogue_id:?}")))?;
    let provider = parse_embedder_spec(&s.embedder)?;
    let history = build_history(source, provider.as_ref(), s.cache.as_deref())?;
    let selection = dycp_core::prune(&history.view(), query, provider.as_ref(), &s.config)?;
    let response = PruneResponse::from(&selection);
    match s.format {
        OutputFormat::Json => {
            let text = serde_json::to_string_pretty(&response)
                .map_err(|e| DycpError::Validation(format!("serializing selection: {e}")))?;
            println!("{text}");
        }
        OutputFormat::Text => {
            let spans: Vec<String> =
                response.spans.iter().map(|s| format!("({},{})", s.start, s.end)).collect();
            let turns: Vec<String> = response.turns.iter().map(usize::to_string).collect();
            println!("spans: {}", spans.join(","));
            println!("turns: {}", turns.join(","));
            println!("rs: {}", response.rs);
            println!("tps: {:.2}", response.tps);
            println!("tokens_full: {}", response.tokens_full);
            println!("tokens_pruned: {}", response.tokens_pruned);
            println!();
            println!("{}", response.context);
        }
    }
    Ok(())
}

pub struct RunSettings {
    pub dialogues: PathBuf,
    pub embedder: String,
    pub comparison: ComparisonConfig,
    pub out: PathBuf,
}

fn write_reports(records: &[RunRecord], ks: &[usize], out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    for record in records {
        let name = format!("results-{}.json", record.method.replace(':', "-"));
        write_results_json(record, &out.join(name))?;
    }
    write_cases_csv(records, ks, &out.join("cases.csv"))?;
    let table = render_summary_table(records);
    std::fs::write(out.join("summary.txt"), &table)?;
    print!("{table}");
    println!("reports written to {}", out.display());
    Ok(())
}

pub fn cmd_evaluate(method: MethodChoice, s: &RunSettings) -> Result<()> {
    let sources = load_dialogues(&s.dialogues)?;
    let provider = parse_embedder_spec(&s.embedder)?;
    let records = run_comparison(&sources, &[method], provider.as_ref(), &s.comparison)?;
    write_reports(&records, &s.comparison.ks, &s.out)
}

pub fn cmd_compare(methods: &[MethodChoice], s: &RunSettings) -> Result<()> {
    let sources = load_dialogues(&s.dialogues)?;
    let provider = parse_embedder_spec(&s.embedder)?;
    let records = run_comparison(&sources, methods, provider.as_ref(), &s.comparison)?;
    write_reports(&records, &s.comparison.ks, &s.out)
}

pub fn cmd_ablate(bottoms: &[usize], s: &RunSettings) -> Result<()> {
    let sources = load_dialogues(&s.dialogues)?;
    let provider = parse_embedder_spec(&s.embedder)?;
    let records = run_ablation(&sources, provider.as_ref(), &s.comparison, bottoms)?;
    write_reports(&records, &s.comparison.ks, &s.out)
}

pub fn cmd_generate(out: &Path, config: &PlantedConfig) -> Result<()> {
    let dialogues = generate_planted_benchmark(config);
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    write_dialogues(&dialogues, out)?;
    let turns: usize = dialogues.iter().map(DialogueSource::turn_count).sum();
    let tests: usize = dialogues.iter().map(|d| d.tests.len()).sum();
    println!(
        "generated {} dialogues ({} turns, {} test cases) to {}",
        dialogues.len(),
        turns,
        tests,
        out.display()
    );
    Ok(())
}
