//! `dycp`: dialogue context pruning from the command line, plus the
//! sidecar HTTP service (`dycp serve`).
//!
//! Exit codes: 0 success, 1 usage error, 2 data/validation error,
//! 3 embedding-provider error.

mod ops;
mod service;
mod settings;

use std::path::PathBuf;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use dycp_core::eval::{load_dialogues, parse_method, ComparisonConfig, PlantedConfig};
use dycp_core::{parse_embedder_spec, DycpError, PruneConfig, Result};

use ops::{OutputFormat, PruneSettings, RunSettings};
use settings::{load_file_config, resolve, resolve_list, resolve_path, FileConfig};

const DEFAULT_EMBEDDER: &str = "test:256";

#[derive(Parser)]
#[command(name = "dycp", version, about = "Dialogue context pruning: score, select, assemble")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Embed every dialogue in a dataset and write per-dialogue embedding caches
    Ingest {
        /// JSONL dialogue dataset
        #[arg(long)]
        dialogues: Option<PathBuf>,
        /// Embedding provider: "test:256" or an http(s) endpoint URL
        #[arg(long)]
        embedder: Option<String>,
        /// Directory to write cache files into
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Prune one dialogue's history against a query
    Prune {
        dialogue_id: String,
        query: String,
        /// JSONL dialogue dataset
        #[arg(long)]
        dialogues: Option<PathBuf>,
        /// Directory with embedding caches from `ingest` (skips re-embedding)
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long)]
        embedder: Option<String>,
        /// Gain shift subtracted from z-scores
        #[arg(long)]
        tau: Option<f64>,
        /// Minimum span gain required to keep extracting
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long, value_enum)]
        format: Option<OutputFormat>,
    },
    /// Evaluate one selection method over a dataset and write reports
    Evaluate {
        #[arg(long)]
        dialogues: Option<PathBuf>,
        #[arg(long)]
        embedder: Option<String>,
        /// One of: dycp, full, none, topk:auto, or topk:N for a fixed N
        #[arg(long)]
        method: Option<String>,
        /// Metric cutoffs, comma-separated (default 1,3,5)
        #[arg(long)]
        ks: Option<String>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        theta: Option<f64>,
        /// Report directory (default runs/)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Measure per-case latency (reports stop being byte-reproducible)
        #[arg(long)]
        timing: bool,
    },
    /// Compare methods side by side (--method takes a comma-separated list)
    Compare {
        #[arg(long)]
        dialogues: Option<PathBuf>,
        #[arg(long)]
        embedder: Option<String>,
        /// Comma-separated methods (default dycp,topk:auto,full,none)
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        ks: Option<String>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        timing: bool,
    },
    /// Sweep bottom-m span ablation depths against the unablated selection
    Ablate {
        #[arg(long)]
        dialogues: Option<PathBuf>,
        #[arg(long)]
        embedder: Option<String>,
        /// Comma-separated ablation depths (default 1,2,3)
        #[arg(long)]
        bottom: Option<String>,
        #[arg(long)]
        ks: Option<String>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        timing: bool,
    },
    /// Serve the sidecar HTTP API (per-turn ingest + prune)
    Serve {
        /// Port to bind on 127.0.0.1 (0 picks a free port)
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        embedder: Option<String>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        theta: Option<f64>,
        /// Dataset to preload into memory at startup
        #[arg(long)]
        dialogues: Option<PathBuf>,
        /// Cache directory: used for preloading and snapshotted on shutdown
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Generate the synthetic planted-segment benchmark as JSONL
    Generate {
        /// Output file path
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Number of dialogues
        #[arg(long)]
        count: Option<usize>,
        /// Turns per dialogue
        #[arg(long)]
        turns: Option<usize>,
    },
}

fn require_path(path: Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    path.ok_or_else(|| {
        DycpError::Validation(format!("{flag} is required (flag, DYCP_* env, or config file)"))
    })
}

fn resolve_format(flag: Option<OutputFormat>, file: &FileConfig) -> Result<OutputFormat> {
    if let Some(f) = flag {
        return Ok(f);
    }
    let parse = |raw: &str| match raw {
        "text" => Ok(OutputFormat::Text),
        "json" => Ok(OutputFormat::Json),
        other => Err(DycpError::Validation(format!("bad format {other:?} (text|json)"))),
    };
    if let Ok(raw) = std::env::var("DYCP_FORMAT") {
        return parse(&raw);
    }
    match &file.format {
        Some(raw) => parse(raw),
        None => Ok(OutputFormat::Text),
    }
}

fn prune_config(
    tau: Option<f64>,
    theta: Option<f64>,
    file: &FileConfig,
) -> Result<PruneConfig> {
    let defaults = PruneConfig::default();
    Ok(PruneConfig {
        tau: resolve(tau, "DYCP_TAU", file.tau, defaults.tau)?,
        theta: resolve(theta, "DYCP_THETA", file.theta, defaults.theta)?,
        ..defaults
    })
}

#[allow(clippy::too_many_arguments)]
fn run_settings(
    dialogues: Option<PathBuf>,
    embedder: Option<String>,
    ks: Option<String>,
    tau: Option<f64>,
    theta: Option<f64>,
    out: Option<PathBuf>,
    timing: bool,
    file: &FileConfig,
) -> Result<RunSettings> {
    Ok(RunSettings {
        dialogues: require_path(
            resolve_path(dialogues, "DYCP_DIALOGUES", file.dialogues.as_ref()),
            "--dialogues",
        )?,
        embedder: resolve(embedder, "DYCP_EMBEDDER", file.embedder.clone(), DEFAULT_EMBEDDER.into())?,
        comparison: ComparisonConfig {
            prune: prune_config(tau, theta, file)?,
            ks: resolve_list(ks.as_deref(), "DYCP_KS", file.ks.as_ref(), &[1, 3, 5])?,
            collect_timing: timing,
        },
        out: resolve_path(out, "DYCP_OUT", file.out.as_ref())
            .unwrap_or_else(|| PathBuf::from("runs")),
    })
}

fn run(cli: Cli) -> Result<()> {
    let file = load_file_config()?;
    match cli.command {
        Command::Ingest { dialogues, embedder, cache } => {
            let dialogues = require_path(
                resolve_path(dialogues, "DYCP_DIALOGUES", file.dialogues.as_ref()),
                "--dialogues",
            )?;
            let embedder =
                resolve(embedder, "DYCP_EMBEDDER", file.embedder.clone(), DEFAULT_EMBEDDER.into())?;
            let cache = require_path(
                resolve_path(cache, "DYCP_CACHE", file.cache.as_ref()),
                "--cache",
            )?;
            ops::cmd_ingest(&dialogues, &embedder, &cache)
        }
        Command::Prune { dialogue_id, query, dialogues, cache, embedder, tau, theta, format } => {
            let s = PruneSettings {
                dialogues: require_path(
                    resolve_path(dialogues, "DYCP_DIALOGUES", file.dialogues.as_ref()),
                    "--dialogues",
                )?,
                cache: resolve_path(cache, "DYCP_CACHE", file.cache.as_ref()),
                embedder: resolve(
                    embedder,
                    "DYCP_EMBEDDER",
                    file.embedder.clone(),
                    DEFAULT_EMBEDDER.into(),
                )?,
                config: prune_config(tau, theta, &file)?,
                format: resolve_format(format, &file)?,
            };
            ops::cmd_prune(&dialogue_id, &query, &s)
        }
        Command::Evaluate { dialogues, embedder, method, ks, tau, theta, out, timing } => {
            let method_raw =
                resolve(method, "DYCP_METHOD", file.method.clone(), "dycp".to_string())?;
            let method = parse_method(&method_raw)?;
            let s = run_settings(dialogues, embedder, ks, tau, theta, out, timing, &file)?;
            ops::cmd_evaluate(method, &s)
        }
        Command::Compare { dialogues, embedder, method, ks, tau, theta, out, timing } => {
            let raw = resolve(
                method,
                "DYCP_METHOD",
                file.method.clone(),
                "dycp,topk:auto,full,none".to_string(),
            )?;
            let methods = raw
                .split(',')
                .map(|m| parse_method(m.trim()))
                .collect::<Result<Vec<_>>>()?;
            let s = run_settings(dialogues, embedder, ks, tau, theta, out, timing, &file)?;
            ops::cmd_compare(&methods, &s)
        }
        Command::Ablate { dialogues, embedder, bottom, ks, tau, theta, out, timing } => {
            let bottoms =
                resolve_list(bottom.as_deref(), "DYCP_BOTTOM", file.bottom.as_ref(), &[1, 2, 3])?;
            let s = run_settings(dialogues, embedder, ks, tau, theta, out, timing, &file)?;
            ops::cmd_ablate(&bottoms, &s)
        }
        Command::Serve { port, embedder, tau, theta, dialogues, cache } => {
            let port = resolve(port, "DYCP_PORT", file.port, 8080)?;
            let spec =
                resolve(embedder, "DYCP_EMBEDDER", file.embedder.clone(), DEFAULT_EMBEDDER.into())?;
            let config = prune_config(tau, theta, &file)?;
            let cache_dir = resolve_path(cache, "DYCP_CACHE", file.cache.as_ref());
            let provider = parse_embedder_spec(&spec)?;
            let preloaded = match resolve_path(dialogues, "DYCP_DIALOGUES", file.dialogues.as_ref())
            {
                Some(path) => {
                    let sources = load_dialogues(&path)?;
                    let histories = sources
                        .iter()
                        .map(|src| ops::build_history(src, provider.as_ref(), cache_dir.as_deref()))
                        .collect::<Result<Vec<_>>>()?;
                    println!("preloaded {} dialogues from {}", histories.len(), path.display());
                    histories
                }
                None => Vec::new(),
            };
            let state = Arc::new(service::ServiceState::new(provider, config));
            state.preload(preloaded);
            service::serve_blocking(state, port, cache_dir)
        }
        Command::Generate { out, seed, count, turns } => {
            let out = require_path(resolve_path(out, "DYCP_OUT", file.out.as_ref()), "--out")?;
            let mut config = PlantedConfig {
                seed: resolve(seed, "DYCP_SEED", file.seed, PlantedConfig::default().seed)?,
                ..PlantedConfig::default()
            };
            if let Some(count) = count {
                config.dialogues = count;
            }
            if let Some(turns) = turns {
                config.turns_per_dialogue = turns;
            }
            ops::cmd_generate(&out, &config)
        }
    }
}

fn main() {
    // Rust ignores SIGPIPE, which turns `dycp … | head` into a
    // broken-pipe panic mid-print. Restore the conventional behavior:
    // die quietly when the reader goes away.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Usage problems exit 1; --help/--version are successes.
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        let code = match err {
            DycpError::ProviderTransport(_) | DycpError::ProviderContract(_) => 3,
            _ => 2,
        };
        std::process::exit(code);
    }
}
