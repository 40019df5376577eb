//! `vllens`: validate dumps, precompute caches and generate synthetic dumps.
//!
//! Exit codes: 0 success, 1 validation or computation failure, 2 I/O failure
//! or bad usage.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vllens_core::dump::ValidationReport;
use vllens_core::embedding::{cache_blob_path, cache_sidecar_path};
use vllens_core::synth::{synth, SynthSpec};
use vllens_core::validate_dump;
use vllens_server::{AppState, ServiceConfig};

#[derive(Debug, Parser)]
#[command(name = "vllens", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check every file of a dump and report all failures.
    Validate {
        dump: PathBuf,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Write head-summary and t-SNE caches.
    Precompute {
        dump: PathBuf,
        /// Comma-separated metric names [default: all registered].
        #[arg(long, value_delimiter = ',')]
        metrics: Option<Vec<String>>,
        /// Layers to embed: `a..b` (inclusive), `k`, or a comma list [default: all].
        #[arg(long)]
        layers: Option<String>,
        /// Cache directory [default: <dump>/cache].
        #[arg(long, env = "VLLENS_CACHE")]
        cache: Option<PathBuf>,
        #[arg(long, env = "VLLENS_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, env = "VLLENS_STOPWORDS")]
        stopwords: Option<PathBuf>,
        /// Recompute t-SNE layers even when a matching cache exists.
        #[arg(long)]
        force: bool,
        /// Print a JSON summary of written files.
        #[arg(long)]
        json: bool,
    },
    /// Generate a synthetic dump from a JSON spec.
    Synth { spec: PathBuf, out_dir: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Validate { dump, json } => validate(&dump, json),
        Command::Precompute {
            dump,
            metrics,
            layers,
            cache,
            seed,
            stopwords,
            force,
            json,
        } => {
            let config = ServiceConfig {
                cache_dir: cache,
                tsne_seed: seed,
                stopword_file: stopwords,
                ..ServiceConfig::new(dump)
            };
            precompute(&config, metrics, layers.as_deref(), force, json)
        }
        Command::Synth { spec, out_dir } => run_synth(&spec, &out_dir),
    };
    ExitCode::from(code)
}

fn print_report(report: &ValidationReport) {
    for f in &report.manifest_failures {
        println!("manifest: FAIL {}: {}", f.check.as_str(), f.message);
    }
    for e in &report.examples {
        if e.passed {
            println!("{}: ok", e.example_id);
        }
        for f in &e.failures {
            println!("{}: FAIL {}: {}", e.example_id, f.check.as_str(), f.message);
        }
    }
    println!(
        "{} examples, {} failing entries",
        report.examples.len(),
        report.failure_count()
    );
}

fn validate(dump: &Path, json: bool) -> u8 {
    match validate_dump(dump) {
        Ok(report) => {
            if json {
                println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            } else {
                print_report(&report);
            }
            if report.is_ok() {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

/// Parses `a..b` (inclusive), `a..=b`, a single index, or a comma list.
fn parse_layers(raw: &str) -> Result<Vec<usize>, String> {
    let num = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| format!("bad layer {s:?} in {raw:?}"))
    };
    if let Some((a, b)) = raw.split_once("..") {
        let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
        if a > b {
            return Err(format!("empty layer range {raw:?}"));
        }
        return Ok((a..=b).collect());
    }
    let set: BTreeSet<usize> = raw.split(',').map(num).collect::<Result<_, _>>()?;
    Ok(set.into_iter().collect())
}

fn precompute(
    config: &ServiceConfig,
    metrics: Option<Vec<String>>,
    layers: Option<&str>,
    force: bool,
    json: bool,
) -> u8 {
    let fail = |msg: String| {
        eprintln!("error: {msg}");
        1
    };
    let state = match AppState::open(config) {
        Ok(s) => s,
        Err(e) => return fail(e.to_string()),
    };
    let n_layers = state.corpus().manifest().n_layers;
    let layers = match layers.map(parse_layers).transpose() {
        Ok(l) => l.unwrap_or_else(|| (0..=n_layers).collect()),
        Err(e) => return fail(e),
    };
    let metrics = metrics.unwrap_or_else(|| state.registry().names());

    let mut written = Vec::new();
    let ids = state.corpus().manifest().example_ids.clone();
    for metric in &metrics {
        for id in &ids {
            match state.refresh_summary(id, metric, &BTreeSet::new()) {
                Ok(path) => written.push(path),
                Err(e) => return fail(format!("{id}/{metric}: {}", e.message)),
            }
        }
    }
    let cache = state.cache_dir().to_path_buf();
    for &layer in &layers {
        if force {
            for path in [
                cache_blob_path(&cache, layer, config.tsne_seed),
                cache_sidecar_path(&cache, layer, config.tsne_seed),
            ] {
                if let Err(e) = std::fs::remove_file(&path) {
                    if e.kind() != std::io::ErrorKind::NotFound {
                        return fail(format!("cannot remove {}: {e}", path.display()));
                    }
                }
            }
        }
        if let Err(e) = state.embeddings_body(layer) {
            return fail(format!("layer {layer}: {}", e.message));
        }
        written.push(cache_blob_path(&cache, layer, config.tsne_seed));
        written.push(cache_sidecar_path(&cache, layer, config.tsne_seed));
    }

    if json {
        let report = serde_json::json!({
            "cache_dir": cache,
            "summaries": metrics.len() * ids.len(),
            "layers": layers,
            "files": written,
        });
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        println!(
            "wrote {} summaries and {} t-SNE layers to {}",
            metrics.len() * ids.len(),
            layers.len(),
            cache.display()
        );
    }
    0
}

fn run_synth(spec_path: &Path, out_dir: &Path) -> u8 {
    let spec: SynthSpec = match std::fs::read(spec_path) {
        Ok(bytes) => match serde_json::from_slice(&bytes) {
            Ok(spec) => spec,
            Err(e) => {
                eprintln!("error: invalid synth spec {}: {e}", spec_path.display());
                return 1;
            }
        },
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", spec_path.display());
            return 2;
        }
    };
    match synth(&spec, out_dir) {
        Ok(m) => {
            println!("wrote {} examples to {}", m.example_ids.len(), out_dir.display());
            0
        }
        Err(e @ vllens_core::SynthError::Spec(_)) => {
            eprintln!("error: {e}");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
