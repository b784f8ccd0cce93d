//! `toolforge`: batch driver for the tool-use data pipeline. Subcommands
//! cover dataset validation, four-aspect evaluation, tool indexing and
//! retrieval, curriculum assembly, and the iterative dataset-update
//! step, plus stub endpoints for offline runs.
//!
//! Exit codes: 0 success, 1 validation failure, 2 I/O or configuration
//! error, 3 endpoint failure.

mod commands;
mod config;
mod stubs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{require_path, PipelineConfig, DEFAULT_SEED};
use toolforge_core::{Error, Result};

#[derive(Parser)]
#[command(name = "toolforge", version, about = "Tool-use data pipeline driver")]
struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct IoArgs {
    /// Tool store JSONL.
    #[arg(long)]
    store: Option<PathBuf>,
    /// Instance dataset JSONL.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Output file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Default)]
struct EndpointArgs {
    /// Scorer child-process command line.
    #[arg(long)]
    scorer_cmd: Option<String>,
    /// Scorer HTTP endpoint URL.
    #[arg(long)]
    scorer_url: Option<String>,
    /// Generator child-process command line.
    #[arg(long)]
    generator_cmd: Option<String>,
    /// Generator HTTP endpoint URL.
    #[arg(long)]
    generator_url: Option<String>,
}

#[derive(Args, Default)]
struct EmbedderArgs {
    /// Embedder child-process command line (default: built-in hashing).
    #[arg(long)]
    embedder_cmd: Option<String>,
    /// Embedder HTTP endpoint URL.
    #[arg(long)]
    embedder_url: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Check every instance response: parse, schema, and tool-count gates.
    Validate {
        #[command(flatten)]
        io: IoArgs,
        /// Minimum distinct tools per response.
        #[arg(long, default_value_t = 4)]
        min_tools: usize,
    },
    /// Score predictions against gold responses on the four aspects.
    Evaluate {
        #[command(flatten)]
        io: IoArgs,
        /// Predictions JSONL ({"id", "response"}).
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Embed all tool demonstrations and save the index.
    Index {
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        embedder: EmbedderArgs,
    },
    /// Top-k tools per dataset query, plus recall@k.
    Retrieve {
        #[command(flatten)]
        io: IoArgs,
        /// Saved index file (otherwise built from --store).
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[command(flatten)]
        embedder: EmbedderArgs,
    },
    /// Write the three-stage epoch plan (and optionally the examples).
    Assemble {
        #[command(flatten)]
        io: IoArgs,
        /// Epoch counts as "warm,in,cross", e.g. "1,1,2".
        #[arg(long)]
        epochs: Option<String>,
        #[arg(long)]
        k: Option<usize>,
        /// In-category distractor count.
        #[arg(long)]
        distractors: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write assembled examples (candidates + prompts) here.
        #[arg(long)]
        examples_out: Option<PathBuf>,
    },
    /// One perplexity-guided dataset-update step.
    IsifStep {
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        endpoints: EndpointArgs,
        /// Update percentage σ.
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Step report path (default: <out>.report.json).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Stub scorer endpoint on stdin/stdout (line JSON).
    StubScorer {
        /// Per-token log-probability.
        #[arg(long, default_value_t = -0.5, allow_hyphen_values = true)]
        logprob: f64,
        /// Responses containing this substring score `--hot` instead.
        #[arg(long)]
        keyword: Option<String>,
        #[arg(long, default_value_t = -3.0, allow_hyphen_values = true)]
        hot: f64,
    },
    /// Stub generator endpoint replaying a script file.
    StubGenerator {
        /// JSONL script: line k is the completions array for request k.
        #[arg(long)]
        script: PathBuf,
    },
    /// The built-in hashing embedder as a stub endpoint.
    StubEmbedder {
        #[arg(long, default_value_t = 256)]
        dim: usize,
    },
}

fn parse_epochs(text: &str) -> Result<(usize, usize, usize)> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(Error::config(format!(
            "--epochs expects three comma-separated counts, got {text:?}"
        )));
    }
    let mut counts = [0usize; 3];
    for (slot, part) in counts.iter_mut().zip(&parts) {
        *slot = part
            .parse()
            .map_err(|_| Error::config(format!("invalid epoch count {part:?}")))?;
    }
    Ok((counts[0], counts[1], counts[2]))
}

fn run(cli: Cli) -> Result<i32> {
    let file = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    match cli.command {
        Command::Validate { io, min_tools } => {
            let store = require_path("store", &io.store, &file.store)?;
            let dataset = require_path("dataset", &io.dataset, &file.dataset)?;
            commands::cmd_validate(&store, &dataset, min_tools)
        }
        Command::Evaluate { io, predictions } => {
            let store = require_path("store", &io.store, &file.store)?;
            let dataset = require_path("dataset", &io.dataset, &file.dataset)?;
            let predictions = require_path("predictions", &predictions, &file.predictions)?;
            let out = PipelineConfig::pick(&io.out, &file.out);
            commands::cmd_evaluate(&store, &dataset, &predictions, out.as_deref())
        }
        Command::Index { io, embedder } => {
            let store = require_path("store", &io.store, &file.store)?;
            let out = require_path("out", &io.out, &file.out)?;
            let embedder = commands::resolve_embedder(
                PipelineConfig::pick(&embedder.embedder_cmd, &file.embedder_cmd).as_deref(),
                PipelineConfig::pick(&embedder.embedder_url, &file.embedder_url).as_deref(),
            )?;
            commands::cmd_index(&store, &out, embedder.as_ref())
        }
        Command::Retrieve { io, index, k, embedder } => {
            let store = PipelineConfig::pick(&io.store, &file.store);
            let index = PipelineConfig::pick(&index, &file.index);
            let dataset = require_path("dataset", &io.dataset, &file.dataset)?;
            let out = require_path("out", &io.out, &file.out)?;
            let k = PipelineConfig::pick(&k, &file.k).unwrap_or(10);
            let embedder = commands::resolve_embedder(
                PipelineConfig::pick(&embedder.embedder_cmd, &file.embedder_cmd).as_deref(),
                PipelineConfig::pick(&embedder.embedder_url, &file.embedder_url).as_deref(),
            )?;
            commands::cmd_retrieve(
                store.as_deref(),
                index.as_deref(),
                &dataset,
                k,
                &out,
                embedder.as_ref(),
            )
        }
        Command::Assemble {
            io,
            epochs,
            k,
            distractors,
            seed,
            examples_out,
        } => {
            let store = require_path("store", &io.store, &file.store)?;
            let dataset = require_path("dataset", &io.dataset, &file.dataset)?;
            let out = require_path("out", &io.out, &file.out)?;
            let epochs = match (epochs, file.epochs) {
                (Some(text), _) => parse_epochs(&text)?,
                (None, Some(triple)) => triple,
                (None, None) => (1, 1, 1),
            };
            let k = PipelineConfig::pick(&k, &file.k).unwrap_or(10);
            let distractors = PipelineConfig::pick(&distractors, &file.distractors).unwrap_or(5);
            let seed = PipelineConfig::pick(&seed, &file.seed).unwrap_or(DEFAULT_SEED);
            commands::cmd_assemble(
                &store,
                &dataset,
                epochs,
                k,
                distractors,
                seed,
                &out,
                examples_out.as_deref(),
            )
        }
        Command::IsifStep {
            io,
            endpoints,
            sigma,
            seed,
            report,
        } => {
            let store = require_path("store", &io.store, &file.store)?;
            let dataset = require_path("dataset", &io.dataset, &file.dataset)?;
            let out = require_path("out", &io.out, &file.out)?;
            let report = report.unwrap_or_else(|| commands::default_report_path(&out));
            let mut isif = file.isif.clone().unwrap_or_default();
            if let Some(sigma) = PipelineConfig::pick(&sigma, &file.sigma) {
                isif.sigma_percent = sigma;
            }
            let seed = PipelineConfig::pick(&seed, &file.seed).unwrap_or(DEFAULT_SEED);
            let scorer = commands::resolve_scorer(
                PipelineConfig::pick(&endpoints.scorer_cmd, &file.scorer_cmd).as_deref(),
                PipelineConfig::pick(&endpoints.scorer_url, &file.scorer_url).as_deref(),
            )?;
            let generator = commands::resolve_generator(
                PipelineConfig::pick(&endpoints.generator_cmd, &file.generator_cmd).as_deref(),
                PipelineConfig::pick(&endpoints.generator_url, &file.generator_url).as_deref(),
            )?;
            commands::cmd_isif_step(
                &store,
                &dataset,
                isif,
                seed,
                scorer.as_ref(),
                generator.as_ref(),
                &out,
                &report,
            )
        }
        Command::StubScorer { logprob, keyword, hot } => {
            stubs::run_scorer(logprob, keyword.as_deref(), hot)?;
            Ok(0)
        }
        Command::StubGenerator { script } => {
            stubs::run_generator(&script)?;
            Ok(0)
        }
        Command::StubEmbedder { dim } => {
            stubs::run_embedder(dim)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err}");
            let code = match err {
                Error::Endpoint { .. } => 3,
                _ => 2,
            };
            ExitCode::from(code)
        }
    }
}
