mod commands;
mod config;
mod tables;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pdt_synth::datastore::{DatastoreError, Format};
use pdt_synth::scoring::ScoringError;
use pdt_synth::synth::SynthError;
use pdt_synth::{MethodKind, ProviderError, ScoringPrompt};
use serde_json::json;

use crate::config::{ConfigError, RunConfig};

/// Generate, score and audit synthetic product-desirability review datasets.
#[derive(Debug, Parser)]
#[command(name = "pdtsynth", version, propagate_version = true)]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a dataset with one prompting method.
    Generate(GenerateArgs),
    /// Score a generated dataset's word/review pairs.
    Score(ScoreArgs),
    /// Alignment, diversity, word-usage and cost reports for datasets.
    Assess(AssessArgs),
    /// Cost of a dataset and its projection to a larger row count.
    ProjectCost(ProjectCostArgs),
    /// Print the effective configuration as TOML.
    ShowConfig,
}

#[derive(Debug, Args, Default)]
pub struct ProviderArgs {
    /// Scripted provider (JSON lines) used instead of the live endpoint.
    #[arg(long, value_name = "SCRIPT")]
    pub mock: Option<PathBuf>,
    /// Chat-completions base URL.
    #[arg(long)]
    pub base_url: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long, value_name = "VAR")]
    pub api_key_env: Option<String>,
    /// Concurrent requests.
    #[arg(long)]
    pub parallelism: Option<usize>,
    /// Transport retries for rate limits, server errors and timeouts.
    #[arg(long)]
    pub max_retries: Option<u32>,
    /// Per-request timeout in seconds.
    #[arg(long, value_name = "SECONDS")]
    pub request_timeout: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// word-review (default), review-word or supply-word.
    #[arg(long)]
    pub method: Option<MethodKind>,
    /// Rows to generate.
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Product description placed in the prompts.
    #[arg(long)]
    pub product: Option<String>,
    /// Word list file (`word,polarity` lines).
    #[arg(long, value_name = "FILE")]
    pub word_list: Option<PathBuf>,
    /// Generation model.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Dataset path; the format follows the extension unless --format is given.
    #[arg(short, long, value_name = "FILE")]
    pub output: Option<PathBuf>,
    /// csv or jsonl.
    #[arg(long)]
    pub format: Option<Format>,
    #[command(flatten)]
    pub provider: ProviderArgs,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Generated dataset to score.
    #[arg(short, long, value_name = "FILE")]
    pub input: PathBuf,
    /// Scored dataset path (default: `<input>.scored.<ext>`).
    #[arg(short, long, value_name = "FILE")]
    pub output: Option<PathBuf>,
    /// Model used for scoring.
    #[arg(long)]
    pub scoring_model: Option<String>,
    /// complete or base-adjust.
    #[arg(long)]
    pub scoring_prompt: Option<ScoringPrompt>,
    /// Report Base+Adjust adjustments at or above this value.
    #[arg(long)]
    pub flag_threshold: Option<f64>,
    /// Method assumed for files without a method column.
    #[arg(long)]
    pub method: Option<MethodKind>,
    #[arg(long)]
    pub format: Option<Format>,
    #[command(flatten)]
    pub provider: ProviderArgs,
}

#[derive(Debug, Args)]
pub struct AssessArgs {
    /// Scored datasets; several produce side-by-side comparison tables.
    #[arg(required = true, value_name = "FILE")]
    pub inputs: Vec<PathBuf>,
    /// Report directory.
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Skip the pairwise homogenization score.
    #[arg(long)]
    pub skip_hs: bool,
    /// Most-used words to list.
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Leading tokens compared for opening redundancy.
    #[arg(long)]
    pub prefix_tokens: Option<usize>,
    /// Word list file used for coverage.
    #[arg(long, value_name = "FILE")]
    pub word_list: Option<PathBuf>,
    /// Method assumed for files without a method column.
    #[arg(long)]
    pub method: Option<MethodKind>,
    /// Worker threads for the diversity metrics.
    #[arg(long)]
    pub parallelism: Option<usize>,
    #[command(flatten)]
    pub prices: PriceArgs,
}

#[derive(Debug, Args, Default)]
pub struct PriceArgs {
    /// Named price sheet (gpt-4o-mini or gpt-4o).
    #[arg(long, value_name = "NAME")]
    pub price_preset: Option<String>,
    /// Dollars per million input tokens.
    #[arg(long, value_name = "DOLLARS")]
    pub input_price: Option<f64>,
    /// Dollars per million output tokens.
    #[arg(long, value_name = "DOLLARS")]
    pub output_price: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ProjectCostArgs {
    /// Dataset whose usage is tallied.
    #[arg(short, long, value_name = "FILE", conflicts_with_all = ["rows", "input_tokens", "output_tokens"])]
    pub input: Option<PathBuf>,
    /// Rows in a run given by counts instead of a dataset.
    #[arg(long, requires_all = ["input_tokens", "output_tokens"])]
    pub rows: Option<u64>,
    #[arg(long)]
    pub input_tokens: Option<u64>,
    #[arg(long)]
    pub output_tokens: Option<u64>,
    /// Wall time of the counted run in seconds.
    #[arg(long, value_name = "SECONDS")]
    pub wall_time: Option<f64>,
    /// Rows to project to.
    #[arg(long)]
    pub target_rows: Option<u64>,
    /// Re-price the projection under this preset as well.
    #[arg(long, value_name = "NAME")]
    pub alt_price_preset: Option<String>,
    /// Method assumed for files without a method column.
    #[arg(long)]
    pub method: Option<MethodKind>,
    /// Write the report as JSON here.
    #[arg(short, long, value_name = "FILE")]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub prices: PriceArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = RunConfig::load(cli.config.as_deref()).and_then(|cfg| match cli.command {
        Command::Generate(a) => commands::generate(cfg, a),
        Command::Score(a) => commands::score(cfg, a),
        Command::Assess(a) => commands::assess(cfg, a),
        Command::ProjectCost(a) => commands::project_cost(cfg, a),
        Command::ShowConfig => {
            print!("{}", cfg.to_toml());
            Ok(())
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (kind, code) = classify(&err);
            eprintln!("{}", json!({"error": kind, "message": format!("{err:#}")}));
            ExitCode::from(code)
        }
    }
}

/// Stable error kind and exit code for scripts.
fn classify(err: &anyhow::Error) -> (&'static str, u8) {
    for cause in err.chain() {
        let provider = cause
            .downcast_ref::<ProviderError>()
            .or_else(|| match cause.downcast_ref::<SynthError>() {
                Some(SynthError::Provider(p)) => Some(p),
                _ => None,
            })
            .or_else(|| match cause.downcast_ref::<ScoringError>() {
                Some(ScoringError::Provider(p)) => Some(p),
                _ => None,
            });
        match provider {
            Some(ProviderError::Auth(_)) => return ("AuthError", 3),
            Some(ProviderError::Config(_)) => return ("ConfigError", 2),
            Some(_) => return ("ProviderError", 5),
            None => {}
        }
        if let Some(DatastoreError::SchemaMismatch { .. }) = cause.downcast_ref::<DatastoreError>() {
            return ("SchemaMismatch", 4);
        }
        if let Some(DatastoreError::Io { .. }) = cause.downcast_ref::<DatastoreError>() {
            return ("IoError", 6);
        }
        if cause.is::<ConfigError>() || cause.is::<pdt_synth::costing::CostError>() {
            return ("ConfigError", 2);
        }
        if let Some(e) = cause.downcast_ref::<SynthError>() {
            return match e {
                SynthError::PipelineStalled { .. } => ("PipelineStalled", 7),
                _ => ("GenerationError", 1),
            };
        }
        if let Some(e) = cause.downcast_ref::<ScoringError>() {
            return match e {
                ScoringError::PipelineStalled { .. } => ("PipelineStalled", 7),
                _ => ("ScoringError", 1),
            };
        }
    }
    ("Error", 1)
}
