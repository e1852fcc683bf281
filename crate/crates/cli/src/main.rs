//! `gagnegen`: generate, label, curate and score teacher dialogue templates.
//!
//! Exit status is 0 on success, 1 on a domain error (reported on stderr as
//! `error: <code>: <detail>`) and 2 on a usage error.

mod commands;
mod config;
mod input;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gagne_core::ErrorCode;

#[derive(Debug, Parser)]
#[command(name = "gagnegen", version, about = "Teacher-dialogue generation, labelling, curation and evaluation")]
pub struct Cli {
    /// Config file (default: ./gagnegen.toml when present).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate pending dialogue templates and write them as corpus JSON Lines.
    Generate(GenerateArgs),
    /// Label utterances with an instructional event.
    Classify(ClassifyArgs),
    /// Cohen's kappa between two label files.
    Agreement(AgreementArgs),
    /// BLEU-4 and ROUGE-1/2/L of candidates against references.
    Eval(EvalArgs),
    /// Per-event and per-state counts of a corpus.
    Stats(StatsArgs),
    /// Stratified split of the accepted records.
    Split(SplitArgs),
    /// Instruction-tuning export of the accepted records.
    Export(ExportArgs),
    /// Run the review service.
    Serve(ServeArgs),
    /// Questionnaire ratings collected by the review service.
    #[command(subcommand)]
    Ratings(RatingsCommand),
    /// Check or render prompt templates.
    #[command(subcommand)]
    Prompt(PromptCommand),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProviderKind {
    Mock,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LabelMethodArg {
    Keyword,
    Llm,
}

#[derive(Debug, Args)]
struct ProviderArgs {
    /// `mock` answers offline and deterministically.
    #[arg(long, value_enum, default_value = "http")]
    provider: ProviderKind,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Concept to teach; repeat for several.
    #[arg(long = "concept", required = true)]
    concepts: Vec<String>,
    /// Target events (labels, names or ordinals); defaults to all nine.
    #[arg(long = "event", value_delimiter = ',')]
    events: Vec<String>,
    #[arg(long, default_value = "cot")]
    mode: String,
    /// Prompt template file; overrides --mode.
    #[arg(long, value_name = "FILE")]
    template: Option<PathBuf>,
    /// Curriculum requirement text passed to the [Standard] slot.
    #[arg(long)]
    standard: Option<String>,
    /// Accepted templates from this corpus serve as exemplars.
    #[arg(long, value_name = "CORPUS")]
    exemplars: Option<PathBuf>,
    /// Templates per (concept, event).
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Base seed; item i uses seed + i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    max_rounds: Option<u32>,
    /// Timestamp for created_at/updated_at (RFC 3339). The mock provider
    /// defaults to 2024-01-01T00:00:00Z so runs are reproducible.
    #[arg(long)]
    now: Option<String>,
    /// Also keep candidates that never passed the alignment check.
    #[arg(long)]
    keep_unaligned: bool,
    /// Output corpus file (default: stdout).
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[command(flatten)]
    provider: ProviderArgs,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    /// JSON Lines with `id` and `text` (corpus files work); an `event` field is treated as gold.
    #[arg(long, conflicts_with = "text", required_unless_present = "text")]
    input: Option<PathBuf>,
    /// Label a single utterance.
    #[arg(long)]
    text: Option<String>,
    #[arg(long, value_enum, default_value = "keyword")]
    method: LabelMethodArg,
    /// Write `{id, event, ...}` JSON Lines here.
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    format: OutputFormat,
    #[command(flatten)]
    provider: ProviderArgs,
}

#[derive(Debug, Args)]
struct AgreementArgs {
    /// Labels from rater A: JSON Lines with `id` and `event`, or one label per line.
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    format: OutputFormat,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// JSON Lines with `id` and `text`.
    #[arg(long)]
    candidates: PathBuf,
    /// JSON Lines with `id` and `text` or `texts`.
    #[arg(long)]
    references: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "bleu4,rouge1,rouge2,rougeL")]
    metrics: Vec<String>,
    #[arg(long, default_value = "add_one")]
    smoothing: String,
    /// Write the full JSON report here.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Score pairs on one thread.
    #[arg(long)]
    sequential: bool,
    #[arg(long, value_enum, default_value = "text")]
    format: OutputFormat,
}

#[derive(Debug, Args)]
struct StatsArgs {
    /// Corpus file (default: paths.corpus from the config).
    corpus: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    format: OutputFormat,
}

#[derive(Debug, Args)]
struct SplitArgs {
    corpus: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0.8,0.2")]
    ratios: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
    /// File stems for the pieces (default: train,test or train,validation,test).
    #[arg(long, value_delimiter = ',')]
    names: Vec<String>,
    #[arg(long, value_enum, default_value = "text")]
    format: OutputFormat,
}

#[derive(Debug, Args)]
struct ExportArgs {
    corpus: Option<PathBuf>,
    /// alpaca or sharegpt.
    #[arg(long, default_value = "alpaca")]
    format: String,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    corpus: Option<PathBuf>,
    #[arg(long)]
    bind: Option<std::net::SocketAddr>,
    /// Bearer token (also GAGNEGEN_TOKEN or service.token).
    #[arg(long)]
    token: Option<String>,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    max_rounds: Option<u32>,
    #[command(flatten)]
    provider: ProviderArgs,
}

#[derive(Debug, Subcommand)]
enum RatingsCommand {
    /// Write all ratings as CSV.
    Export {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Means, standard deviations and weighted kappa.
    Summary {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Restrict to these template ids (repeatable).
        #[arg(long = "template")]
        templates: Vec<String>,
        #[arg(long, value_enum, default_value = "text")]
        format: OutputFormat,
    },
}

#[derive(Debug, Subcommand)]
enum PromptCommand {
    /// Report unknown or missing slots.
    Validate {
        file: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: OutputFormat,
    },
    /// Print the rendered prompt.
    Render {
        #[arg(long)]
        concept: String,
        #[arg(long)]
        event: String,
        #[arg(long, default_value = "cot")]
        mode: String,
        #[arg(long, value_name = "FILE")]
        template: Option<PathBuf>,
        #[arg(long)]
        standard: Option<String>,
    },
}

/// A domain error: printed as `error: <code>: <detail>`, exit status 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: String,
    pub detail: String,
}

impl CliError {
    pub fn new(code: impl Into<String>, detail: impl Into<String>) -> Self {
        CliError { code: code.into(), detail: detail.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.detail)
    }
}

impl<E: ErrorCode + std::error::Error> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::new(e.code(), e.to_string())
    }
}

fn init_logging(verbose: u8, configured: Option<&str>) {
    let level = match verbose {
        0 => configured.and_then(|l| l.parse().ok()).unwrap_or(log::LevelFilter::Warn),
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let result = config::CliConfig::load(cli.config.as_deref()).and_then(|config| {
        init_logging(cli.verbose, config.logging.level.as_deref());
        commands::run(cli.command, &config)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
