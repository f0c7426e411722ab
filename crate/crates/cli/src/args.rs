use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "panza", version, about = "Personal email-style pipeline")]
pub struct Cli {
    /// Config file; defaults to ./panza.toml when present.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Print a machine-readable summary on stdout.
    #[arg(long, global = true)]
    pub json: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse an mbox or CSV archive into a cleaned corpus.
    Ingest(IngestArgs),
    /// Assign train/test splits.
    Split(SplitArgs),
    /// Generate reverse instructions for one split of the corpus.
    Summarize(SummarizeArgs),
    /// Embed train emails into a vector store.
    Index(IndexArgs),
    /// Emit the retrieval-augmented training set and trainer config.
    EmitTrain(EmitTrainArgs),
    /// Run the HTTP generation gateway.
    Serve(ServeArgs),
    /// Score generated emails or generated instructions.
    Eval(EvalArgs),
    /// Cross-user MAUVE matrix.
    StyleMatrix(StyleMatrixArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct BackendArgs {
    #[arg(long, env = "PANZA_BACKEND_URL")]
    pub backend_url: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub embedding_model: Option<String>,
    #[arg(long)]
    pub max_parallel: Option<usize>,
    #[arg(long)]
    pub timeout_ms: Option<u64>,
    #[arg(long)]
    pub retry_limit: Option<u32>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GenerationArgs {
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub top_p: Option<f64>,
    #[arg(long)]
    pub top_k: Option<u32>,
    #[arg(long)]
    pub max_tokens: Option<u32>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct MauveArgs {
    /// Seed for k-means initialisation.
    #[arg(long)]
    pub seed: u64,
    /// Cluster count; default scales with sample count.
    #[arg(long)]
    pub mauve_k: Option<usize>,
    #[arg(long)]
    pub mauve_scale: Option<f64>,
    #[arg(long)]
    pub mauve_grid: Option<usize>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Cleaning rules, JSON or TOML (by extension).
    #[arg(long)]
    pub rules: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitChoice {
    Train,
    Test,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitChoice::Train)]
    pub split: SplitChoice,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[command(flatten)]
    pub generation: GenerationArgs,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodChoice {
    Fft,
    Rosa,
    Lora,
}

#[derive(Debug, Args)]
pub struct EmitTrainArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long, default_value_t = 0.55)]
    pub p_rag: f64,
    #[arg(long, default_value_t = 2)]
    pub n_rag: usize,
    #[arg(long, default_value_t = 0.2, allow_hyphen_values = true)]
    pub t_rag: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Replaces the built-in system preamble.
    #[arg(long)]
    pub system_preamble: Option<PathBuf>,
    #[arg(long)]
    pub user_preamble: Option<PathBuf>,
    /// Trainer config path; defaults to `<out>.trainer.toml`.
    #[arg(long)]
    pub trainer_config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MethodChoice::Rosa)]
    pub method: MethodChoice,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub epochs: Option<i64>,
    #[arg(long, allow_hyphen_values = true)]
    pub batch_size: Option<i64>,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "PANZA_LISTEN_ADDR")]
    pub listen: Option<SocketAddr>,
    #[arg(long)]
    pub store: Option<PathBuf>,
    #[arg(long)]
    pub user_preamble: Option<PathBuf>,
    #[arg(long)]
    pub system_preamble: Option<PathBuf>,
    #[arg(long)]
    pub n_rag: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub t_rag: Option<f64>,
    #[arg(long)]
    pub cors_origin: Option<String>,
    /// Where to write the run manifest when the server stops.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[command(flatten)]
    pub generation: GenerationArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Generated emails, JSONL of {email_id, text}.
    #[arg(long, requires = "corpus", conflicts_with_all = ["golden", "pairs"])]
    pub candidates: Option<PathBuf>,
    /// Corpus whose test split holds the reference emails.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Golden instructions, JSONL of {email_id, instruction}.
    #[arg(long, requires = "pairs")]
    pub golden: Option<PathBuf>,
    /// Generated instruction pairs to score against `--golden`.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// k-means seed; required when scoring emails.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub mauve_k: Option<usize>,
    #[arg(long)]
    pub mauve_scale: Option<f64>,
    #[arg(long)]
    pub mauve_grid: Option<usize>,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Args)]
pub struct StyleMatrixArgs {
    /// JSON object: model -> user -> list of generated texts.
    #[arg(long)]
    pub generations: PathBuf,
    /// JSON object: user -> list of reference emails.
    #[arg(long)]
    pub references: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the matrix as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub mauve: MauveArgs,
    #[command(flatten)]
    pub backend: BackendArgs,
}
