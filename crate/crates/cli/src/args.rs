use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "mpcn", version, about = "Review-based rating prediction with multi-pointer co-attention")]
pub struct Cli {
    /// Seed for data preparation, initialisation, batching and sampling.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Directory that relative paths are resolved against.
    #[arg(long, global = true, env = "MPCN_DATA_DIR")]
    pub data_dir: Option<PathBuf>,

    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Filter, split and encode a JSON-lines review corpus into a snapshot.
    Prepare(PrepareArgs),
    /// Train a model on a snapshot and write the best checkpoint.
    Train(TrainArgs),
    /// Report dev and test MSE of a checkpoint.
    Eval(EvalArgs),
    /// Classify how the pointers of a trained model spread over reviews.
    AnalyzePointers(AnalyzeArgs),
    /// Write each head's review-level affinity matrix for one pair as CSV.
    ExportAffinity(ExportArgs),
    /// Write a generated review corpus with a planted preference signal.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub k_core: usize,
    #[arg(long, default_value_t = 10)]
    pub min_count: usize,
    #[arg(long, default_value_t = 20)]
    pub max_reviews: usize,
    #[arg(long, default_value_t = 30)]
    pub max_words: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub snapshot: PathBuf,
    /// mpcn, mf, fm or mlp.
    #[arg(long)]
    pub model: Option<String>,
    /// Checkpoint path; the history goes next to it unless --history is set.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// `key = value` experiment file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub precision: Option<String>,
    #[arg(long)]
    pub pointers: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub ffn_layers: Option<usize>,
    #[arg(long)]
    pub aggregation: Option<String>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub soft_pointers: bool,
    #[arg(long)]
    pub no_gates: bool,
    #[arg(long)]
    pub no_fm: bool,
    #[arg(long)]
    pub no_word_coattention: bool,
    #[arg(long)]
    pub no_review_coattention: bool,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Suppress per-epoch progress lines.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub snapshot: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub snapshot: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = mpcn::analysis::DEFAULT_SAMPLE_SIZE)]
    pub sample_size: usize,
    /// Also write one JSON line per sampled pair with its pointers.
    #[arg(long)]
    pub traces: Option<PathBuf>,
    /// Include the review-level affinity matrices in the traces.
    #[arg(long, requires = "traces")]
    pub matrices: bool,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub snapshot: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub user: String,
    #[arg(long)]
    pub item: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 450)]
    pub users: usize,
    #[arg(long, default_value_t = 260)]
    pub items: usize,
    #[arg(long, default_value_t = 12)]
    pub per_user: usize,
    /// Standard deviation of the rating noise the text cannot explain.
    #[arg(long, default_value_t = 0.3)]
    pub rating_noise: f64,
}
