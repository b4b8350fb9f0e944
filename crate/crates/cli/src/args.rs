use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "msynth", version, about = "Availability-conditioned multi-modal MR image synthesis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic multi-contrast phantom corpus.
    Phantom(PhantomArgs),
    /// Train a model on a corpus manifest.
    Train(TrainArgs),
    /// Synthesize the target modality from whichever inputs are available.
    Synth(SynthArgs),
    /// Score every input condition on a test manifest.
    Eval(EvalArgs),
    /// Plan, serve and summarize a blinded rating study.
    Study {
        #[command(subcommand)]
        command: StudyCommand,
    },
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    /// Output directory for slices and the train/test manifests.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON phantom config; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Image side length in pixels.
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub subjects: Option<usize>,
    /// Slices per subject.
    #[arg(long)]
    pub slices: Option<usize>,
    /// Fraction of subjects held out for testing.
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Standard deviation of additive Gaussian noise.
    #[arg(long)]
    pub noise: Option<f32>,
    /// Shift each modality independently by a few pixels.
    #[arg(long)]
    pub misalign: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON training config (unknown fields are rejected).
    #[arg(long)]
    pub config: PathBuf,
    /// Training manifest.
    #[arg(long)]
    pub data: PathBuf,
    /// Run directory: config echo, loss log, checkpoints.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Checkpoint weights or its JSON sidecar.
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Available inputs as `name=path` pairs, comma separated.
    #[arg(long)]
    pub inputs: String,
    /// Target modality; must match the checkpoint.
    #[arg(long)]
    pub target: String,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Real target slice; writes a difference heat map when given.
    #[arg(long)]
    pub diff: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Test manifest.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub target: String,
    /// Report file (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum StudyCommand {
    /// Draw randomized trial lists for every rater.
    Plan(PlanArgs),
    /// Run the rating HTTP service.
    Serve(ServeArgs),
    /// Aggregate collected ratings per condition.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// JSON image pools: `{"synthetic": {condition: [pair]}, "real": [pair]}`.
    #[arg(long)]
    pub pools: PathBuf,
    /// Rater ids, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub raters: Vec<String>,
    /// Output directory for plan.json.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = msynth_study::DEFAULT_PER_CONDITION)]
    pub per_condition: usize,
    #[arg(long, default_value_t = msynth_study::DEFAULT_REAL)]
    pub real: usize,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub plan: PathBuf,
    /// Root directory the plan's image paths are relative to.
    #[arg(long)]
    pub images: PathBuf,
    /// Directory for the ratings log.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: String,
    /// Bearer token for /api/export; export is disabled without it.
    #[arg(long)]
    pub admin_token: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub plan: PathBuf,
    /// Ratings log written by `study serve`.
    #[arg(long)]
    pub ratings: PathBuf,
    /// Output directory for report.json.
    #[arg(long)]
    pub out: PathBuf,
}
