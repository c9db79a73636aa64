use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "prefbo", version, about = "Preference-gated Bayesian optimization of reaction yield")]
pub struct Cli {
    /// Worker threads for parallel trials (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic benchmark dataset.
    GenDataset(GenDatasetArgs),
    #[command(subcommand)]
    Survey(SurveyCommand),
    /// Grade answers against measured yields.
    Grade(GradeArgs),
    /// Fit a preference GP and write utilities for every candidate.
    FitUtility(FitUtilityArgs),
    #[command(subcommand)]
    Bo(BoCommand),
    /// Run many seeded campaigns and emit curves and summary metrics.
    Bench(BenchArgs),
    /// Random search over percentile schedules.
    TunePn(TunePnArgs),
    /// Correlation between utilities (or predictions) and measured yields.
    Report(ReportArgs),
    /// Ask an LLM endpoint for direct yield predictions.
    ZeroShot(ZeroShotArgs),
}

#[derive(Debug, Subcommand)]
pub enum SurveyCommand {
    /// Pairwise survey over a dataset.
    Gen(SurveyGenArgs),
    /// Answer a survey with an oracle backend.
    Answer(SurveyAnswerArgs),
}

#[derive(Debug, Subcommand)]
pub enum BoCommand {
    /// One optimization campaign.
    Run(BoRunArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DatasetArgs {
    /// Benchmark CSV with one column per parameter and a `yield` column.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Parameter space declaration; inferred from the CSV when omitted.
    #[arg(long)]
    pub space: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutArgs {
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// Master seed; a random one is drawn and recorded when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenDatasetArgs {
    /// Categorical parameters as `name=levels`, comma separated.
    #[arg(long, conflicts_with = "space")]
    pub levels: Option<String>,
    #[arg(long)]
    pub space: Option<PathBuf>,
    #[arg(long, default_value_t = 40.0)]
    pub base: f64,
    #[arg(long, default_value_t = 10.0)]
    pub main_sd: f64,
    #[arg(long, default_value_t = 4.0)]
    pub interaction: f64,
    #[arg(long, default_value_t = 2.0)]
    pub noise_sd: f64,
    #[arg(long, default_value = "synthetic")]
    pub name: String,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SurveyGenArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Appearances of each experiment.
    #[arg(long = "L", alias = "repeats", default_value_t = 10)]
    pub repeats: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleKind {
    Synthetic,
    Llm,
    Replay,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LlmArgs {
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 4)]
    pub max_in_flight: usize,
    /// Total attempts per request.
    #[arg(long, default_value_t = 6)]
    pub max_retries: usize,
    /// Environment variable holding the API key.
    #[arg(long, default_value = "PREFBO_LLM_API_KEY")]
    pub api_key_env: String,
    /// Prompt template id.
    #[arg(long)]
    pub template: Option<String>,
    /// Reaction description inserted into the prompt.
    #[arg(long, conflicts_with = "context_file")]
    pub context: Option<String>,
    #[arg(long)]
    pub context_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SurveyAnswerArgs {
    #[arg(long)]
    pub survey: PathBuf,
    /// Needed for the synthetic oracle and to read the survey's parameter space.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub space: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub oracle: OracleKind,
    /// Synthetic oracle temperature; 0 answers perfectly.
    #[arg(long, conflicts_with = "target_accuracy")]
    pub tau: Option<f64>,
    /// Calibrate tau so the synthetic oracle reaches this accuracy.
    #[arg(long)]
    pub target_accuracy: Option<f64>,
    /// Stored answers for the replay oracle.
    #[arg(long)]
    pub answers: Option<PathBuf>,
    /// Continue from the checkpoint in the output directory.
    #[arg(long)]
    pub resume: bool,
    #[command(flatten)]
    pub llm: LlmArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GradeArgs {
    #[arg(long)]
    pub survey: PathBuf,
    #[arg(long)]
    pub answers: PathBuf,
    #[command(flatten)]
    pub data: DatasetArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitUtilityArgs {
    #[arg(long)]
    pub survey: PathBuf,
    #[arg(long)]
    pub answers: PathBuf,
    #[command(flatten)]
    pub data: DatasetArgs,
    #[arg(long, default_value_t = 3)]
    pub restarts: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AcqArg {
    Ei,
    UtilEi,
    Both,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CampaignArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Utility table (CSV); required for util-ei.
    #[arg(long)]
    pub utility: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub budget: usize,
    /// `v1,v2,c1,c2`, or `zero` for an always-open gate.
    #[arg(long, default_value = "85,15,30,40")]
    pub schedule: String,
    /// Surrogate hyperparameter restarts per iteration.
    #[arg(long, default_value_t = 8)]
    pub gp_restarts: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BoRunArgs {
    #[arg(long, value_enum)]
    pub acq: AcqArg,
    #[command(flatten)]
    pub campaign: CampaignArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BenchArgs {
    #[arg(long, value_enum, default_value = "both")]
    pub acq: AcqArg,
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    #[command(flatten)]
    pub campaign: CampaignArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TunePnArgs {
    /// Benchmark CSV; repeat together with `--utility`.
    #[arg(long, required = true)]
    pub dataset: Vec<PathBuf>,
    #[arg(long, required = true)]
    pub utility: Vec<PathBuf>,
    #[arg(long = "search", default_value_t = 100)]
    pub n_search: usize,
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    #[arg(long, default_value_t = 100)]
    pub budget: usize,
    #[arg(long, default_value_t = 8)]
    pub gp_restarts: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReportArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Utility table or zero-shot prediction CSV.
    #[arg(long)]
    pub utility: PathBuf,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ZeroShotArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    #[command(flatten)]
    pub llm: LlmArgs,
    #[command(flatten)]
    pub out: OutArgs,
}
