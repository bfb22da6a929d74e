//! `sad-sim` command line: dataset generation, validation and filtering,
//! training, evaluation, trace replay and the step-protocol server.

pub mod commands;
pub mod config;
pub mod error;
pub mod serve;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

pub use error::{CliError, CliResult, EXIT_DATA, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(
    name = "sad-sim",
    version,
    about = "Critical highway scenarios, safety shield and A2C agents"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    #[value(alias = "type_a", alias = "A")]
    A,
    #[value(alias = "type_b", alias = "B")]
    B,
    #[value(alias = "Cutout")]
    Cutout,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReplayFormat {
    Text,
    Svg,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    pub kind: KindArg,
    /// Scenarios per selected kind in the train split.
    #[arg(long)]
    pub count: usize,
    /// Scenarios per selected kind in the test split.
    #[arg(long, default_value_t = 0)]
    pub test_count: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Draw scenarios the maintain policy can finish.
    #[arg(long)]
    pub easy: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Scenario files (JSON or CommonRoad XML) or manifests.
    pub paths: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    /// Scenario files or manifests.
    pub paths: Vec<PathBuf>,
    /// Directory for `kept.json` and `rejected.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum, default_value = "train")]
    pub split: SplitArg,
    /// `a2c` / `a2c_discrete` or `a2c_continuous`.
    #[arg(long)]
    pub policy: Option<String>,
    #[arg(long)]
    pub budget: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// `maintain`, `random`, or a checkpoint path, optionally `label=...`.
    #[arg(long = "policy", required = true)]
    pub policies: Vec<String>,
    /// Manifest path, optionally `name=path`. Without a name the split is
    /// grouped into one test set per scenario kind.
    #[arg(long = "manifest", required = true)]
    pub manifests: Vec<String>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub window: Option<usize>,
    /// Evaluate without the shield.
    #[arg(long)]
    pub no_shield: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// `maintain`, `random`, or a checkpoint path.
    #[arg(long, default_value = "maintain")]
    pub policy: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the sub-step trace as JSON lines.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub no_shield: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub trace: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    pub format: ReplayFormat,
    /// Frame directory for SVG output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Scenario the trace came from, drawn as road geometry in SVG frames.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, conflicts_with = "stdio")]
    pub port: Option<u16>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long)]
    pub stdio: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a filtered scenario dataset and its manifest.
    Generate(GenerateArgs),
    /// Check scenario files for schema errors and drivability.
    Validate(ValidateArgs),
    /// Apply the decision-time filter.
    Filter(FilterArgs),
    /// Train an A2C agent on a manifest split.
    Train(TrainArgs),
    /// Goal-reaching matrix of policies over test sets.
    Eval(EvalArgs),
    /// Run one episode and optionally record its trace.
    Simulate(SimulateArgs),
    /// Render a recorded trace as text or SVG frames.
    Replay(ReplayArgs),
    /// Expose environments over newline-delimited JSON.
    Serve(ServeArgs),
    /// Print the default run configuration.
    Config,
}

/// Run a parsed command, writing normal output to `out`.
pub fn run(cli: Cli, out: &mut dyn std::io::Write) -> CliResult<()> {
    match cli.command {
        Command::Generate(a) => commands::generate(&a, out),
        Command::Validate(a) => commands::validate(&a, out),
        Command::Filter(a) => commands::filter(&a, out),
        Command::Train(a) => commands::train(&a, out),
        Command::Eval(a) => commands::eval(&a, out),
        Command::Simulate(a) => commands::simulate(&a, out),
        Command::Replay(a) => commands::replay(&a, out),
        Command::Serve(a) => serve::serve(&a, out),
        Command::Config => {
            write!(out, "{}", config::RunConfig::default().to_toml())?;
            Ok(())
        }
    }
}

/// Parse `args` and run, returning the process exit code. Errors go to
/// `err`.
pub fn main_with(
    args: &[String],
    out: &mut dyn std::io::Write,
    err: &mut dyn std::io::Write,
) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            if code == EXIT_OK {
                let _ = write!(out, "{e}");
            } else {
                let _ = write!(err, "{e}");
            }
            return code;
        }
    };
    match run(cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
