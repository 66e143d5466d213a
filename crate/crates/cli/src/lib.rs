//! `tooldse` command-line interface: BD metrics, greedy and exhaustive tool-profile search, energy
//! measurement and profile utilities.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 runtime or
//! evaluation failure, 4 energy measurement did not converge.

mod bd_cmd;
mod dse_cmd;
mod failure;
mod misc_cmd;
mod resolve;
mod svg;

use std::path::PathBuf;
use std::ffi::OsString;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tooldse_core::dse::Objective;
use tooldse_core::profiles::CodingConfig;
use tooldse_core::InterpolationMethod;

use failure::Failure;

#[derive(Parser)]
#[command(name = "tooldse", version, about = "Explore binary coding tool profiles by BD cost metrics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute BD metrics between two profiles in an RD-point CSV.
    Bd(BdArgs),
    /// Greedy or exhaustive profile search.
    Dse {
        #[command(subcommand)]
        command: DseCommand,
    },
    /// Categorize tools from the first iteration of a search trace.
    Sensitivity(SensitivityArgs),
    /// Measure the energy of a command until the confidence rule holds.
    Measure(MeasureArgs),
    /// Profile utilities.
    Profile {
        #[command(subcommand)]
        command: ProfileCommand,
    },
    /// Synthetic landscape utilities.
    Landscape {
        #[command(subcommand)]
        command: LandscapeCommand,
    },
}

#[derive(Subcommand)]
enum DseCommand {
    /// Greedy search from the CTC profile.
    Run(DseRunArgs),
    /// Evaluate every combination of a small tool subset.
    Fullsearch(FullSearchArgs),
}

#[derive(Subcommand)]
enum ProfileCommand {
    /// Check a profile JSON against the catalog.
    Validate {
        file: PathBuf,
        #[arg(long, env = "TOOLDSE_CATALOG")]
        catalog: Option<PathBuf>,
    },
    /// Print the CTC profile of a configuration.
    Ctc {
        #[arg(long)]
        config: CodingConfig,
        #[arg(long, env = "TOOLDSE_CATALOG")]
        catalog: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum LandscapeCommand {
    /// Write a random synthetic landscape spec.
    Generate {
        #[arg(long)]
        config: CodingConfig,
        /// Tools with effects; defaults to every applicable tool.
        #[arg(long, value_delimiter = ',')]
        tools: Option<Vec<String>>,
        /// Number of random pairwise interactions.
        #[arg(long, default_value_t = 0)]
        interactions: usize,
        #[arg(long, env = "TOOLDSE_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, env = "TOOLDSE_CATALOG")]
        catalog: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum CostArg {
    Rate,
    Energy,
    Time,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum QualityArg {
    Psnr,
    Vmaf,
    Both,
}

#[derive(Args)]
struct BdArgs {
    /// RD-point CSV.
    #[arg(long)]
    input: PathBuf,
    #[arg(long = "ref")]
    reference: String,
    #[arg(long)]
    test: String,
    #[arg(long, value_enum, default_value = "rate")]
    cost: CostArg,
    #[arg(long, value_enum, default_value = "both")]
    quality: QualityArg,
    #[arg(long, env = "TOOLDSE_METHOD", default_value = "pchip")]
    method: InterpolationMethod,
    /// Print only JSON.
    #[arg(long)]
    json: bool,
}

/// Options shared by the search commands. Unset options fall back to the
/// environment, then the run config file, then built-in defaults.
#[derive(Args, Clone, Default)]
struct SearchArgs {
    /// Coding configuration.
    #[arg(long, env = "TOOLDSE_CONFIG")]
    config: Option<CodingConfig>,
    /// `synthetic:<spec.json>` or `pipeline:<config.toml>`.
    #[arg(long, env = "TOOLDSE_EVALUATOR")]
    evaluator: Option<String>,
    #[arg(long, env = "TOOLDSE_OBJECTIVE")]
    objective: Option<Objective>,
    #[arg(long, env = "TOOLDSE_METHOD")]
    method: Option<InterpolationMethod>,
    #[arg(long, value_delimiter = ',', env = "TOOLDSE_SEQUENCES")]
    sequences: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',', env = "TOOLDSE_QPS")]
    qps: Option<Vec<i32>>,
    /// Parallel evaluations; only used with evaluators that allow it.
    #[arg(long, env = "TOOLDSE_JOBS")]
    jobs: Option<usize>,
    /// Seed for every random choice, including synthetic noise.
    #[arg(long, env = "TOOLDSE_SEED")]
    seed: Option<u64>,
    /// Custom tool catalog JSON.
    #[arg(long, env = "TOOLDSE_CATALOG")]
    catalog: Option<PathBuf>,
    /// Persistent evaluation cache (JSON lines).
    #[arg(long, env = "TOOLDSE_CACHE")]
    cache: Option<PathBuf>,
    #[arg(long, env = "TOOLDSE_OUT")]
    out: Option<PathBuf>,
    /// TOML file with defaults for any of these options.
    #[arg(long = "run-config", env = "TOOLDSE_RUN_CONFIG")]
    run_config: Option<PathBuf>,
}

#[derive(Args)]
struct DseRunArgs {
    #[command(flatten)]
    search: SearchArgs,
    /// Restrict the search to these tools; others stay at CTC defaults.
    #[arg(long, value_delimiter = ',', env = "TOOLDSE_TOOLS")]
    tools: Option<Vec<String>>,
    /// Evaluator for EBE refinement; defaults to the search evaluator.
    #[arg(long, env = "TOOLDSE_REFINE_EVALUATOR")]
    refine_evaluator: Option<String>,
    /// Sequences for EBE refinement; defaults to the search sequences.
    #[arg(long, value_delimiter = ',', env = "TOOLDSE_REFINE_SEQUENCES")]
    refine_sequences: Option<Vec<String>>,
    /// Apply improving toggles one at a time instead of in a batch.
    #[arg(long, env = "TOOLDSE_SEQUENTIAL_ACCEPT")]
    sequential_accept: bool,
    #[arg(long, env = "TOOLDSE_MAX_ITERATIONS")]
    max_iterations: Option<usize>,
    /// EBE candidates need a BDR below this, in percent.
    #[arg(long, env = "TOOLDSE_BDR_CAP")]
    bdr_cap: Option<f64>,
    /// EBE shortlist size.
    #[arg(long, env = "TOOLDSE_EBE_K")]
    ebe_k: Option<usize>,
    /// Also render SVG scatter plots.
    #[arg(long, env = "TOOLDSE_SVG")]
    svg: bool,
}

#[derive(Args)]
struct FullSearchArgs {
    #[command(flatten)]
    search: SearchArgs,
    /// Comma-separated tool subset, at most 20 applicable tools.
    #[arg(long, value_delimiter = ',', env = "TOOLDSE_TOOLS")]
    tools: Option<Vec<String>>,
}

#[derive(Args)]
struct SensitivityArgs {
    /// Trace JSONL from `dse run`.
    #[arg(long)]
    trace: PathBuf,
    /// Defaults to the configuration recorded in the trace.
    #[arg(long)]
    config: Option<CodingConfig>,
    #[arg(long, env = "TOOLDSE_CATALOG")]
    catalog: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SidednessArg {
    TwoSided,
    OneSided,
}

#[derive(Clone, Copy, ValueEnum)]
enum IdleArg {
    PerSession,
    PerRun,
}

#[derive(Args)]
struct MeasureArgs {
    /// `counter:<path>[@modulus]`, `stub:constant[:J[:s]]`,
    /// `stub:gaussian:<mean>:<cv>[:seed]`, `stub:power:<W>[:<idle W>]` or
    /// `replay:<file.json>`.
    #[arg(long, env = "TOOLDSE_SOURCE")]
    source: String,
    #[arg(long, default_value_t = 0.02)]
    beta: f64,
    #[arg(long, default_value_t = 0.99)]
    alpha: f64,
    #[arg(long, default_value_t = 5)]
    m_min: usize,
    #[arg(long, default_value_t = 1000)]
    m_max: usize,
    #[arg(long, value_enum, default_value = "two-sided")]
    sidedness: SidednessArg,
    #[arg(long, value_enum, default_value = "per-session")]
    idle: IdleArg,
    /// Known idle power in watts instead of measuring it.
    #[arg(long)]
    idle_power: Option<f64>,
    /// Shell command to measure; without it an empty task is measured.
    #[arg(long)]
    command: Option<String>,
    /// Write the JSON report here as well as to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result: Result<(), Failure> = match cli.command {
        Command::Bd(args) => bd_cmd::run(args),
        Command::Dse {
            command: DseCommand::Run(args),
        } => dse_cmd::run(args),
        Command::Dse {
            command: DseCommand::Fullsearch(args),
        } => dse_cmd::fullsearch(args),
        Command::Sensitivity(args) => misc_cmd::sensitivity(args),
        Command::Measure(args) => misc_cmd::measure(args),
        Command::Profile { command } => misc_cmd::profile(command),
        Command::Landscape { command } => misc_cmd::landscape(command),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
