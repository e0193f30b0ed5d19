//! CLI entry point: `stoch-abstract {abstract|synthesize|simulate|report}`.
//!
//! Exit codes: 0 on success, 2 for configuration/schema violations, 1 for
//! compute failures (tagged with the failing stage).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use stoch_abstract::config::RunConfig;
use stoch_abstract::pipeline;

#[derive(Parser)]
#[command(name = "stoch-abstract", version, about = "Abstraction-based robust controller synthesis for stochastic systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct StageArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Cap on worker threads.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the configured abstraction classes.
    Abstract(StageArgs),
    /// Synthesize robust controllers from abstraction artifacts.
    Synthesize(StageArgs),
    /// Monte-Carlo validation of synthesized controllers.
    Simulate(StageArgs),
    /// Merge report artifacts into comparison and heatmap tables.
    Report {
        /// Report JSON files produced by `simulate`.
        files: Vec<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn init_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        // ignore the error when a pool already exists (e.g. repeated init in tests)
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn load_config(path: &PathBuf) -> Result<RunConfig, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    RunConfig::from_json(&text).map_err(|e| e.to_string())
}

fn run_stage(
    name: &str,
    args: &StageArgs,
    f: impl Fn(&RunConfig, &std::path::Path) -> Result<Vec<PathBuf>, pipeline::StageError>,
) -> ExitCode {
    let cfg = match load_config(&args.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    init_threads(args.threads);
    let out_dir = args.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
    match f(&cfg, &out_dir) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error in stage `{name}`: {e}");
            ExitCode::from(1)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::new().filter_or("STOCH_ABSTRACT_LOG", "warn"),
    )
    .init();

    match Cli::parse().command {
        Command::Abstract(args) => run_stage("abstract", &args, pipeline::cmd_abstract),
        Command::Synthesize(args) => run_stage("synthesize", &args, pipeline::cmd_synthesize),
        Command::Simulate(args) => run_stage("simulate", &args, pipeline::cmd_simulate),
        Command::Report { files, out, threads } => {
            if files.is_empty() {
                eprintln!("error: report needs at least one report file");
                return ExitCode::from(2);
            }
            init_threads(threads);
            match pipeline::cmd_report(&files, &out) {
                Ok(written) => {
                    for f in written {
                        println!("{}", f.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error in stage `report`: {e}");
                    ExitCode::from(1)
                }
            }
        }
    }
}
