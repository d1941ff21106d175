use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use log::info;
use smcmc_core::harness::config::{ExperimentKind, RunConfig};
use smcmc_core::harness::{diagnose, run_experiment};
use smcmc_core::Execution;

#[derive(Parser)]
#[command(name = "smcmc", version, about = "Sequential MCMC filtering experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Linear-Gaussian benchmark (KF, ensemble filters, SMCMC).
    LinearBench(RunArgs),
    /// Shallow-water twin experiment with known drifter locations.
    SwKnown(RunArgs),
    /// Shallow-water experiment with unknown drifter locations.
    SwUnknown(RunArgs),
    /// Chain diagnostics (acceptance, autocorrelation, ancestor use).
    Diagnose(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML or JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Seed base; repeat m uses seed + m.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of independent repeats M.
    #[arg(long)]
    repeats: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for the parallel loops (defaults to all cores).
    #[arg(long, env = "SMCMC_THREADS")]
    threads: Option<usize>,
    /// Run every loop on the calling thread.
    #[arg(long)]
    sequential: bool,
}

fn load(args: &RunArgs) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::load(&args.config).with_context(|| format!("loading {}", args.config.display()))?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(m) = args.repeats {
        cfg.repeats = m;
    }
    if let Some(o) = &args.out {
        cfg.out = o.clone();
    }
    if args.sequential {
        cfg.execution = Execution::Sequential;
    }
    if let Some(t) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the thread pool")?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::LinearBench(args) => {
            let cfg = load(args)?;
            if !cfg.experiment.is_linear() {
                bail!("linear-bench needs a linear or linear-partial config, got {}", cfg.experiment.name());
            }
            let report = run_experiment(&cfg)?;
            for r in &report.table {
                println!("{:<8} d={:<5} size={:<10} M={:<3} fraction={:.4}", r.method, r.d, r.size, r.repeats, r.fraction);
            }
            info!("wrote {} files under {}", report.files.len(), report.out.display());
        }
        Command::SwKnown(args) | Command::SwUnknown(args) => {
            let mut cfg = load(args)?;
            if cfg.experiment.is_linear() {
                bail!("{} is a linear config", args.config.display());
            }
            cfg.experiment = match cli.command {
                Command::SwKnown(_) => ExperimentKind::SwKnown,
                _ => ExperimentKind::SwUnknown,
            };
            let report = run_experiment(&cfg)?;
            if let Some(s) = &report.sw {
                println!("{}", serde_json::to_string_pretty(s)?);
            }
            info!("wrote {} files under {}", report.files.len(), report.out.display());
        }
        Command::Diagnose(args) => {
            let cfg = load(args)?;
            let s = diagnose(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&s)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
