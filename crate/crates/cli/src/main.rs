//! Command-line front end for the particle Fredholm solver.
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration error,
//! 3 solver divergence.

mod config;
mod report;
mod solve;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fredholm::sde::plan_budget;

use crate::config::{ConfigError, ExperimentConfig, Preset};
use crate::solve::RunContext;

#[derive(Parser, Debug)]
#[command(name = "fredholm", version, about = "Particle solver for Fredholm equations of the second kind")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Run a single seed instead of the configured list.
    #[arg(long, global = true, env = "FREDHOLM_SEED")]
    seed: Option<u64>,
    /// Output directory (overrides the config's `output_dir`).
    #[arg(long, global = true, env = "FREDHOLM_OUT")]
    out: Option<PathBuf>,
    /// Named preset: toy, toy-reference-sweep, toy-lambda-sweep,
    /// kl-expansion, gp-ssm, rate-N, rate-gamma, custom.
    #[arg(long, global = true, env = "FREDHOLM_PRESET")]
    preset: Option<String>,
    /// Worker threads (0 = all cores). Results do not depend on it.
    #[arg(long, global = true, env = "FREDHOLM_THREADS", default_value_t = 0)]
    threads: usize,
    /// TOML file merged over the preset.
    #[arg(long, global = true, env = "FREDHOLM_CONFIG")]
    config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the particle solver and write cloud, density, diagnostics and summary CSVs.
    Solve {
        /// Rescale the plug-in reconstruction to unit mass before metrics.
        #[arg(long)]
        renormalize: bool,
    },
    /// Run the Nyström baseline for the configured problem.
    Baseline,
    /// Aggregate every summary CSV under a directory.
    Report {
        dir: PathBuf,
        /// Where to write the tables (default: `<dir>/report`).
        #[arg(long = "into")]
        into: Option<PathBuf>,
    },
    /// Budget-optimal particle count and step size for cost `B = N²/γ`.
    PlanBudget {
        #[arg(long)]
        budget: f64,
        /// Particle-error constant; the default is the toy study's estimate.
        #[arg(long, default_value_t = 0.075)]
        c1: f64,
        /// Step-error constant.
        #[arg(long)]
        c2: f64,
    },
}

fn resolve(global: &Global) -> anyhow::Result<ExperimentConfig> {
    let preset = global.preset.as_deref().map(Preset::parse).transpose()?;
    let mut config = ExperimentConfig::load(preset, global.config.as_deref())?;
    if let Some(seed) = global.seed {
        config.seeds = vec![seed];
    }
    if let Some(out) = &global.out {
        config.output_dir = out.clone();
    }
    Ok(config)
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    let threads = cli.global.threads;
    match cli.command {
        Command::Solve { renormalize } => {
            let mut config = resolve(&cli.global)?;
            config.renormalize |= renormalize;
            let root = config.output_dir.clone();
            std::fs::create_dir_all(&root)?;
            let mut ctx = RunContext {
                root: &root,
                rows: Vec::new(),
            };
            fredholm::with_threads(threads, || solve::solve(&config, &mut ctx))?;
            solve::write_outputs(&config, &ctx, "summary.csv")?;
            println!("wrote {} summary rows to {}", ctx.rows.len(), root.join("summary.csv").display());
        }
        Command::Baseline => {
            let config = resolve(&cli.global)?;
            let root = config.output_dir.clone();
            std::fs::create_dir_all(&root)?;
            let mut ctx = RunContext {
                root: &root,
                rows: Vec::new(),
            };
            fredholm::with_threads(threads, || solve::baseline(&config, &mut ctx))?;
            solve::write_outputs(&config, &ctx, "nystrom-summary.csv")?;
            println!("wrote {} summary rows to {}", ctx.rows.len(), root.join("nystrom-summary.csv").display());
        }
        Command::Report { dir, into } => {
            let out = into.unwrap_or_else(|| dir.join("report"));
            report::report(&dir, &out)?;
        }
        Command::PlanBudget { budget, c1, c2 } => {
            let plan = plan_budget(budget, c1, c2).map_err(|e| ConfigError(e.to_string()))?;
            println!("budget = {}", plan.budget);
            println!("n_opt = {}", plan.n_opt);
            println!("gamma_opt = {}", plan.gamma_opt);
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<fredholm::Error>() {
        Some(fredholm::Error::Divergence { .. } | fredholm::Error::VanishingDenominator { .. }) => 3,
        Some(fredholm::Error::InvalidParameter(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
