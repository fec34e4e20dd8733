use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use prep_control::commands::{self, Command, RunSummary};
use prep_control::config::ScenarioConfig;
use prep_control::Error;

/// Stochastic HIV/PrEP model: simulation and optimal PrEP uptake.
#[derive(Parser)]
#[command(name = "prepctl", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate paths under a constant control.
    Simulate(RunArgs),
    /// Compute the optimal control on each path.
    Optimize(RunArgs),
    /// Compute the optimal control under a type1 or type2 budget.
    OptimizeBudget(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file of `key = value` lines. Omitted keys keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of paths.
    #[arg(long)]
    paths: Option<usize>,
}

impl RunArgs {
    fn load(&self) -> Result<ScenarioConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => ScenarioConfig::from_file(path)?,
            None => ScenarioConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if let Some(n) = self.paths {
            cfg.n_paths = n;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn report(s: &RunSummary) {
    eprintln!(
        "{} paths, {} steps, {} files written",
        s.n_paths,
        s.n_steps,
        s.files.len()
    );
    eprintln!(
        "clamp fraction {:.3e}, population bound {}",
        s.integrity.clamp_fraction,
        if s.integrity.population_bound_ok { "ok" } else { "exceeded" }
    );
    if let Some(sw) = &s.sweep {
        let worst = sw.paths.iter().map(|p| p.final_residual).fold(0.0, f64::max);
        eprintln!(
            "mean performance {:.6e}, max residual {:.3e}, {}",
            sw.mean_performance,
            worst,
            if sw.all_converged { "converged" } else { "NOT converged" }
        );
    }
    if let Some(b) = &s.budget {
        eprintln!(
            "budget cap {:.6e}, expected {:.6e}, binding on {}/{}",
            b.cap,
            b.result.expected_budget,
            b.result.binding.iter().filter(|&&x| x).count(),
            b.result.binding.len()
        );
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match &cli.command {
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Optimize(a) => (Command::Optimize, a),
        Cmd::OptimizeBudget(a) => (Command::OptimizeBudget, a),
    };
    let result = args.load().and_then(|cfg| commands::run(command, &cfg));
    match result {
        Ok(summary) => {
            report(&summary);
            ExitCode::from(summary.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
