use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use quadrl::bench::compare::CompareStatus;
use quadrl::bench::run::seed_summary;
use quadrl::bench::{cmd_compare, cmd_replay, cmd_train, load_config, run_battery, BatterySize, Model, RunConfig};
use quadrl::{AgentMode, Algorithm};

/// Exit code of `compare` when the equivariant mode is not faster.
const EXIT_NO_IMPROVEMENT: u8 = 2;

#[derive(Parser)]
#[command(name = "quadrl", version, about = "Equivariant quadrotor RL workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration file (flat `key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seed list, e.g. `0,1,2`.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Total environment steps per seed.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    algo: Option<Algorithm>,
    #[arg(long)]
    mode: Option<AgentMode>,
}

#[derive(Subcommand)]
enum Command {
    /// Train every configured seed and write logs and policy snapshots.
    Train(Common),
    /// Compare baseline and equivariant logs for the configured algorithm.
    Compare(Common),
    /// Run the property battery.
    Verify {
        /// Seed for the battery's random cases; fresh if omitted.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Roll out a saved policy and write per-step trajectory CSVs.
    Replay {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, default_value_t = 1)]
        episodes: usize,
        /// Start every episode hovering at the target.
        #[arg(long)]
        start_at_goal: bool,
    },
}

fn resolve(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &c.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seeds) = &c.seeds {
        cfg.seeds = seeds.clone();
    }
    if let Some(steps) = c.steps {
        cfg.total_steps = steps;
    }
    if let Some(algo) = c.algo {
        cfg.algo = algo;
    }
    if let Some(mode) = c.mode {
        cfg.mode = mode;
    }
    cfg.validate().context("invalid configuration after command-line overrides")?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train(c) => {
            let cfg = resolve(&c)?;
            for outcome in cmd_train(&cfg)? {
                println!("{}", seed_summary(&outcome));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare(c) => {
            let cfg = resolve(&c)?;
            let summary = cmd_compare(&cfg)?;
            print!("{}", summary.table());
            Ok(match summary.status {
                CompareStatus::Improved => ExitCode::SUCCESS,
                CompareStatus::NoImprovement => ExitCode::from(EXIT_NO_IMPROVEMENT),
            })
        }
        Command::Verify { seed } => {
            let seed = seed.unwrap_or_else(|| {
                std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map_or(0, |d| d.as_nanos() as u64)
            });
            println!("battery seed {seed}");
            let reports = run_battery(&Model::default(), seed, BatterySize::default());
            for r in &reports {
                println!("{r}");
            }
            let failed: Vec<&str> = reports.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
            if !failed.is_empty() {
                bail!("failed properties: {}", failed.join(", "));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Replay {
            common,
            policy,
            episodes,
            start_at_goal,
        } => {
            let cfg = resolve(&common)?;
            for (k, ep) in cmd_replay(&policy, &cfg, episodes, start_at_goal)?.iter().enumerate() {
                let x = ep.terminal_state.x;
                println!(
                    "episode {k}: {} steps, terminal position ({:.4}, {:.4}, {:.4}), error {:.4} m -> {}",
                    ep.rows.len(),
                    x.x,
                    x.y,
                    x.z,
                    ep.terminal_error,
                    ep.path.display()
                );
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
