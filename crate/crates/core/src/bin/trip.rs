//! Command line front end.
//!
//! Every command takes a TOML config; `--seed` and `--out` override the
//! config's values. Exit codes: 2 for config or contract violations, 3 for
//! data, split, or I/O problems, 4 for numeric failures, 1 otherwise.
//! TRIP_WORKERS caps fold-parallel training threads (outputs are identical
//! at any worker count).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use trip_core::config::RunConfig;
use trip_core::error::{Result, TripError};
use trip_core::run;

#[derive(Parser)]
#[command(name = "trip", version, about = "Asynchronous multimodal training toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config's out_dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<(RunConfig, PathBuf)> {
        let mut cfg = RunConfig::from_path(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        let out = self
            .out
            .clone()
            .or_else(|| cfg.out_dir.clone())
            .ok_or_else(|| TripError::Config("no output directory: set out_dir or --out".into()))?;
        Ok((cfg, out))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the configured synthetic dataset as CSV files.
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Train with cross-validation and write checkpoints, traces, metrics.
    Train {
        #[command(flatten)]
        common: Common,
        /// Permit fusion baselines on asynchronous data (positionally zipped
        /// pools; the comparison is ill-posed and off by default).
        #[arg(long)]
        allow_ill_posed: bool,
    },
    /// Re-evaluate saved checkpoints without retraining.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Run directory holding fold checkpoints.
        #[arg(long)]
        run: PathBuf,
    },
    /// Four-variant ablation over conflict-averse updates and rebalancing.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        allow_ill_posed: bool,
    },
    /// Re-run training across a parameter grid (beta or margin_m).
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Parameter to sweep: beta or margin_m.
        #[arg(long)]
        param: String,
        /// Comma-separated grid values, e.g. 0,0.4,0.8.
        #[arg(long)]
        grid: String,
    },
    /// Re-render report.txt and metrics.csv from a run's metrics.json.
    Report {
        /// Run directory holding metrics.json.
        #[arg(long)]
        run: PathBuf,
    },
}

fn parse_grid(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| TripError::Config(format!("bad grid value {t:?}")))
        })
        .collect()
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { common } => {
            let (cfg, out) = common.load()?;
            let written = run::cmd_gen_data(&cfg, &out)?;
            for path in written {
                println!("wrote {}", path.display());
            }
        }
        Command::Train { common, allow_ill_posed } => {
            let (cfg, out) = common.load()?;
            let result = run::run_experiment(&cfg, &out, allow_ill_posed)?;
            print!(
                "{}",
                trip_core::eval::render_report(&result.report, &format!("{}", cfg.model.arch))
            );
            println!("artifacts in {}", out.display());
        }
        Command::Eval { common, run: run_dir } => {
            let (cfg, out) = common.load()?;
            let report = run::cmd_eval(&cfg, &run_dir, &out)?;
            print!("{}", trip_core::eval::render_report(&report, &format!("{}", cfg.model.arch)));
        }
        Command::Ablate { common, allow_ill_posed } => {
            let (cfg, out) = common.load()?;
            let path = run::cmd_ablate(&cfg, &out, allow_ill_posed)?;
            println!("wrote {}", path.display());
        }
        Command::Sweep { common, param, grid } => {
            let (cfg, out) = common.load()?;
            let param: run::SweepParam = param.parse()?;
            let grid = parse_grid(&grid)?;
            let path = run::cmd_sweep(&cfg, param, &grid, &out, false)?;
            println!("wrote {}", path.display());
        }
        Command::Report { run: run_dir } => {
            let text = run::cmd_report(&run_dir)?;
            print!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
