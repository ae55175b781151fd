use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use parksim_cli::commands::{self, CliError};
use parksim_cli::config::Config;

/// Parking and fleet requirements for home-work commuting.
#[derive(Debug, Parser)]
#[command(name = "parksim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic population CSV (`--seed` sets the population seed).
    Generate(Common),
    /// Run one cell (scenario, r_max, t_w, adoption, cap) with all replications.
    Run(Common),
    /// Run the Cartesian sweep over every listed value.
    Sweep(Common),
    /// Instantaneous-travel parking bound per r_max.
    Bound(Common),
    /// Render SVG figures from a results CSV.
    Plot {
        /// Results CSV written by `run` or `sweep`.
        results: PathBuf,
        /// Output directory.
        #[arg(long, default_value = "plots")]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<String>,
    /// Scenario or list, e.g. `s2,s3`.
    #[arg(long)]
    scenario: Option<String>,
    /// Meters; list or `start..end:step`.
    #[arg(long = "r-max")]
    r_max: Option<String>,
    /// Commute window(s): `900`, `15m`, `1h` or `empirical`.
    #[arg(long = "t-w")]
    t_w: Option<String>,
    #[arg(long)]
    adoption: Option<String>,
    #[arg(long)]
    days: Option<String>,
    #[arg(long)]
    replications: Option<String>,
    /// Parking cap(s); `none` for uncapped.
    #[arg(long)]
    cap: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: PARKSIM_WORKERS, else all cores).
    #[arg(long)]
    workers: Option<String>,
    #[arg(long, value_parser = ["csv", "json"])]
    format: Option<String>,
}

impl Common {
    fn resolve(&self, seed_key: &str) -> Result<Config, CliError> {
        let mut cfg = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        let overrides = [
            (seed_key, &self.seed),
            ("scenario", &self.scenario),
            ("r_max", &self.r_max),
            ("t_w", &self.t_w),
            ("adoption", &self.adoption),
            ("n_days", &self.days),
            ("n_replications", &self.replications),
            ("cap", &self.cap),
            ("workers", &self.workers),
            ("format", &self.format),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        if let Some(out) = &self.out {
            cfg.out = Some(out.clone());
        }
        Ok(cfg)
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate(c) => {
            let cfg = c.resolve("population_seed")?;
            let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("population.csv"));
            let n = commands::cmd_generate(&cfg, &out)?;
            eprintln!("wrote {n} commuters to {}", out.display());
        }
        Command::Run(c) => {
            let (out, res) = commands::cmd_run(&c.resolve("seed")?)?;
            eprintln!("wrote {} row(s) to {}", res.len(), out.display());
        }
        Command::Sweep(c) => {
            let (out, res) = commands::cmd_sweep(&c.resolve("seed")?)?;
            eprintln!("wrote {} row(s) to {}", res.len(), out.display());
        }
        Command::Bound(c) => {
            let (out, rows) = commands::cmd_bound(&c.resolve("seed")?)?;
            eprintln!("wrote {} row(s) to {}", rows.len(), out.display());
        }
        Command::Plot { results, out } => {
            for p in commands::cmd_plot(&results, &out)? {
                eprintln!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
