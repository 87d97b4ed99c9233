use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use roughspde::commands::{cmd_fit, cmd_moments, cmd_report, cmd_simulate, cmd_verify, RunOptions};
use roughspde::config::ExperimentConfig;
use roughspde::parallel::default_workers;
use roughspde::verify::Suite;
use roughspde::{CliError, Result};

/// SPDEs driven by rough noise: simulation, moment estimation and verification.
#[derive(Parser)]
#[command(name = "roughspde", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment file (TOML). Built-in defaults are used without one.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo paths.
    #[arg(long)]
    paths: Option<usize>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// KEY=VALUE with a dotted key, e.g. grid.nx=2048. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one path and write the field files.
    Simulate(Common),
    /// Estimate increment moments and fit exponents.
    Moments(Common),
    /// Refit exponents from an existing moments CSV.
    Fit {
        /// Moments CSV written by `moments`.
        #[arg(long)]
        moments: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run a verification suite; exits with 3 on FAIL.
    Verify {
        #[arg(long, value_enum)]
        suite: Suite,
        #[command(flatten)]
        common: Common,
    },
    /// Summarize an output directory and re-verify checksums.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(c: &Common) -> Result<(ExperimentConfig, RunOptions)> {
    let mut overrides = c.overrides.clone();
    if let Some(s) = c.seed {
        overrides.push(format!("run.seed={s}"));
    }
    if let Some(p) = c.paths {
        overrides.push(format!("run.paths={p}"));
    }
    if let Some(o) = &c.out {
        overrides.push(format!("run.out={}", toml_string(&o.display().to_string())));
    }
    let cfg = match &c.config {
        Some(path) => ExperimentConfig::load(path, &overrides)?,
        None => {
            let mut table: toml::Table = ExperimentConfig::default().to_toml().parse().expect("defaults parse");
            for o in &overrides {
                roughspde::config::apply_override(&mut table, o)?;
            }
            let cfg: ExperimentConfig =
                toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| CliError::Parse(e.to_string()))?;
            cfg.resolve()?;
            cfg
        }
    };
    let workers = c.workers.unwrap_or_else(default_workers);
    if workers == 0 {
        return Err(CliError::config("workers", "must be at least 1"));
    }
    let opts = RunOptions { out: PathBuf::from(&cfg.run.out), workers, overrides };
    Ok((cfg, opts))
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Simulate(c) => {
            let (cfg, opts) = load(&c)?;
            let m = cmd_simulate(&cfg, &opts)?;
            println!("wrote {} files to {}", m.files.len(), opts.out.display());
            Ok(0)
        }
        Command::Moments(c) => {
            let (cfg, opts) = load(&c)?;
            let o = cmd_moments(&cfg, &opts)?;
            print!("{}", o.report.to_text());
            Ok(0)
        }
        Command::Fit { moments, common } => {
            let cfg = match &common.config {
                Some(_) => Some(load(&common)?.0),
                None => None,
            };
            let out = common.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            let opts = RunOptions { out, workers: 1, overrides: common.overrides.clone() };
            let (_, fits, report) = cmd_fit(&moments, cfg.as_ref(), &opts)?;
            match report {
                Some(r) => print!("{}", r.to_text()),
                None => {
                    for f in fits {
                        println!(
                            "{} p = {}: exponent {:.4} ci95 [{:.4}, {:.4}]",
                            f.direction.name(),
                            f.p,
                            f.exponent,
                            f.ci95.0,
                            f.ci95.1
                        );
                    }
                }
            }
            Ok(0)
        }
        Command::Verify { suite, common } => {
            let (cfg, opts) = load(&common)?;
            let (_, report) = cmd_verify(&cfg, suite, &opts)?;
            print!("{}", report.to_text());
            Ok(if report.passed() { 0 } else { 3 })
        }
        Command::Report { out } => {
            let s = cmd_report(&out)?;
            print!("{}", s.text);
            Ok(if s.corrupted.is_empty() { 0 } else { 1 })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
