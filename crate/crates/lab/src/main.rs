use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use riesz_lab::commands::{run, summary_lines, write_outputs, CommandError, CommandKind, EXIT_FAIL, EXIT_PASS};
use riesz_lab::config::{self, ExperimentConfig};
use riesz_lab::exec::{resolve_workers, Threaded};

#[derive(Parser)]
#[command(name = "riesz-lab", version, about = "Identity checks, Monte Carlo projections and norm bounds for martingale-transform Riesz operators")]
struct Cli {
    /// TOML experiment configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for Monte Carlo paths and random probe suites.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads (falls back to RIESZ_LAB_WORKERS, then the core count).
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    /// Output directory for JSON and CSV reports.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Suite or check name (`all` runs everything).
    #[arg(long, global = true, value_name = "NAME")]
    suite: Option<String>,
    /// Replaces every pass tolerance.
    #[arg(long, global = true, value_name = "FLOAT")]
    tol: Option<f64>,
    /// Config override in dotted form, e.g. `--set mc.y0=2`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Deterministic operator identities on the configured model.
    IdentityCheck,
    /// Monte Carlo estimate of the transform against its spectral oracle.
    Mc,
    /// L^p bound suites.
    Bounds,
    /// Pointwise error as one Monte Carlo parameter varies.
    Convergence,
    /// Poisson kernel slices and per-mode gains.
    DumpKernel,
}

impl Command {
    fn kind(self) -> CommandKind {
        match self {
            Command::IdentityCheck => CommandKind::IdentityCheck,
            Command::Mc => CommandKind::Mc,
            Command::Bounds => CommandKind::Bounds,
            Command::Convergence => CommandKind::Convergence,
            Command::DumpKernel => CommandKind::DumpKernel,
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, CommandError> {
    let mut overrides = cli.set.clone();
    if let Some(s) = cli.seed {
        overrides.push(format!("mc.seed={s}"));
        overrides.push(format!("suite.seed={s}"));
    }
    if let Some(s) = &cli.suite {
        overrides.push(format!("suite.name={s:?}"));
    }
    if let Some(t) = cli.tol {
        overrides.push(format!("identity.tol={t:e}"));
        overrides.push(format!("suite.tol={t:e}"));
    }
    if let Some(o) = &cli.out {
        overrides.push(format!("output.dir={:?}", o.display().to_string()));
    }
    Ok(config::load(cli.config.as_deref(), &overrides)?.materialize()?)
}

fn main_inner(cli: Cli) -> Result<bool, CommandError> {
    let workers = resolve_workers(cli.workers).map_err(CommandError::Usage)?;
    let cfg = load_config(&cli)?;
    let kind = cli.command.kind();
    let outcome = run(kind, &Threaded::new(workers), &cfg)?;
    for line in summary_lines(&outcome) {
        println!("{line}");
    }
    for p in write_outputs(kind, &outcome, &cfg, workers)? {
        println!("wrote {}", p.display());
    }
    Ok(outcome.pass())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(cli) {
        Ok(true) => ExitCode::from(EXIT_PASS as u8),
        Ok(false) => ExitCode::from(EXIT_FAIL as u8),
        Err(e) => {
            eprintln!("riesz-lab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
