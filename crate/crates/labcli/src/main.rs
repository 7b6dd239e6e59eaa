use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use liouville_lab::commands;
use liouville_lab::{CliError, ExperimentConfig};

#[derive(Parser, Debug)]
#[command(
    name = "liouville-lab",
    version,
    about = "Blow-up experiments for singular Liouville equations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides `out` in the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for per-k work.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Overrides `grid.n`.
    #[arg(long = "grid-n", global = true)]
    grid_n: Option<usize>,

    /// Overrides the probe-point seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Write the exact member fields and a manifest.
    Generate,
    /// Solve the Dirichlet problems and write fields and convergence records.
    Solve,
    /// Run the diagnostics on stored fields and write the reports.
    Diagnose,
    /// Run the configured parameter sweep into one CSV table.
    Sweep,
    /// Detect the scale cascade of the pole tracks.
    Cascade,
}

fn run(cli: &Cli) -> Result<String, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(n) = cli.grid_n {
        cfg.grid.n = n;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let out = cli.out.clone().or_else(|| cfg.out.clone()).ok_or_else(|| {
        CliError::Config("out: no output directory (use --out or set `out`)".into())
    })?;
    std::fs::create_dir_all(&out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    Ok(match cli.command {
        Command::Generate => {
            let m = commands::generate(&cfg, &out)?;
            format!(
                "wrote {} fields to {}",
                m.members.len(),
                out.join("fields").display()
            )
        }
        Command::Solve => {
            let outcomes = commands::solve(&cfg, &out)?;
            let failed = outcomes
                .iter()
                .filter(|o| o.status == commands::SolveStatus::Failed)
                .count();
            format!(
                "solved {} of {} members",
                outcomes.len() - failed,
                outcomes.len()
            )
        }
        Command::Diagnose => {
            let r = commands::diagnose_run(&cfg, &out)?;
            match &r.quantization {
                Ok(q) => format!("quantization: {:?}, n = {:?}", q.status, q.n),
                Err(e) => format!("quantization not assessed: {e}"),
            }
        }
        Command::Sweep => {
            let rows = commands::sweep(&cfg, &out)?;
            format!("wrote {rows} rows to {}", out.join("sweep.csv").display())
        }
        Command::Cascade => {
            let r = commands::cascade(&cfg, &out)?;
            format!("s = {}, s1 = {}, {} groups", r.s, r.s1, r.groups.len())
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
