use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use poromeso::batch::{run_batch, seeds, worker_count, write_aggregate};
use poromeso::compare::{compare_dirs, Tolerances};
use poromeso::config::RunConfig;
use poromeso::run::{run_to_dir, OutputOptions};
use poromeso::CliError;

#[derive(Parser)]
#[command(name = "poromeso", version, about = "Coupled poromechanical mesoscale runs with adaptive refinement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario from a TOML config.
    Run { config: PathBuf },
    /// Compare two run directories on a common control grid.
    Compare {
        dir_a: PathBuf,
        dir_b: PathBuf,
        /// Allowed deviation relative to the peak of the first run.
        #[arg(long, default_value_t = 0.05)]
        tol: f64,
    },
    /// Run seeded realizations in parallel and write mean and deviation bands.
    Batch {
        config: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed_base: u64,
        /// Explicit comma-separated seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
}

fn run(config: &Path) -> Result<(), CliError> {
    let cfg = RunConfig::from_path(config)?;
    let scenario = cfg.scenario()?;
    let opts = OutputOptions { crack_interval: cfg.output.crack_interval, wall_time: cfg.output.wall_time };
    let r = run_to_dir(&scenario, cfg.settings(), &cfg.output.dir, opts)?;
    println!(
        "{} {}: {} steps, peak {:e} at {:e}, {} refinement events, {} dofs",
        r.summary.scenario,
        r.summary.mode,
        r.summary.steps,
        r.summary.peak_load_or_pressure,
        r.summary.control_at_peak,
        r.summary.refinement_events,
        r.summary.final_dof_count
    );
    Ok(())
}

fn compare(a: &Path, b: &Path, tol: f64) -> Result<bool, CliError> {
    if !(tol.is_finite() && tol >= 0.0) {
        return Err(CliError::Input(format!("tolerance must be non-negative, got {tol}")));
    }
    let r = compare_dirs(a, b, Tolerances { observable: tol })?;
    println!("points            {}", r.points);
    println!("load deviation    {:.4e}", r.load_deviation);
    println!("flux deviation    {:.4e}", r.flux_deviation);
    println!("dof ratio         {:.4}", r.dof_ratio);
    println!("wall time ratio   {:.4}", r.wall_time_ratio);
    println!("{}", if r.pass { "PASS" } else { "FAIL" });
    Ok(r.pass)
}

fn batch(config: &Path, n: usize, seed_base: u64, explicit: Option<&[u64]>) -> Result<(), CliError> {
    let cfg = RunConfig::from_path(config)?;
    cfg.spec()?;
    let list = seeds(n, seed_base, explicit)?;
    let build = |seed| cfg.scenario_with_seed(seed);
    let agg = run_batch(&build, cfg.settings(), &list, worker_count(), cfg.output.wall_time)?;
    write_aggregate(&cfg.output.dir, &agg)?;
    println!("{} of {} realizations completed", agg.completed, list.len());
    for (seed, e) in &agg.failures {
        eprintln!("seed {seed} failed: {e}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config } => run(config).map(|_| true),
        Command::Compare { dir_a, dir_b, tol } => compare(dir_a, dir_b, *tol),
        Command::Batch { config, n, seed_base, seeds } => batch(config, *n, *seed_base, seeds.as_deref()).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
