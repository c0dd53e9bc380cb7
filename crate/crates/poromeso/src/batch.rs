//! Seeded realizations run in parallel and aggregated into mean and deviation bands.

use std::path::Path;
use std::sync::Mutex;

use poromeso_core::scenarios::Scenario;
use poromeso_core::solver::StepSettings;
use serde::Serialize;

use crate::output::CsvRow;
use crate::run::run_in_memory;
use crate::CliError;

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "POROMESO_WORKERS";

pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Seeds `base, base + 1, ...`, or the first `n` of an explicit list.
pub fn seeds(n: usize, base: u64, explicit: Option<&[u64]>) -> Result<Vec<u64>, CliError> {
    if n < 2 {
        return Err(CliError::Input("a batch needs at least 2 realizations".into()));
    }
    match explicit {
        Some(list) if list.len() < n => Err(CliError::Input(format!("{} seeds given for {n} realizations", list.len()))),
        Some(list) => Ok(list[..n].to_vec()),
        None => Ok((0..n as u64).map(|k| base + k).collect()),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Band {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Band {
    fn from_samples(samples: &[Vec<f64>], len: usize) -> Self {
        let n = samples.len() as f64;
        let mut mean = vec![0.0; len];
        let mut std = vec![0.0; len];
        for k in 0..len {
            let m = samples.iter().map(|s| s[k]).sum::<f64>() / n;
            let var = if samples.len() > 1 {
                samples.iter().map(|s| (s[k] - m).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            mean[k] = m;
            std[k] = var.sqrt();
        }
        Self { mean, std }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Aggregate {
    pub control: Vec<f64>,
    pub load: Band,
    pub flux: Band,
    pub dof: Band,
    pub wall_time: Band,
    pub completed: usize,
    /// Seeds that failed, with the error.
    pub failures: Vec<(u64, String)>,
}

/// Runs one realization per seed; `build` makes the scenario for a seed.
pub fn run_batch(
    build: &(dyn Fn(u64) -> Result<Scenario, CliError> + Sync),
    settings: StepSettings,
    seeds: &[u64],
    workers: usize,
    wall_time: bool,
) -> Result<Aggregate, CliError> {
    let slots: Vec<Mutex<Option<Result<Vec<CsvRow>, String>>>> = seeds.iter().map(|_| Mutex::new(None)).collect();
    let next = Mutex::new(0usize);
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, seeds.len().max(1)) {
            s.spawn(|| loop {
                let k = {
                    let mut n = next.lock().unwrap();
                    let k = *n;
                    *n += 1;
                    k
                };
                if k >= seeds.len() {
                    break;
                }
                let out = build(seeds[k]).and_then(|sc| run_in_memory(&sc, settings, wall_time)).map(|r| r.rows);
                *slots[k].lock().unwrap() = Some(out.map_err(|e| e.to_string()));
            });
        }
    });

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (seed, slot) in seeds.iter().zip(slots) {
        match slot.into_inner().unwrap().expect("every seed ran") {
            Ok(rows) => runs.push(rows),
            Err(e) => failures.push((*seed, e)),
        }
    }
    let Some(first) = runs.first() else {
        return Err(CliError::Solver { message: format!("all {} realizations failed", seeds.len()), rows: Vec::new() });
    };
    let control: Vec<f64> = first.iter().map(|r| r.control_value).collect();
    let len = control.len();
    if runs.iter().any(|r| r.len() != len) {
        return Err(CliError::Input("realizations have different control grids".into()));
    }
    let column = |f: fn(&CsvRow) -> f64| runs.iter().map(|r| r.iter().map(f).collect()).collect::<Vec<Vec<f64>>>();
    Ok(Aggregate {
        load: Band::from_samples(&column(|r| r.load_or_pressure), len),
        flux: Band::from_samples(&column(|r| r.flux), len),
        dof: Band::from_samples(&column(|r| r.dof_count as f64), len),
        wall_time: Band::from_samples(&column(|r| r.wall_time_s), len),
        control,
        completed: runs.len(),
        failures,
    })
}

pub fn write_aggregate(dir: &Path, agg: &Aggregate) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("batch.csv")).map_err(|e| CliError::Io(e.to_string()))?;
    w.write_record([
        "control_value",
        "load_mean",
        "load_std",
        "flux_mean",
        "flux_std",
        "dof_mean",
        "dof_std",
        "wall_time_mean",
        "wall_time_std",
    ])
    .map_err(|e| CliError::Io(e.to_string()))?;
    for k in 0..agg.control.len() {
        let rec = [
            agg.control[k],
            agg.load.mean[k],
            agg.load.std[k],
            agg.flux.mean[k],
            agg.flux.std[k],
            agg.dof.mean[k],
            agg.dof.std[k],
            agg.wall_time.mean[k],
            agg.wall_time.std[k],
        ];
        w.write_record(rec.iter().map(|v| v.to_string())).map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.flush()?;
    #[derive(Serialize)]
    struct Meta<'a> {
        completed: usize,
        failed: usize,
        failures: &'a [(u64, String)],
    }
    let meta = Meta { completed: agg.completed, failed: agg.failures.len(), failures: &agg.failures };
    std::fs::write(dir.join("batch_summary.json"), serde_json::to_string_pretty(&meta).map_err(std::io::Error::other)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use poromeso_core::scenarios::{build_scenario, ScenarioSpec};

    fn block(seed: u64) -> Result<Scenario, CliError> {
        let mut spec = ScenarioSpec::pressurized_block();
        spec.seed = seed;
        build_scenario(&spec).map_err(|e| CliError::Config(e.to_string()))
    }

    #[test]
    fn seed_lists() {
        assert_eq!(seeds(3, 10, None).unwrap(), vec![10, 11, 12]);
        assert_eq!(seeds(2, 0, Some(&[5, 6, 7])).unwrap(), vec![5, 6]);
        assert!(matches!(seeds(3, 0, Some(&[1, 2])), Err(CliError::Input(_))));
        assert!(matches!(seeds(1, 0, None), Err(CliError::Input(_))));
    }

    #[test]
    fn identical_seeds_give_zero_band() {
        let agg = run_batch(&block, StepSettings::default(), &[4, 4], 2, false).unwrap();
        assert_eq!(agg.completed, 2);
        assert!(agg.flux.std.iter().all(|&s| s == 0.0));
        assert!(agg.flux.mean[1] > 0.0);
    }

    #[test]
    fn failures_are_counted() {
        let flaky = |seed: u64| if seed == 2 { Err(CliError::Config("broken".into())) } else { block(seed) };
        let agg = run_batch(&flaky, StepSettings::default(), &[1, 2, 3], 3, false).unwrap();
        assert_eq!(agg.completed, 2);
        assert_eq!(agg.failures.len(), 1);
        assert_eq!(agg.failures[0].0, 2);
    }

    #[test]
    fn band_statistics() {
        let b = Band::from_samples(&[vec![1.0, 2.0], vec![3.0, 2.0]], 2);
        assert_eq!(b.mean, vec![2.0, 2.0]);
        assert!((b.std[0] - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(b.std[1], 0.0);
    }
}
