//! Single runs writing their output directory.

use std::path::Path;
use std::time::Instant;

use poromeso_core::adapt::{Clock, RefinementEvent};
use poromeso_core::scenarios::{run_scenario, Scenario};
use poromeso_core::solver::StepSettings;

use crate::output::{write_cracks, write_events, write_mesh, write_series, CsvRow, Summary};
use crate::CliError;

pub struct WallClock(Instant);

impl WallClock {
    pub fn start() -> Self {
        Self(Instant::now())
    }
}

impl Clock for WallClock {
    fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Always reads zero.
pub struct FrozenClock;

impl Clock for FrozenClock {
    fn seconds(&self) -> f64 {
        0.0
    }
}

#[derive(Clone, Copy, Debug)]
pub struct OutputOptions {
    pub crack_interval: usize,
    pub wall_time: bool,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub rows: Vec<CsvRow>,
    pub events: Vec<RefinementEvent>,
    pub summary: Summary,
}

/// Runs without writing files.
pub fn run_in_memory(scenario: &Scenario, settings: StepSettings, wall_time: bool) -> Result<RunResult, CliError> {
    execute(scenario, settings, wall_time, |_, _, _| Ok(()))
}

/// Runs and writes series.csv, refinements.csv, summary.json and the VTK files into `dir`.
pub fn run_to_dir(scenario: &Scenario, settings: StepSettings, dir: &Path, opts: OutputOptions) -> Result<RunResult, CliError> {
    std::fs::create_dir_all(dir)?;
    let mut written_events = 0;
    let outcome = execute(scenario, settings, opts.wall_time, |sim, row, cracks| {
        let n = sim.events().len();
        if n > written_events {
            write_mesh(&dir.join(format!("mesh_{n}.vtk")), &sim.model().mesh)?;
            written_events = n;
        }
        if opts.crack_interval > 0 && row.step % opts.crack_interval == 0 {
            write_cracks(&dir.join(format!("cracks_{}.vtk", row.step)), &sim.model().mesh, sim.state(), cracks)?;
        }
        Ok(())
    });
    match outcome {
        Ok(r) => {
            write_series(&dir.join("series.csv"), &r.rows)?;
            write_events(&dir.join("refinements.csv"), &r.events)?;
            r.summary.write(&dir.join("summary.json"))?;
            Ok(r)
        }
        Err(CliError::Solver { message, rows }) => {
            write_series(&dir.join("series.csv"), &rows)?;
            let mut s = Summary::from_rows(scenario.spec.kind.name(), scenario.spec.mode.name(), scenario.spec.seed, &rows);
            s.error = Some(message.clone());
            s.write(&dir.join("summary.json"))?;
            Err(CliError::Solver { message, rows })
        }
        Err(e) => Err(e),
    }
}

fn execute(
    scenario: &Scenario,
    settings: StepSettings,
    wall_time: bool,
    mut on_step: impl FnMut(&poromeso_core::adapt::Simulation, &CsvRow, &[(usize, f64)]) -> Result<(), CliError>,
) -> Result<RunResult, CliError> {
    let wall = WallClock::start();
    let clock: &dyn Clock = if wall_time { &wall } else { &FrozenClock };
    let mut rows = Vec::new();
    let mut io_error = None;
    let result = run_scenario(scenario, settings, clock, |sim, row, obs| {
        let r = CsvRow::from(row);
        rows.push(r);
        if io_error.is_none() {
            io_error = on_step(sim, &r, &obs.cracks).err();
        }
    });
    if let Some(e) = io_error {
        return Err(e);
    }
    let spec = &scenario.spec;
    match result {
        Ok((sim, _)) => {
            let summary = Summary::from_rows(spec.kind.name(), spec.mode.name(), spec.seed, &rows);
            Ok(RunResult { rows, events: sim.events().to_vec(), summary })
        }
        Err(e) => {
            let at = rows.last().map_or(0.0, |r| r.control_value);
            let message = format!("step {} (from control value {at:e}): {e}", rows.len());
            Err(CliError::Solver { message, rows })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::output::read_series;
    use poromeso_core::scenarios::{build_scenario, ScenarioSpec};

    #[test]
    fn block_run_writes_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let sc = build_scenario(&ScenarioSpec::pressurized_block()).unwrap();
        let opts = OutputOptions { crack_interval: 1, wall_time: false };
        let r = run_to_dir(&sc, StepSettings::default(), dir.path(), opts).unwrap();
        assert_eq!(read_series(&dir.path().join("series.csv")).unwrap(), r.rows);
        assert!(dir.path().join("summary.json").exists());
        assert!(dir.path().join("cracks_1.vtk").exists());
        let vtk = std::fs::read_to_string(dir.path().join("cracks_1.vtk")).unwrap();
        assert!(vtk.starts_with("# vtk DataFile Version 3.0"));
    }
}
