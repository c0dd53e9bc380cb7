//! Series CSV, legacy VTK files and the run summary.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use poromeso_core::adapt::RefinementEvent;
use poromeso_core::mesh::DualMesh;
use poromeso_core::physics::SystemState;
use poromeso_core::scenarios::SeriesRow;
use serde::{Deserialize, Serialize};

pub const SERIES_COLUMNS: [&str; 7] =
    ["step", "control_value", "load_or_pressure", "flux", "dof_count", "wall_time_s", "refinement_events"];

/// One parsed line of series.csv.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub step: usize,
    pub control_value: f64,
    pub load_or_pressure: f64,
    pub flux: f64,
    pub dof_count: usize,
    pub wall_time_s: f64,
    pub refinement_events: usize,
}

impl From<&SeriesRow> for CsvRow {
    fn from(r: &SeriesRow) -> Self {
        Self {
            step: r.step,
            control_value: r.control_value,
            load_or_pressure: r.load_or_pressure,
            flux: r.flux,
            dof_count: r.dof_count,
            wall_time_s: r.wall_time_s,
            refinement_events: r.refinement_events,
        }
    }
}

pub fn write_series(path: &Path, rows: &[CsvRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_series(path: &Path) -> csv::Result<Vec<CsvRow>> {
    csv::Reader::from_path(path)?.deserialize().collect()
}

#[derive(Clone, Copy, Debug, Serialize)]
struct EventRow {
    step: usize,
    control_value: f64,
    critical: usize,
    evicted: usize,
    inserted: usize,
    dofs_before: usize,
    dofs_after: usize,
    load_before: f64,
    load_after: f64,
    preserved: usize,
    history_intact: bool,
    rollback_intact: bool,
}

pub fn write_events(path: &Path, events: &[RefinementEvent]) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for e in events {
        w.serialize(EventRow {
            step: e.step,
            control_value: e.control_value,
            critical: e.critical,
            evicted: e.evicted,
            inserted: e.inserted,
            dofs_before: e.dofs_before,
            dofs_after: e.dofs_after,
            load_before: e.load_before,
            load_after: e.load_after,
            preserved: e.preserved,
            history_intact: e.history_intact,
            rollback_intact: e.rollback_intact,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Endpoints of the facet of element `e`.
fn facet(mesh: &DualMesh, e: usize) -> [[f64; 2]; 2] {
    let el = &mesh.elements[e];
    let half = el.tangent * (0.5 * el.area / mesh.thickness);
    let (a, b) = (el.centroid - half, el.centroid + half);
    [[a.x, a.y], [b.x, b.y]]
}

fn write_lines(path: &Path, title: &str, lines: &[[[f64; 2]; 2]], scalars: &[(&str, Vec<f64>)]) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET POLYDATA")?;
    writeln!(w, "POINTS {} double", 2 * lines.len())?;
    for l in lines {
        for p in l {
            writeln!(w, "{} {} 0", p[0], p[1])?;
        }
    }
    writeln!(w, "LINES {} {}", lines.len(), 3 * lines.len())?;
    for k in 0..lines.len() {
        writeln!(w, "2 {} {}", 2 * k, 2 * k + 1)?;
    }
    if !scalars.is_empty() {
        writeln!(w, "CELL_DATA {}", lines.len())?;
        for (name, values) in scalars {
            writeln!(w, "SCALARS {name} double 1\nLOOKUP_TABLE default")?;
            for v in values {
                writeln!(w, "{v}")?;
            }
        }
    }
    w.flush()
}

/// Damaged facets as line cells with their crack opening.
pub fn write_cracks(path: &Path, mesh: &DualMesh, state: &SystemState, cracks: &[(usize, f64)]) -> std::io::Result<()> {
    let lines: Vec<_> = cracks.iter().map(|&(e, _)| facet(mesh, e)).collect();
    let w = cracks.iter().map(|c| c.1).collect();
    let d = cracks.iter().map(|&(e, _)| state.contacts[e].d).collect();
    write_lines(path, "cracks", &lines, &[("w_N", w), ("damage", d)])
}

/// All facets, flagged 1 where both particles are physical.
pub fn write_mesh(path: &Path, mesh: &DualMesh) -> std::io::Result<()> {
    let lines: Vec<_> = (0..mesh.elements.len()).map(|e| facet(mesh, e)).collect();
    let physical = mesh
        .elements
        .iter()
        .map(|el| f64::from(u8::from(mesh.mech_nodes[el.i].physical && mesh.mech_nodes[el.j].physical)))
        .collect();
    write_lines(path, "mesh", &lines, &[("physical", physical)])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    /// Set for the plane bending analog, which is not a reproduction of the 3D beam.
    pub label: Option<String>,
    pub mode: String,
    pub seed: u64,
    pub steps: usize,
    pub peak_load_or_pressure: f64,
    pub control_at_peak: f64,
    pub peak_flux: f64,
    pub final_dof_count: usize,
    pub max_dof_count: usize,
    pub refinement_events: usize,
    pub wall_time_s: f64,
    pub error: Option<String>,
}

impl Summary {
    pub fn from_rows(scenario: &str, mode: &str, seed: u64, rows: &[CsvRow]) -> Self {
        let peak = rows.iter().copied().fold(None::<CsvRow>, |best, r| match best {
            Some(b) if b.load_or_pressure >= r.load_or_pressure => Some(b),
            _ => Some(r),
        });
        let last = rows.last();
        Self {
            scenario: scenario.to_string(),
            label: (scenario == "bend2d_with_pressure").then(|| "analog".to_string()),
            mode: mode.to_string(),
            seed,
            steps: rows.len().saturating_sub(1),
            peak_load_or_pressure: peak.map_or(0.0, |r| r.load_or_pressure),
            control_at_peak: peak.map_or(0.0, |r| r.control_value),
            peak_flux: rows.iter().map(|r| r.flux.abs()).fold(0.0, f64::max),
            final_dof_count: last.map_or(0, |r| r.dof_count),
            max_dof_count: rows.iter().map(|r| r.dof_count).max().unwrap_or(0),
            refinement_events: last.map_or(0, |r| r.refinement_events),
            wall_time_s: last.map_or(0.0, |r| r.wall_time_s),
            error: None,
        }
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(path, text + "\n")
    }
}
