//! Pointwise comparison of two series on a common control grid.

use std::path::Path;

use serde::Serialize;

use crate::output::{read_series, CsvRow};
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    /// Allowed deviation as a fraction of the reference peak.
    pub observable: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { observable: 0.05 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareReport {
    /// Grid points inside both control ranges.
    pub points: usize,
    /// Max |a - b| over the grid divided by max |a|.
    pub load_deviation: f64,
    pub flux_deviation: f64,
    /// Max over the grid of dof(b) / dof(a).
    pub dof_ratio: f64,
    /// Final wall time of b over that of a.
    pub wall_time_ratio: f64,
    pub pass: bool,
}

/// Linear interpolation of `f` over the rows, sorted by control value.
fn interpolate(rows: &[CsvRow], x: f64, f: impl Fn(&CsvRow) -> f64) -> f64 {
    let k = rows.partition_point(|r| r.control_value < x);
    if k == 0 {
        return f(&rows[0]);
    }
    if k == rows.len() {
        return f(&rows[k - 1]);
    }
    if rows[k].control_value == x {
        return f(&rows[k]);
    }
    let (a, b) = (&rows[k - 1], &rows[k]);
    let span = b.control_value - a.control_value;
    if span == 0.0 {
        return f(b);
    }
    let t = (x - a.control_value) / span;
    f(a) + t * (f(b) - f(a))
}

/// Compares `b` against the reference `a`, resampling `b` on the control values of `a`.
pub fn compare_series(a: &[CsvRow], b: &[CsvRow], tol: Tolerances) -> Result<CompareReport, CliError> {
    let sorted = |rows: &[CsvRow]| {
        let mut v = rows.to_vec();
        v.sort_by(|x, y| x.control_value.total_cmp(&y.control_value));
        v
    };
    let (a, b) = (sorted(a), sorted(b));
    let (Some(b_lo), Some(b_hi)) = (b.first(), b.last()) else {
        return Err(CliError::Input("empty series".into()));
    };
    let grid: Vec<&CsvRow> =
        a.iter().filter(|r| r.control_value >= b_lo.control_value && r.control_value <= b_hi.control_value).collect();
    if grid.is_empty() {
        return Err(CliError::Input("control ranges are disjoint".into()));
    }
    let deviation = |f: &dyn Fn(&CsvRow) -> f64| {
        let peak = a.iter().map(|r| f(r).abs()).fold(0.0, f64::max);
        let diff = grid.iter().map(|r| (f(r) - interpolate(&b, r.control_value, f)).abs()).fold(0.0, f64::max);
        if peak > 0.0 {
            diff / peak
        } else {
            diff
        }
    };
    let load_deviation = deviation(&|r| r.load_or_pressure);
    let flux_deviation = deviation(&|r| r.flux);
    let dof_ratio = grid
        .iter()
        .map(|r| interpolate(&b, r.control_value, |x| x.dof_count as f64) / r.dof_count.max(1) as f64)
        .fold(0.0, f64::max);
    let (wa, wb) = (a.last().map_or(0.0, |r| r.wall_time_s), b_hi.wall_time_s);
    let wall_time_ratio = if wa > 0.0 { wb / wa } else { f64::NAN };
    Ok(CompareReport {
        points: grid.len(),
        load_deviation,
        flux_deviation,
        dof_ratio,
        wall_time_ratio,
        pass: load_deviation <= tol.observable && flux_deviation <= tol.observable,
    })
}

pub fn compare_dirs(a: &Path, b: &Path, tol: Tolerances) -> Result<CompareReport, CliError> {
    let read = |d: &Path| read_series(&d.join("series.csv")).map_err(|e| CliError::Input(format!("{}: {e}", d.display())));
    compare_series(&read(a)?, &read(b)?, tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(scale: f64, offset: f64, n: usize) -> Vec<CsvRow> {
        (0..n)
            .map(|k| {
                let x = offset + k as f64;
                CsvRow {
                    step: k,
                    control_value: x,
                    load_or_pressure: scale * x * (10.0 - x),
                    flux: scale * x,
                    dof_count: 100 + k,
                    wall_time_s: 1.0 + k as f64,
                    refinement_events: 0,
                }
            })
            .collect()
    }

    #[test]
    fn self_comparison_is_exact() {
        let a = series(1.0, 0.0, 10);
        let r = compare_series(&a, &a, Tolerances::default()).unwrap();
        assert_eq!(r.load_deviation, 0.0);
        assert_eq!(r.flux_deviation, 0.0);
        assert_eq!(r.dof_ratio, 1.0);
        assert_eq!(r.wall_time_ratio, 1.0);
        assert!(r.pass);
    }

    #[test]
    fn resampling_is_linear() {
        let a = series(1.0, 0.0, 10);
        let mut b = series(1.0, 0.0, 10);
        b.retain(|r| r.step % 2 == 0);
        // flux is linear in the control value, so the resampled flux is exact
        let r = compare_series(&a, &b, Tolerances::default()).unwrap();
        assert!(r.flux_deviation < 1e-15);
        assert!(r.load_deviation > 0.0);
    }

    #[test]
    fn large_deviation_fails() {
        let a = series(1.0, 0.0, 10);
        let b = series(1.5, 0.0, 10);
        let r = compare_series(&a, &b, Tolerances::default()).unwrap();
        assert!(!r.pass);
        assert!((r.flux_deviation - 0.5).abs() < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn scaling_b_scales_deviation(scale in 0.0f64..3.0, n in 2usize..30, offset in -5.0f64..5.0) {
            let a = series(1.0, offset, n);
            let r = compare_series(&a, &a, Tolerances::default()).unwrap();
            proptest::prop_assert_eq!(r.load_deviation, 0.0);
            proptest::prop_assert_eq!(r.points, n);
            let r = compare_series(&a, &series(scale, offset, n), Tolerances::default()).unwrap();
            proptest::prop_assert!((r.flux_deviation - (1.0 - scale).abs()).abs() < 1e-12);
            proptest::prop_assert_eq!(r.pass, r.load_deviation <= 0.05 && r.flux_deviation <= 0.05);
        }

        #[test]
        fn interpolation_stays_between_neighbours(n in 2usize..20, x in 0.0f64..20.0) {
            let a = series(1.0, 0.0, n);
            let v = interpolate(&a, x, |r| r.load_or_pressure);
            let lo = a.iter().map(|r| r.load_or_pressure).fold(f64::INFINITY, f64::min);
            let hi = a.iter().map(|r| r.load_or_pressure).fold(f64::NEG_INFINITY, f64::max);
            proptest::prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            let f = interpolate(&a, x, |r| r.flux);
            proptest::prop_assert!((f - x.min((n - 1) as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn disjoint_ranges_error() {
        let a = series(1.0, 0.0, 5);
        let b = series(1.0, 100.0, 5);
        assert!(matches!(compare_series(&a, &b, Tolerances::default()), Err(CliError::Input(_))));
    }
}
