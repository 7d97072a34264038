//! CSV views of a [`Trace`] for plotting.
//!
//! * `residuals.csv`: `t, residual, solver_status`, one row per step taken
//! * `schedule.csv`: `t, n_t`, one row per step taken
//! * `iterates.csv`: `t, w0, w1, ..., violation_estimate, objective`, one row
//!   per iterate `w_0, ..., w_T` (one more row than there are steps)
//! * `snapshots/<t>.csv`: `x0, x1, ..., label` for each recorded snapshot;
//!   the directory is omitted when the trace holds no snapshots
//!
//! Numbers use the shortest representation that round-trips exactly.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::fixed_point::{SolverStatus, Trace};

/// Files written by [`export_csv`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExportedFiles {
    pub residuals: PathBuf,
    pub schedule: PathBuf,
    pub iterates: PathBuf,
    pub snapshots: Vec<PathBuf>,
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn status_name(s: SolverStatus) -> &'static str {
    match s {
        SolverStatus::Optimal => "optimal",
        SolverStatus::InfeasibleRetained => "infeasible_retained",
        SolverStatus::NotRun => "not_run",
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_rows(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush()
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(())
}

fn names(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n).map(move |i| format!("{prefix}{i}"))
}

/// Writes the CSV files for `trace` into `out_dir`, creating it if needed.
pub fn export_csv(trace: &Trace, out_dir: impl AsRef<Path>) -> Result<ExportedFiles> {
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::Io(format!("{}: {e}", out_dir.display())))?;
    let dim = trace.summary.final_iterate.len();

    let steps: Vec<_> = trace
        .states
        .iter()
        .filter(|s| s.samples_used.is_some())
        .collect();

    let residuals = out_dir.join("residuals.csv");
    let rows: Vec<Vec<String>> = steps
        .iter()
        .map(|s| {
            vec![
                s.t.to_string(),
                opt(s.residual),
                status_name(s.solver_status).to_string(),
            ]
        })
        .collect();
    write_rows(
        &residuals,
        &["t", "residual", "solver_status"].map(String::from),
        &rows,
    )?;

    let schedule = out_dir.join("schedule.csv");
    let rows: Vec<Vec<String>> = steps
        .iter()
        .map(|s| vec![s.t.to_string(), opt(s.samples_used)])
        .collect();
    write_rows(&schedule, &["t", "n_t"].map(String::from), &rows)?;

    let iterates = out_dir.join("iterates.csv");
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain(names("w", dim))
        .chain(["violation_estimate".to_string(), "objective".to_string()])
        .collect();
    let rows: Vec<Vec<String>> = trace
        .states
        .iter()
        .map(|s| {
            std::iter::once(s.t.to_string())
                .chain(s.iterate.iter().map(f64::to_string))
                .chain([s.violation_estimate.to_string(), s.objective.to_string()])
                .collect()
        })
        .collect();
    write_rows(&iterates, &header, &rows)?;

    let mut snapshots = Vec::new();
    let with_snapshots: Vec<_> = trace
        .states
        .iter()
        .filter(|s| s.snapshot.is_some())
        .collect();
    if !with_snapshots.is_empty() {
        let dir = out_dir.join("snapshots");
        fs::create_dir_all(&dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
        let header: Vec<String> = names("x", dim)
            .chain(std::iter::once("label".to_string()))
            .collect();
        for s in with_snapshots {
            let path = dir.join(format!("{}.csv", s.t));
            let rows: Vec<Vec<String>> = s
                .snapshot
                .iter()
                .flatten()
                .map(|sc| {
                    sc.features
                        .iter()
                        .map(f64::to_string)
                        .chain(std::iter::once((sc.label.value() as i8).to_string()))
                        .collect()
                })
                .collect();
            write_rows(&path, &header, &rows)?;
            snapshots.push(path);
        }
    }

    Ok(ExportedFiles {
        residuals,
        schedule,
        iterates,
        snapshots,
    })
}
