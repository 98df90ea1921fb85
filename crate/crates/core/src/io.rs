//! Artifact writers: RFC-4180 CSV with a header row and LF line endings,
//! pretty JSON with fixed key order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fractional_pde::Trajectory;
use crate::harness::ConvergenceTable;
use crate::kinetic_det::GridField;
use crate::kinetic_mc::{EventKind, KineticPath};
use crate::stable_limit::LevyPath;
use crate::stats::Estimate;

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

/// Write serialisable rows as CSV. The header comes from the field names,
/// so it is present even for an empty table.
pub fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .has_headers(false)
        .from_path(path)
        .map_err(|e| io_err(path, e))?;
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    let mut s = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    s.push('\n');
    fs::write(path, s).map_err(|e| io_err(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| io_err(path, e))
}

/// One row of an estimates table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub t: f64,
    pub y: f64,
    pub k: Option<f64>,
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
    pub seed: u64,
}

pub const ESTIMATE_HEADER: &[&str] = &["t", "y", "k", "mean", "stderr", "n", "seed"];

impl EstimateRow {
    pub fn new(t: f64, y: f64, k: Option<f64>, e: &Estimate) -> Self {
        EstimateRow {
            t,
            y,
            k,
            mean: e.mean,
            stderr: e.std_error,
            n: e.n_samples,
            seed: e.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathRow {
    pub sample: usize,
    pub event_type: EventKind,
    pub t: f64,
    pub y: f64,
    pub k: f64,
    pub sign: i8,
    pub outcome: Option<&'static str>,
}

pub const PATH_HEADER: &[&str] = &["sample", "event_type", "t", "y", "k", "sign", "outcome"];

pub fn path_rows(sample: usize, p: &KineticPath) -> Vec<PathRow> {
    p.events
        .iter()
        .map(|e| PathRow {
            sample,
            event_type: e.kind,
            t: e.time,
            y: e.position,
            k: e.momentum,
            sign: e.sign,
            outcome: e.outcome.map(|o| o.as_str()),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StableRow {
    pub sample: usize,
    pub t: f64,
    pub y_before: f64,
    pub y_after: f64,
    pub crossing: bool,
    pub outcome: Option<&'static str>,
}

pub const STABLE_HEADER: &[&str] = &["sample", "t", "y_before", "y_after", "crossing", "outcome"];

pub fn stable_rows(sample: usize, p: &LevyPath) -> Vec<StableRow> {
    p.jumps
        .iter()
        .map(|j| StableRow {
            sample,
            t: j.time,
            y_before: j.y_before,
            y_after: j.y_after,
            crossing: j.crossing,
            outcome: j.outcome.map(|o| o.as_str()),
        })
        .collect()
}

#[derive(Serialize)]
struct GridRow {
    y: f64,
    k: f64,
    value: f64,
}

/// GridField as `<stem>.csv` (y, k, value) plus `<stem>.json` header.
pub fn write_grid_field(dir: &Path, stem: &str, f: &GridField, t: f64) -> Result<Vec<PathBuf>> {
    let mut rows = Vec::with_capacity(f.values.len());
    for i in 0..f.grid.ny() {
        let y = f.grid.y.node(i);
        for (j, &k) in f.grid.k.iter().enumerate() {
            rows.push(GridRow { y, k, value: f.at(i, j) });
        }
    }
    let csv = dir.join(format!("{stem}.csv"));
    let json = dir.join(format!("{stem}.json"));
    write_csv(&csv, &["y", "k", "value"], &rows)?;
    write_json(&json, &f.header(t))?;
    Ok(vec![csv, json])
}

#[derive(Serialize)]
struct TrajRow {
    t: f64,
    y: f64,
    value: f64,
}

/// PDE trajectory as CSV (t, y, value).
pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut rows = Vec::with_capacity(traj.times.len() * traj.grid.len());
    for (t, f) in traj.times.iter().zip(&traj.fields) {
        for (i, &v) in f.iter().enumerate() {
            rows.push(TrajRow {
                t: *t,
                y: traj.grid.node(i),
                value: v,
            });
        }
    }
    write_csv(path, &["t", "y", "value"], &rows)
}

#[derive(Serialize)]
struct CellRow<'a> {
    experiment: &'a str,
    label: &'a str,
    n: Option<f64>,
    a: Option<f64>,
    t: Option<f64>,
    y: Option<f64>,
    k: Option<f64>,
    value: f64,
    std_error: Option<f64>,
    n_samples: Option<u64>,
    seed: Option<u64>,
}

pub const CELL_HEADER: &[&str] = &[
    "experiment", "label", "n", "a", "t", "y", "k", "value", "std_error", "n_samples", "seed",
];

/// Pass/fail digest of a convergence table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSummary {
    pub passed: bool,
    pub incomplete: bool,
    pub n_assertions: usize,
    pub n_failed: usize,
    pub assertions: Vec<crate::harness::Assertion>,
    pub fits: std::collections::BTreeMap<String, f64>,
}

impl ConvergenceSummary {
    pub fn of(t: &ConvergenceTable) -> Self {
        ConvergenceSummary {
            passed: t.passed() && !t.incomplete,
            incomplete: t.incomplete,
            n_assertions: t.assertions.len(),
            n_failed: t.assertions.iter().filter(|a| !a.passed).count(),
            assertions: t.assertions.clone(),
            fits: t.fits.clone(),
        }
    }
}

/// `convergence.csv` with every cell and `convergence.json` with the
/// pass/fail summary.
pub fn write_convergence(dir: &Path, t: &ConvergenceTable) -> Result<Vec<PathBuf>> {
    let rows: Vec<CellRow> = t
        .cells
        .iter()
        .map(|c| CellRow {
            experiment: &c.experiment,
            label: &c.label,
            n: c.n,
            a: c.a,
            t: c.t,
            y: c.y,
            k: c.k,
            value: c.value,
            std_error: c.std_error,
            n_samples: c.n_samples,
            seed: c.seed,
        })
        .collect();
    let csv = dir.join("convergence.csv");
    let json = dir.join("convergence.json");
    write_csv(&csv, CELL_HEADER, &rows)?;
    write_json(&json, &ConvergenceSummary::of(t))?;
    Ok(vec![csv, json])
}

/// Record of one CLI run written next to its artifacts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub workers: usize,
    pub incomplete: bool,
    pub files: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_header_lf_and_dot_decimal() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("x.csv");
        let e = Estimate {
            mean: 1.5,
            std_error: 0.25,
            n_samples: 10,
            seed: 3,
        };
        write_csv(&p, ESTIMATE_HEADER, &[EstimateRow::new(0.5, -0.3, None, &e)]).unwrap();
        let s = std::fs::read_to_string(&p).unwrap();
        assert_eq!(s, "t,y,k,mean,stderr,n,seed\n0.5,-0.3,,1.5,0.25,10,3\n");
    }

    #[test]
    fn empty_table_keeps_header() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("sub/x.csv");
        write_csv::<EstimateRow>(&p, ESTIMATE_HEADER, &[]).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "t,y,k,mean,stderr,n,seed\n");
    }

    #[test]
    fn text_fields_are_quoted_when_needed() {
        #[derive(Serialize)]
        struct R {
            s: &'static str,
        }
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("q.csv");
        write_csv(&p, &["s"], &[R { s: "a,\"b\"" }]).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "s\n\"a,\"\"b\"\"\"\n");
    }

    #[test]
    fn json_round_trip_and_trailing_newline() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("m.json");
        let m = Manifest {
            command: "validate".into(),
            seed: 1,
            workers: 2,
            incomplete: false,
            files: vec!["a".into()],
        };
        write_json(&p, &m).unwrap();
        let s = std::fs::read_to_string(&p).unwrap();
        assert!(s.ends_with("}\n"));
        assert!(s.find("\"command\"").unwrap() < s.find("\"seed\"").unwrap());
        let back: Manifest = read_json(&p).unwrap();
        assert_eq!(back, m);
    }
}
