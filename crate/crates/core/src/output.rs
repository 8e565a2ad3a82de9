//! Trajectory persistence: `trajectory.csv` plus `summary.json`.
//!
//! Floats are written in shortest round-trip form, so re-reading a file
//! reproduces the in-memory values bit for bit and identical runs produce
//! identical bytes.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::certify::Certificate;
use crate::error::{Error, Result};
use crate::functionals::{BoundCheckReport, MonitorReport};
use crate::simulate::{RunOutput, RunSummary, Trajectory, TrajectoryMetadata};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// Columns after the node values, in file order.
pub const TRAILING_COLUMNS: [&str; 10] = ["T_c1", "T_c2", "soc", "norm_D", "norm_u", "E", "B", "dist", "V", "agmon_max"];

pub fn trajectory_header(n_nodes: usize) -> Vec<String> {
    let mut cols = Vec::with_capacity(n_nodes + 11);
    cols.push("t".to_string());
    cols.extend((0..n_nodes).map(|i| format!("h_{i}")));
    cols.extend(TRAILING_COLUMNS.iter().map(|c| c.to_string()));
    cols
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_float(out: &mut String, x: f64) {
    let a = x.abs();
    if x == 0.0 || (1e-5..1e16).contains(&a) || !x.is_finite() {
        let _ = write!(out, "{x}");
    } else {
        let _ = write!(out, "{x:e}");
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

pub fn write_trajectory_csv(traj: &Trajectory, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let n_nodes = traj.fields.first().map_or(0, Vec::len);
    writeln!(w, "{}", trajectory_header(n_nodes).join(",")).map_err(io_err(path))?;
    let mut line = String::new();
    for i in 0..traj.len() {
        line.clear();
        format_float(&mut line, traj.times[i]);
        let f = &traj.functionals[i];
        let tail = [
            traj.coolant[i].0,
            traj.coolant[i].1,
            traj.soc[i],
            traj.anomaly_l2[i],
            traj.input_l2[i],
            f.energy,
            f.barrier,
            f.dist_unsafe,
            f.lyapunov,
            f.agmon_bound,
        ];
        for v in traj.fields[i].iter().chain(tail.iter()) {
            line.push(',');
            format_float(&mut line, *v);
        }
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

#[derive(Debug, Serialize)]
pub struct SummaryDocument<'a> {
    pub metadata: &'a TrajectoryMetadata,
    pub summary: &'a RunSummary,
    pub certificate: &'a Certificate,
    pub monitor: &'a MonitorReport,
    pub bound_check: Option<&'a BoundCheckReport>,
}

impl<'a> SummaryDocument<'a> {
    pub fn new(run: &'a RunOutput) -> Self {
        Self {
            metadata: &run.trajectory.metadata,
            summary: &run.summary,
            certificate: &run.trajectory.metadata.certificate,
            monitor: &run.monitor,
            bound_check: run.bound_check.as_ref(),
        }
    }
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

/// Paths of the files written for one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WrittenRun {
    pub trajectory: PathBuf,
    pub summary: PathBuf,
}

/// Writes `trajectory.csv` and `summary.json` into `out_dir`, creating it.
pub fn write_trajectory(run: &RunOutput, out_dir: &Path) -> Result<WrittenRun> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let trajectory = out_dir.join(TRAJECTORY_FILE);
    let summary = out_dir.join(SUMMARY_FILE);
    write_trajectory_csv(&run.trajectory, &trajectory)?;
    write_json(&SummaryDocument::new(run), &summary)?;
    Ok(WrittenRun { trajectory, summary })
}

/// Column-oriented view of a trajectory CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTable {
    pub times: Vec<f64>,
    pub fields: Vec<Vec<f64>>,
    pub coolant: Vec<(f64, f64)>,
    pub soc: Vec<f64>,
    pub norm_d: Vec<f64>,
    pub norm_u: Vec<f64>,
    pub energy: Vec<f64>,
    pub barrier: Vec<f64>,
    pub dist: Vec<f64>,
    pub lyapunov: Vec<f64>,
    pub agmon_max: Vec<f64>,
}

impl TrajectoryTable {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_nodes(&self) -> usize {
        self.fields.first().map_or(0, Vec::len)
    }
}

pub fn read_trajectory_csv(path: &Path) -> Result<TrajectoryTable> {
    let parse_err = |message: String| Error::Parse {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => parse_err(format!("{other:?}")),
    })?;
    let headers = reader.headers().map_err(|e| parse_err(e.to_string()))?.clone();
    let width = headers.len();
    if width < 1 + TRAILING_COLUMNS.len() + 1 {
        return Err(parse_err(format!("only {width} columns")));
    }
    let n_nodes = width - 1 - TRAILING_COLUMNS.len();
    let expected = trajectory_header(n_nodes);
    if headers.iter().ne(expected.iter().map(String::as_str)) {
        return Err(parse_err("header does not match the trajectory layout".to_string()));
    }
    let mut t = TrajectoryTable {
        times: Vec::new(),
        fields: Vec::new(),
        coolant: Vec::new(),
        soc: Vec::new(),
        norm_d: Vec::new(),
        norm_u: Vec::new(),
        energy: Vec::new(),
        barrier: Vec::new(),
        dist: Vec::new(),
        lyapunov: Vec::new(),
        agmon_max: Vec::new(),
    };
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(e.to_string()))?;
        let vals = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| parse_err(format!("line {}: {e}", row + 2)))?;
        let tail = &vals[1 + n_nodes..];
        t.times.push(vals[0]);
        t.fields.push(vals[1..1 + n_nodes].to_vec());
        t.coolant.push((tail[0], tail[1]));
        t.soc.push(tail[2]);
        t.norm_d.push(tail[3]);
        t.norm_u.push(tail[4]);
        t.energy.push(tail[5]);
        t.barrier.push(tail[6]);
        t.dist.push(tail[7]);
        t.lyapunov.push(tail[8]);
        t.agmon_max.push(tail[9]);
    }
    Ok(t)
}
