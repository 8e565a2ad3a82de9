use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::Deserialize;

use crate::error::{Error, Result};

/// Piecewise-linear current profile I(t) in A (positive = discharge).
///
/// Queries outside the covered time range hold the end values and bump a
/// warning counter.
#[derive(Debug)]
pub struct CurrentProfile {
    times: Vec<f64>,
    currents: Vec<f64>,
    out_of_range: AtomicUsize,
}

impl Clone for CurrentProfile {
    fn clone(&self) -> Self {
        Self {
            times: self.times.clone(),
            currents: self.currents.clone(),
            out_of_range: AtomicUsize::new(self.warning_count()),
        }
    }
}

impl PartialEq for CurrentProfile {
    fn eq(&self, other: &Self) -> bool {
        self.times == other.times && self.currents == other.currents
    }
}

impl CurrentProfile {
    /// Builds a profile from `(time_s, current_a)` points with strictly
    /// increasing times.
    pub fn from_points(points: &[(f64, f64)]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::validation("current_profile", "profile has no points"));
        }
        for (i, (t, c)) in points.iter().enumerate() {
            if !t.is_finite() || !c.is_finite() {
                return Err(Error::validation("current_profile", format!("row {i} is not finite")));
            }
            if i > 0 && *t <= points[i - 1].0 {
                return Err(Error::validation(
                    "current_profile",
                    format!("time is not strictly increasing at row {i} (t = {t})"),
                ));
            }
        }
        Ok(Self {
            times: points.iter().map(|p| p.0).collect(),
            currents: points.iter().map(|p| p.1).collect(),
            out_of_range: AtomicUsize::new(0),
        })
    }

    /// Constant current for all time; never warns.
    pub fn constant(current: f64) -> Self {
        Self {
            times: vec![f64::NEG_INFINITY],
            currents: vec![current],
            out_of_range: AtomicUsize::new(0),
        }
    }

    fn is_constant(&self) -> bool {
        self.times.len() == 1 && self.times[0] == f64::NEG_INFINITY
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        if self.is_constant() {
            f64::INFINITY
        } else {
            *self.times.last().expect("non-empty")
        }
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.currents.iter().copied())
    }

    /// Number of out-of-range queries so far.
    pub fn warning_count(&self) -> usize {
        self.out_of_range.load(Ordering::Relaxed)
    }

    pub fn covers(&self, t0: f64, t1: f64) -> bool {
        self.is_constant() || (self.start() <= t0 && t1 <= self.end())
    }

    /// Interpolated current, no warning bookkeeping.
    fn eval(&self, t: f64) -> f64 {
        let n = self.times.len();
        if self.is_constant() || t <= self.times[0] {
            return self.currents[0];
        }
        if t >= self.times[n - 1] {
            return self.currents[n - 1];
        }
        let j = self.times.partition_point(|&x| x <= t);
        let (t0, t1) = (self.times[j - 1], self.times[j]);
        let (c0, c1) = (self.currents[j - 1], self.currents[j]);
        c0 + (c1 - c0) * (t - t0) / (t1 - t0)
    }

    pub fn current_at(&self, t: f64) -> f64 {
        if !self.covers(t, t) {
            self.out_of_range.fetch_add(1, Ordering::Relaxed);
        }
        self.eval(t)
    }

    /// Exact integral of the interpolant over `[a, b]` (A s), end values held
    /// outside the covered range.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if b < a {
            return -self.integral(b, a);
        }
        if self.is_constant() {
            return self.currents[0] * (b - a);
        }
        let mut knots = vec![a];
        knots.extend(self.times.iter().copied().filter(|&t| t > a && t < b));
        knots.push(b);
        knots
            .windows(2)
            .map(|w| 0.5 * (self.eval(w[0]) + self.eval(w[1])) * (w[1] - w[0]))
            .sum()
    }

    pub fn mean(&self, a: f64, b: f64) -> f64 {
        self.integral(a, b) / (b - a)
    }
}

#[derive(Deserialize)]
struct Row {
    time_s: String,
    current_a: String,
}

/// Reads a two-column CSV with header `time_s,current_a`.
pub fn load_current_profile(path: &Path) -> Result<CurrentProfile> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Parse {
                path: path.to_path_buf(),
                message: format!("{other:?}"),
            },
        })?;
    let parse_err = |message: String| Error::Parse {
        path: path.to_path_buf(),
        message,
    };
    let headers = reader.headers().map_err(|e| parse_err(e.to_string()))?.clone();
    if headers.len() != 2 || &headers[0] != "time_s" || &headers[1] != "current_a" {
        return Err(parse_err(format!(
            "expected header `time_s,current_a`, found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut points = Vec::new();
    for (i, rec) in reader.deserialize::<Row>().enumerate() {
        let line = i + 2;
        let row = rec.map_err(|e| parse_err(format!("line {line}: {e}")))?;
        let num = |s: &str, col: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(format!("line {line}: `{col}` is not a number: `{s}`")))
        };
        points.push((num(&row.time_s, "time_s")?, num(&row.current_a, "current_a")?));
    }
    for i in 1..points.len() {
        if points[i].0 <= points[i - 1].0 {
            return Err(parse_err(format!(
                "line {}: time {} does not increase",
                i + 2,
                points[i].0
            )));
        }
    }
    CurrentProfile::from_points(&points).map_err(|e| parse_err(e.to_string()))
}
