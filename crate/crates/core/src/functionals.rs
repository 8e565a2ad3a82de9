//! Safety and stability functionals and the trajectory monitors built on them.
//!
//! * energy `E(h) = int (h^2 + h_x^2) dx + h(m)^2`, which bounds `max |h|^2`
//!   (modified Agmon inequality);
//! * barrier `B(h) = E(h) - h_max^2`, negative on the safe set;
//! * distance to the unsafe set `sqrt(max(0, -B))`;
//! * Lyapunov functional `V(h) = (int h^2 dx + beta4 h(0)^2 + beta5 h(L)^2) / 2`.
//!
//! The monitors evaluate the differential inequalities
//!
//! ```text
//! dB/dt <= -c3 dist^2 + c4 |D|^2 + c5 |u|^2 + kappa
//! dV/dt <= -d3 V + d4 |D|^2 + d5 |u|^2
//! ```
//!
//! with central-difference time derivatives, both with instantaneous spatial
//! L2 input norms and with their running suprema.

use serde::{Deserialize, Serialize};

use crate::certify::Certificate;
use crate::grid::{s_norm_sq, spatial_gradient, trapezoid, trapezoid_map, Field, Grid, PhysicalParams};
use crate::simulate::Trajectory;

/// Most violations stored per inequality; the total is always counted.
pub const MAX_RECORDED_VIOLATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorTolerance {
    pub relative: f64,
    /// K^2/s
    pub absolute: f64,
}

impl Default for MonitorTolerance {
    fn default() -> Self {
        Self {
            relative: 1e-2,
            absolute: 1e-6,
        }
    }
}

impl MonitorTolerance {
    /// `lhs <= rhs` up to tolerance.
    pub fn holds(&self, lhs: f64, rhs: f64) -> bool {
        lhs <= rhs + self.relative * rhs.abs() + self.absolute
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSample {
    pub time: f64,
    pub energy: f64,
    pub barrier: f64,
    pub dist_unsafe: f64,
    pub agmon_bound: f64,
    pub lyapunov: f64,
    pub s_norm_sq: f64,
    pub max_abs: f64,
    /// True when the Lyapunov weights were zeroed because the run carries no
    /// stability classification.
    pub zero_weights: bool,
}

pub fn energy(h: &Field, g: &Grid) -> f64 {
    h.check_len(g);
    let grad = spatial_gradient(h, g);
    let integrand: Vec<f64> = h
        .values
        .iter()
        .zip(&grad.values)
        .map(|(v, d)| v * v + d * d)
        .collect();
    trapezoid(&integrand, g.dx) + h.at_mid(g).powi(2)
}

pub fn lyapunov_value(h: &Field, g: &Grid, beta4: f64, beta5: f64) -> f64 {
    h.check_len(g);
    0.5 * (trapezoid_map(&h.values, g.dx, |v| v * v) + beta4 * h.first().powi(2) + beta5 * h.last().powi(2))
}

/// Functionals with explicit Lyapunov weights.
pub fn eval_functionals_weighted(
    h: &Field,
    g: &Grid,
    h_max: f64,
    beta4: f64,
    beta5: f64,
    zero_weights: bool,
) -> FunctionalSample {
    let e = energy(h, g);
    let b = e - h_max * h_max;
    FunctionalSample {
        time: h.time,
        energy: e,
        barrier: b,
        dist_unsafe: (-b).max(0.0).sqrt(),
        agmon_bound: e.sqrt(),
        lyapunov: lyapunov_value(h, g, beta4, beta5),
        s_norm_sq: s_norm_sq(h, g),
        max_abs: h.max_abs(),
        zero_weights,
    }
}

/// Functionals with the Lyapunov weights taken from the certificate.
pub fn eval_functionals(h: &Field, g: &Grid, p: &PhysicalParams, cert: &Certificate) -> FunctionalSample {
    let (b4, b5, certified) = cert.lyapunov_weights();
    eval_functionals_weighted(h, g, p.h_max, b4, b5, !certified)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgmonCheck {
    pub max_abs: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Checks `max |h|^2 <= E(h)`.
pub fn agmon_check(h: &Field, g: &Grid) -> AgmonCheck {
    let e = energy(h, g);
    let max_abs = h.max_abs();
    AgmonCheck {
        max_abs,
        bound: e.sqrt(),
        holds: max_abs * max_abs <= e * (1.0 + 1e-12) + 1e-300,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub time: f64,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub monitorable: bool,
    pub note: Option<String>,
    pub checked: usize,
    pub satisfied: usize,
    /// With instantaneous input norms.
    pub fraction_satisfied: Option<f64>,
    /// With running suprema of the input norms.
    pub fraction_satisfied_running_sup: Option<f64>,
    pub violation_count: usize,
    /// The first violations (instantaneous norms), capped.
    pub violations: Vec<Violation>,
}

impl InequalityReport {
    fn not_monitorable(note: String) -> Self {
        Self {
            monitorable: false,
            note: Some(note),
            checked: 0,
            satisfied: 0,
            fraction_satisfied: None,
            fraction_satisfied_running_sup: None,
            violation_count: 0,
            violations: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorReport {
    pub tolerance: MonitorTolerance,
    pub condition2: InequalityReport,
    pub vcond2: InequalityReport,
}

/// Time series needed by the monitors.
#[derive(Debug, Clone, Copy)]
pub struct MonitorSeries<'a> {
    pub times: &'a [f64],
    pub samples: &'a [FunctionalSample],
    pub norm_d: &'a [f64],
    pub norm_u: &'a [f64],
}

fn running_sup(v: &[f64]) -> Vec<f64> {
    let mut acc = 0.0_f64;
    v.iter()
        .map(|x| {
            acc = acc.max(*x);
            acc
        })
        .collect()
}

fn positive_constants(named: &[(&str, Option<f64>)]) -> Result<Vec<f64>, String> {
    let mut missing = Vec::new();
    let mut out = Vec::new();
    for (name, v) in named {
        match v {
            Some(x) if *x > 0.0 && x.is_finite() => out.push(*x),
            Some(x) => missing.push(format!("{name} = {x} is not positive")),
            None => missing.push(format!("{name} missing")),
        }
    }
    if missing.is_empty() {
        Ok(out)
    } else {
        Err(missing.join(", "))
    }
}

fn check_inequality(
    series: &MonitorSeries<'_>,
    lhs_of: impl Fn(usize) -> f64,
    rhs_of: impl Fn(usize, f64, f64) -> f64,
    tol: &MonitorTolerance,
) -> InequalityReport {
    let n = series.times.len();
    if n < 3 {
        return InequalityReport::not_monitorable("fewer than three samples".to_string());
    }
    let sup_d = running_sup(series.norm_d);
    let sup_u = running_sup(series.norm_u);
    let mut satisfied = 0;
    let mut satisfied_sup = 0;
    let mut violations = Vec::new();
    let mut count = 0;
    for i in 1..n - 1 {
        let lhs = lhs_of(i);
        let rhs = rhs_of(i, series.norm_d[i], series.norm_u[i]);
        if tol.holds(lhs, rhs) {
            satisfied += 1;
        } else {
            count += 1;
            if violations.len() < MAX_RECORDED_VIOLATIONS {
                violations.push(Violation {
                    time: series.times[i],
                    lhs,
                    rhs,
                });
            }
        }
        if tol.holds(lhs, rhs_of(i, sup_d[i], sup_u[i])) {
            satisfied_sup += 1;
        }
    }
    let checked = n - 2;
    InequalityReport {
        monitorable: true,
        note: None,
        checked,
        satisfied,
        fraction_satisfied: Some(satisfied as f64 / checked as f64),
        fraction_satisfied_running_sup: Some(satisfied_sup as f64 / checked as f64),
        violation_count: count,
        violations,
    }
}

fn central_difference(series: &MonitorSeries<'_>, i: usize, f: impl Fn(&FunctionalSample) -> f64) -> f64 {
    (f(&series.samples[i + 1]) - f(&series.samples[i - 1])) / (series.times[i + 1] - series.times[i - 1])
}

/// Checks both differential inequalities along a recorded series.
pub fn monitor_series(series: &MonitorSeries<'_>, cert: &Certificate, tol: &MonitorTolerance) -> MonitorReport {
    let n = series.times.len();
    assert!(
        series.samples.len() == n && series.norm_d.len() == n && series.norm_u.len() == n,
        "monitor series lengths differ"
    );

    let condition2 = match positive_constants(&[
        ("c3", cert.c3),
        ("c4", cert.c4),
        ("c5", cert.c5),
        ("kappa", cert.kappa),
    ]) {
        Err(note) => InequalityReport::not_monitorable(note),
        Ok(c) => {
            let (c3, c4, c5, kappa) = (c[0], c[1], c[2], c[3]);
            check_inequality(
                series,
                |i| central_difference(series, i, |s| s.barrier),
                |i, d, u| -c3 * series.samples[i].dist_unsafe.powi(2) + c4 * d * d + c5 * u * u + kappa,
                tol,
            )
        }
    };

    let weights_ok = series.samples.iter().all(|s| !s.zero_weights);
    let vcond2 = if !weights_ok {
        InequalityReport::not_monitorable("Lyapunov weights were zeroed for this run".to_string())
    } else {
        match positive_constants(&[("d3", cert.d3), ("d4", cert.d4), ("d5", cert.d5)]) {
            Err(note) => InequalityReport::not_monitorable(note),
            Ok(c) => {
                let (d3, d4, d5) = (c[0], c[1], c[2]);
                check_inequality(
                    series,
                    |i| central_difference(series, i, |s| s.lyapunov),
                    |i, d, u| -d3 * series.samples[i].lyapunov + d4 * d * d + d5 * u * u,
                    tol,
                )
            }
        }
    };

    MonitorReport {
        tolerance: *tol,
        condition2,
        vcond2,
    }
}

pub fn monitor_trajectory(traj: &Trajectory, cert: &Certificate, tol: &MonitorTolerance) -> MonitorReport {
    monitor_series(
        &MonitorSeries {
            times: &traj.times,
            samples: &traj.functionals,
            norm_d: &traj.anomaly_l2,
            norm_u: &traj.input_l2,
        },
        cert,
        tol,
    )
}

/// User-supplied constants of the trajectory-level safety bound
/// (`k_bar`, seven values) and stability bound (`k_tilde`, eight values).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundConstants {
    pub k_bar: [f64; 7],
    pub k_tilde: [f64; 8],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundStep {
    pub time: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSeries {
    pub steps: Vec<BoundStep>,
    pub fraction_satisfied: f64,
}

impl BoundSeries {
    fn from_steps(steps: Vec<BoundStep>) -> Self {
        let ok = steps.iter().filter(|s| s.satisfied).count();
        let fraction = if steps.is_empty() { 1.0 } else { ok as f64 / steps.len() as f64 };
        Self {
            steps,
            fraction_satisfied: fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheckReport {
    /// `dist^2 >= k1 dist0^2 - k2 e^{k3 t} |u|^2 - k4 e^{k5 t} |D|^2 - k6 e^{k7 t}`
    pub pissf: BoundSeries,
    /// `|h|_S^2 <= k1 e^{-k2 t} |h0|_S^2 - k3 e^{-k4 t} |u|^2 - k5 e^{-k6 t} |D|^2 - k7 e^{-k8 t}`
    pub isst: BoundSeries,
}

/// Evaluates both trajectory bounds at every sample exactly as written,
/// input-term signs included. Input norms are the running supremum of the
/// spatial L2 norm up to each sample, squared. Time is measured from the
/// first sample.
pub fn trajectory_bound_check(series: &MonitorSeries<'_>, k: &BoundConstants) -> BoundCheckReport {
    let n = series.times.len();
    let sup_d = running_sup(series.norm_d);
    let sup_u = running_sup(series.norm_u);
    let (t0, dist0, s0) = match series.samples.first() {
        Some(s) => (series.times[0], s.dist_unsafe, s.s_norm_sq),
        None => {
            return BoundCheckReport {
                pissf: BoundSeries::from_steps(Vec::new()),
                isst: BoundSeries::from_steps(Vec::new()),
            }
        }
    };
    let kb = &k.k_bar;
    let kt = &k.k_tilde;
    let mut pissf = Vec::with_capacity(n);
    let mut isst = Vec::with_capacity(n);
    for i in 0..n {
        let t = series.times[i] - t0;
        let (u2, d2) = (sup_u[i].powi(2), sup_d[i].powi(2));
        let s = &series.samples[i];

        let lhs = s.dist_unsafe.powi(2);
        let rhs = kb[0] * dist0 * dist0
            - kb[1] * (kb[2] * t).exp() * u2
            - kb[3] * (kb[4] * t).exp() * d2
            - kb[5] * (kb[6] * t).exp();
        pissf.push(BoundStep {
            time: series.times[i],
            lhs,
            rhs,
            satisfied: lhs >= rhs - 1e-12 * rhs.abs(),
        });

        let lhs = s.s_norm_sq;
        let rhs = kt[0] * (-kt[1] * t).exp() * s0
            - kt[2] * (-kt[3] * t).exp() * u2
            - kt[4] * (-kt[5] * t).exp() * d2
            - kt[6] * (-kt[7] * t).exp();
        isst.push(BoundStep {
            time: series.times[i],
            lhs,
            rhs,
            satisfied: lhs <= rhs + 1e-12 * rhs.abs(),
        });
    }
    BoundCheckReport {
        pissf: BoundSeries::from_steps(pissf),
        isst: BoundSeries::from_steps(isst),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissipationReport {
    pub initial: f64,
    pub final_value: f64,
    pub ratio: f64,
    /// Largest central-difference rate over the run.
    pub max_rate: f64,
    pub increasing_samples: usize,
    pub non_increasing: bool,
    pub required_ratio: f64,
    pub passed: bool,
}

/// Checks that a sampled functional never increases (central differences
/// against zero under `tol`) and ends below `required_ratio` of its start.
pub fn dissipation_check(
    values: &[f64],
    dt: f64,
    tol: &MonitorTolerance,
    required_ratio: f64,
) -> DissipationReport {
    let mut max_rate = f64::NEG_INFINITY;
    let mut increasing = 0;
    for w in values.windows(3) {
        let rate = (w[2] - w[0]) / (2.0 * dt);
        max_rate = max_rate.max(rate);
        if !tol.holds(rate, 0.0) {
            increasing += 1;
        }
    }
    let initial = values.first().copied().unwrap_or(0.0);
    let final_value = values.last().copied().unwrap_or(0.0);
    let ratio = if initial > 0.0 { final_value / initial } else { f64::NAN };
    let non_increasing = increasing == 0 && values.len() >= 3 && values.iter().all(|v| v.is_finite());
    DissipationReport {
        initial,
        final_value,
        ratio,
        max_rate,
        increasing_samples: increasing,
        non_increasing,
        required_ratio,
        passed: non_increasing && ratio < required_ratio,
    }
}
