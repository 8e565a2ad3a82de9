//! Grid-refinement studies against closed-form solutions of the insulated
//! heat equation.
//!
//! * `cosine`: `h0 = cos(pi x)`, `alpha = L = 1`, exact `e^{-pi^2 t} cos(pi x)`.
//!   Spatial refinement halves `dx` and quarters `dt`, so the error ratio
//!   between levels approaches 4. The temporal study fixes the grid and
//!   compares against the semi-discrete solution `e^{lambda_h t} cos(pi x)`,
//!   which isolates the time-stepping error.
//! * `uniform`: `h0 = 0` with a constant source `q`; exact `q t` at every node.

use std::fmt;
use std::str::FromStr;

use rand::rngs::mock::StepRng;
use serde::Serialize;

use crate::control::Gains;
use crate::error::{Error, Result};
use crate::grid::{build_grid, Field, Grid, PhysicalParams};
use crate::solver::{assemble_system, step, Scheme, SolverConfig, StepInputs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvergenceCase {
    Cosine,
    Uniform,
}

impl FromStr for ConvergenceCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Self::Cosine),
            "uniform" => Ok(Self::Uniform),
            other => Err(Error::validation("case", format!("unknown case `{other}` (expected cosine or uniform)"))),
        }
    }
}

impl fmt::Display for ConvergenceCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Cosine => "cosine",
            Self::Uniform => "uniform",
        })
    }
}

pub const COSINE_END_TIME: f64 = 0.1;
pub const UNIFORM_SOURCE: f64 = 0.25;
pub const UNIFORM_END_TIME: f64 = 2.0;
pub const MAX_LEVELS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceLevel {
    pub level: usize,
    pub n_nodes: usize,
    pub dx: f64,
    pub dt: f64,
    pub steps: usize,
    /// Max-norm error relative to the max-norm of the exact solution.
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub case: ConvergenceCase,
    pub study: &'static str,
    pub scheme: Scheme,
    pub levels: Vec<ConvergenceLevel>,
    /// `error[j] / error[j + 1]`.
    pub ratios: Vec<f64>,
    /// `log2` of the ratios.
    pub observed_orders: Vec<f64>,
}

fn insulated(alpha: f64) -> PhysicalParams {
    PhysicalParams {
        alpha,
        k_bc: 0.0,
        length: 1.0,
        heat_scale: 0.0,
        ..PhysicalParams::battery_default()
    }
}

/// Integrates `h' = alpha h_xx + source` with insulated ends up to `t_end`.
fn integrate(
    p: &PhysicalParams,
    g: &Grid,
    h0: Field,
    source: &[f64],
    dt: f64,
    steps: usize,
    scheme: Scheme,
) -> Result<Field> {
    let op = assemble_system(p, &Gains::zero(), g, dt, scheme)?;
    let cfg = SolverConfig {
        scheme,
        process_noise_std: 0.0,
        rng_seed: 0,
    };
    let mut rng = StepRng::new(0, 0);
    let zeros = vec![0.0; g.n_nodes];
    let inputs = StepInputs {
        u_field: source,
        d_field: &zeros,
        coolant_cmd: (0.0, 0.0),
        dt,
    };
    let mut h = h0;
    for _ in 0..steps {
        h = step(&op, &h, &inputs, &cfg, &mut rng)?;
    }
    Ok(h)
}

fn relative_max_error(h: &Field, exact: &[f64]) -> f64 {
    let scale = exact.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let err = h.values.iter().zip(exact).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    if scale > 0.0 {
        err / scale
    } else {
        err
    }
}

fn steps_for(t_end: f64, dt: f64) -> usize {
    (t_end / dt).round() as usize
}

/// Relative max-norm error of the cosine case at `t_end`.
pub fn cosine_error(n_nodes: usize, dt: f64, t_end: f64, scheme: Scheme) -> Result<f64> {
    let p = insulated(1.0);
    let g = build_grid(1.0, n_nodes)?;
    let pi = std::f64::consts::PI;
    let steps = steps_for(t_end, dt);
    let h0 = Field::from_fn(&g, 0.0, |x| (pi * x).cos());
    let h = integrate(&p, &g, h0, &vec![0.0; n_nodes], dt, steps, scheme)?;
    let decay = (-pi * pi * steps as f64 * dt).exp();
    let exact: Vec<f64> = g.nodes().map(|x| decay * (pi * x).cos()).collect();
    Ok(relative_max_error(&h, &exact))
}

fn finish(case: ConvergenceCase, study: &'static str, scheme: Scheme, levels: Vec<ConvergenceLevel>) -> ConvergenceReport {
    let ratios: Vec<f64> = levels.windows(2).map(|w| w[0].error / w[1].error).collect();
    let observed_orders = ratios.iter().map(|r| r.log2()).collect();
    ConvergenceReport {
        case,
        study,
        scheme,
        levels,
        ratios,
        observed_orders,
    }
}

fn check_levels(levels: usize) -> Result<()> {
    if !(2..=MAX_LEVELS).contains(&levels) {
        return Err(Error::validation("levels", format!("must be between 2 and {MAX_LEVELS}, got {levels}")));
    }
    Ok(())
}

/// Cosine case with `N = 20 * 2^j + 1` and `dt = 2.5e-3 / 4^j`.
pub fn cosine_spatial(levels: usize, scheme: Scheme) -> Result<ConvergenceReport> {
    check_levels(levels)?;
    let mut out = Vec::with_capacity(levels);
    for j in 0..levels {
        let n = 20 * (1 << j) + 1;
        let dt = 2.5e-3 / 4f64.powi(j as i32);
        out.push(ConvergenceLevel {
            level: j,
            n_nodes: n,
            dx: 1.0 / (n - 1) as f64,
            dt,
            steps: steps_for(COSINE_END_TIME, dt),
            error: cosine_error(n, dt, COSINE_END_TIME, scheme)?,
        });
    }
    Ok(finish(ConvergenceCase::Cosine, "spatial", scheme, out))
}

/// Temporal refinement on a fixed 41-node grid, `dt = 0.01 / 2^j`, measured
/// against the exact solution of the semi-discrete system.
pub fn cosine_temporal(levels: usize, scheme: Scheme) -> Result<ConvergenceReport> {
    check_levels(levels)?;
    let n = 41;
    let p = insulated(1.0);
    let g = build_grid(1.0, n)?;
    let pi = std::f64::consts::PI;
    let lambda = -2.0 / (g.dx * g.dx) * (1.0 - (pi * g.dx).cos());
    let exact: Vec<f64> = g.nodes().map(|x| (lambda * COSINE_END_TIME).exp() * (pi * x).cos()).collect();
    let mut out = Vec::with_capacity(levels);
    for j in 0..levels {
        let dt = 0.01 / 2f64.powi(j as i32);
        let steps = steps_for(COSINE_END_TIME, dt);
        let h0 = Field::from_fn(&g, 0.0, |x| (pi * x).cos());
        let h = integrate(&p, &g, h0, &vec![0.0; n], dt, steps, scheme)?;
        out.push(ConvergenceLevel {
            level: j,
            n_nodes: n,
            dx: g.dx,
            dt,
            steps,
            error: relative_max_error(&h, &exact),
        });
    }
    Ok(finish(ConvergenceCase::Cosine, "temporal", scheme, out))
}

/// Uniform heating with the same refinement path as the spatial cosine study.
/// The error stays at rounding level on every grid.
pub fn uniform_study(levels: usize, scheme: Scheme) -> Result<ConvergenceReport> {
    check_levels(levels)?;
    let p = insulated(1.0);
    let mut out = Vec::with_capacity(levels);
    for j in 0..levels {
        let n = 20 * (1 << j) + 1;
        let dt = 0.1 / 2f64.powi(j as i32);
        let g = build_grid(1.0, n)?;
        let steps = steps_for(UNIFORM_END_TIME, dt);
        let h = integrate(&p, &g, Field::zeros(&g, 0.0), &vec![UNIFORM_SOURCE; n], dt, steps, scheme)?;
        let exact = vec![UNIFORM_SOURCE * steps as f64 * dt; n];
        out.push(ConvergenceLevel {
            level: j,
            n_nodes: n,
            dx: g.dx,
            dt,
            steps,
            error: relative_max_error(&h, &exact),
        });
    }
    Ok(finish(ConvergenceCase::Uniform, "uniform", scheme, out))
}

pub fn run_convergence(case: ConvergenceCase, levels: usize, scheme: Scheme) -> Result<Vec<ConvergenceReport>> {
    match case {
        ConvergenceCase::Cosine => Ok(vec![cosine_spatial(levels, scheme)?, cosine_temporal(levels, scheme)?]),
        ConvergenceCase::Uniform => Ok(vec![uniform_study(levels, scheme)?]),
    }
}
