//! Domain types shared by every other module: physical parameters, the
//! uniform spatial grid, temperature-error fields and the spatial norms used
//! by the safety and stability functionals.
//!
//! Units are carried in documentation only. All spatial integrals use the
//! trapezoidal rule, which is second order and matches the difference
//! scheme used by the solver.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physics of the battery-module thermal model in error coordinates.
///
/// `alpha` is the thermal diffusivity `k_b / (rho_b c_p,b)`. Some texts call
/// it the "thermal conductivity"; it is used here strictly as a diffusivity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalParams {
    /// Thermal diffusivity (m²/s).
    pub alpha: f64,
    /// Coolant convection coefficient `eta / k_b` (1/m). Zero is the insulated limit.
    pub k_bc: f64,
    /// Module length L (m).
    pub length: f64,
    /// Maps squared current to a volumetric heating rate, `R / (rho_b c_p,b V_b)` (K/(s·A²)).
    pub heat_scale: f64,
    /// Set-point temperature T_d (K).
    pub t_desired: f64,
    /// Safety threshold on |T - T_d| (K).
    pub h_max: f64,
}

impl PhysicalParams {
    pub fn new(
        alpha: f64,
        k_bc: f64,
        length: f64,
        heat_scale: f64,
        t_desired: f64,
        h_max: f64,
    ) -> Result<Self> {
        let p = Self {
            alpha,
            k_bc,
            length,
            heat_scale,
            t_desired,
            h_max,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        positive("alpha", self.alpha)?;
        non_negative("k_bc", self.k_bc)?;
        positive("length", self.length)?;
        non_negative("heat_scale", self.heat_scale)?;
        if !self.t_desired.is_finite() {
            return Err(Error::validation("t_desired", "must be finite"));
        }
        positive("h_max", self.h_max)
    }

    /// Calibrated battery-module defaults used by the shipped scenarios.
    pub fn battery_default() -> Self {
        Self {
            alpha: 4.0e-3,
            k_bc: 2.0,
            length: 1.0,
            heat_scale: 1.8e-6,
            t_desired: 298.0,
            h_max: 15.0,
        }
    }
}

pub(crate) fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::validation(field, format!("must be finite and > 0, got {v}")))
    }
}

pub(crate) fn non_negative(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::validation(field, format!("must be finite and >= 0, got {v}")))
    }
}

/// Uniform grid on `[0, L]` with an odd node count so a node sits exactly at
/// the midpoint sensor location `m = L/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid {
    pub length: f64,
    pub n_nodes: usize,
    pub dx: f64,
    pub mid_index: usize,
}

impl Grid {
    pub const MIN_NODES: usize = 5;

    pub fn x(&self, i: usize) -> f64 {
        if i + 1 == self.n_nodes {
            self.length
        } else {
            i as f64 * self.dx
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_nodes).map(|i| self.x(i))
    }

    pub fn last(&self) -> usize {
        self.n_nodes - 1
    }
}

/// Builds the uniform grid; rejects even or too-small node counts.
pub fn build_grid(length: f64, n_nodes: usize) -> Result<Grid> {
    positive("length", length)?;
    if n_nodes < Grid::MIN_NODES {
        return Err(Error::validation(
            "n_nodes",
            format!("need at least {} nodes, got {n_nodes}", Grid::MIN_NODES),
        ));
    }
    if n_nodes.is_multiple_of(2) {
        return Err(Error::validation(
            "n_nodes",
            format!("must be odd so a node lies at the midpoint, got {n_nodes}"),
        ));
    }
    Ok(Grid {
        length,
        n_nodes,
        dx: length / (n_nodes - 1) as f64,
        mid_index: (n_nodes - 1) / 2,
    })
}

/// Temperature-error profile `h(x_i, t)` in K.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub values: Vec<f64>,
    pub time: f64,
}

impl Field {
    pub fn new(values: Vec<f64>, time: f64) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::numerical(format!(
                "field value at node {i} is not finite ({})",
                values[i]
            ))
            .at_time(time));
        }
        Ok(Self { values, time })
    }

    pub fn zeros(grid: &Grid, time: f64) -> Self {
        Self {
            values: vec![0.0; grid.n_nodes],
            time,
        }
    }

    pub fn constant(grid: &Grid, value: f64, time: f64) -> Self {
        Self {
            values: vec![value; grid.n_nodes],
            time,
        }
    }

    pub fn from_fn(grid: &Grid, time: f64, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: grid.nodes().map(f).collect(),
            time,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn first(&self) -> f64 {
        self.values[0]
    }

    pub fn last(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn at_mid(&self, grid: &Grid) -> f64 {
        self.values[grid.mid_index]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| c * v).collect(),
            time: self.time,
        }
    }

    pub(crate) fn check_len(&self, grid: &Grid) {
        assert_eq!(
            self.values.len(),
            grid.n_nodes,
            "field has {} values but the grid has {} nodes",
            self.values.len(),
            grid.n_nodes
        );
    }
}

/// Trapezoidal rule for node values on a uniform grid.
pub fn trapezoid(values: &[f64], dx: f64) -> f64 {
    match values {
        [] | [_] => 0.0,
        [first, inner @ .., last] => dx * (0.5 * (first + last) + inner.iter().sum::<f64>()),
    }
}

/// Trapezoidal rule applied to `f(v_i)`.
pub fn trapezoid_map(values: &[f64], dx: f64, f: impl Fn(f64) -> f64) -> f64 {
    match values {
        [] | [_] => 0.0,
        [first, inner @ .., last] => {
            dx * (0.5 * (f(*first) + f(*last)) + inner.iter().map(|v| f(*v)).sum::<f64>())
        }
    }
}

/// `sqrt(∫ f² dx)` (K·m^½).
pub fn l2_norm(f: &Field, grid: &Grid) -> f64 {
    f.check_len(grid);
    trapezoid_map(&f.values, grid.dx, |v| v * v).sqrt()
}

/// Squared mixed norm `∫ f² dx + f(0)² + f(L)²`.
pub fn s_norm_sq(f: &Field, grid: &Grid) -> f64 {
    f.check_len(grid);
    trapezoid_map(&f.values, grid.dx, |v| v * v) + f.first().powi(2) + f.last().powi(2)
}

/// Mixed norm `sqrt(∫ f² dx + f(0)² + f(L)²)` used by the stability criterion.
pub fn s_norm(f: &Field, grid: &Grid) -> f64 {
    s_norm_sq(f, grid).sqrt()
}

/// Second-order finite-difference gradient: central in the interior,
/// one-sided three-point stencils at the ends. Exact on quadratics.
pub fn spatial_gradient(f: &Field, grid: &Grid) -> Field {
    f.check_len(grid);
    let v = &f.values;
    let n = v.len();
    assert!(n >= 3, "spatial_gradient needs at least three nodes");
    let inv2dx = 1.0 / (2.0 * grid.dx);
    let mut g = Vec::with_capacity(n);
    g.push((-3.0 * v[0] + 4.0 * v[1] - v[2]) * inv2dx);
    g.extend(v.windows(3).map(|w| (w[2] - w[0]) * inv2dx));
    g.push((3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) * inv2dx);
    Field {
        values: g,
        time: f.time,
    }
}
