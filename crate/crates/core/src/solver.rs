//! Implicit finite-difference solver for the closed-loop error system
//!
//! ```text
//! h_t = alpha h_xx + D + u,                          0 < x < L
//! h_x(0) = k [(1 - mu1) h(0) - mu2 h_t(0) - mu3 h(m)] - k u1_ext
//! h_x(L) = k [(beta1 - 1) h(L) + beta2 h_t(L) + beta3 h(m)] + k u2_ext
//! ```
//!
//! The boundary conditions are eliminated with ghost nodes, which turns the
//! boundary time derivatives into extra mass on the first and last rows:
//! the semi-discrete system reads `M h' = K h + f` with diagonal `M`.
//! One step of the theta scheme solves
//!
//! ```text
//! (M - theta dt K) h^{n+1} = (M + (1 - theta) dt K) h^n + dt f
//! ```
//!
//! `K` is tridiagonal except for the two midpoint couplings in the boundary
//! rows. Those form a rank-one update `u e_m^T`, so each solve is a Thomas
//! sweep plus a Sherman-Morrison correction with a precomputed vector.
//!
//! `u1_ext`, `u2_ext` carry coolant commands computed outside the matrix
//! (the measured-rate controller path). When the feedback gains are folded
//! into the matrix they are zero.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::control::Gains;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid, PhysicalParams};

/// Conditions above this are treated as numerically singular.
const MAX_CONDITION: f64 = 1e13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    BackwardEuler,
    #[default]
    CrankNicolson,
}

impl Scheme {
    /// Implicitness weight of the theta scheme.
    pub fn theta(self) -> f64 {
        match self {
            Scheme::BackwardEuler => 1.0,
            Scheme::CrankNicolson => 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default)]
    pub scheme: Scheme,
    /// Standard deviation of the additive per-node source noise (K/s).
    #[serde(default)]
    pub process_noise_std: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::CrankNicolson,
            process_noise_std: 0.0,
            rng_seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        crate::grid::non_negative("process_noise_std", self.process_noise_std)
    }
}

/// Sources for one step. Fields are nodal values over the whole grid.
#[derive(Debug, Clone, Copy)]
pub struct StepInputs<'a> {
    /// In-domain heating `u(x, t)` (K/s).
    pub u_field: &'a [f64],
    /// Anomaly `D(x, t)` (K/s).
    pub d_field: &'a [f64],
    /// External coolant commands `(u1, u2)` in error coordinates (K).
    pub coolant_cmd: (f64, f64),
    pub dt: f64,
}

/// One implicit step of the closed-loop system, factorised at assembly.
#[derive(Debug, Clone)]
pub struct LinearStepOperator {
    n: usize,
    mid: usize,
    dt: f64,
    theta: f64,
    scheme: Scheme,
    gains: Gains,
    /// Mass on the first and last rows (interior rows have unit mass).
    mass: [f64; 2],
    k_lower: Vec<f64>,
    k_diag: Vec<f64>,
    k_upper: Vec<f64>,
    /// Coefficient of `h(m)` in the first and last rows of `K`.
    k_mid: [f64; 2],
    /// Coefficient of the external commands in the first and last rows.
    bc_coeff: f64,
    lu_lower: Vec<f64>,
    lu_pivot: Vec<f64>,
    a_upper: Vec<f64>,
    sm_z: Vec<f64>,
    sm_denom: f64,
    condition: f64,
}

/// Builds and factorises the step operator for the given gains.
///
/// Pass [`Gains::zero`] to obtain the plant alone, with the coolant entering
/// only through [`StepInputs::coolant_cmd`].
pub fn assemble_system(
    params: &PhysicalParams,
    gains: &Gains,
    grid: &Grid,
    dt: f64,
    scheme: Scheme,
) -> Result<LinearStepOperator> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::validation("dt", format!("must be positive and finite, got {dt}")));
    }
    params.validate()?;
    gains.validate()?;
    if (grid.length - params.length).abs() > 1e-12 * params.length {
        return Err(Error::validation(
            "grid.length",
            format!("grid length {} differs from module length {}", grid.length, params.length),
        ));
    }

    let n = grid.n_nodes;
    let mid = grid.mid_index;
    let dx = grid.dx;
    let alpha = params.alpha;
    let theta = scheme.theta();
    let diff = alpha / (dx * dx);
    let bc = 2.0 * alpha * params.k_bc / dx;

    let mass = [1.0 - bc * gains.mu2, 1.0 - bc * gains.beta2];
    for (m, name) in mass.iter().zip(["mu2", "beta2"]) {
        if !(*m > 0.0) {
            return Err(Error::numerical(format!(
                "boundary mass coefficient {m} is not positive: rate gain `{name}` makes the boundary condition ill-posed"
            )));
        }
    }

    let mut k_lower = vec![0.0; n];
    let mut k_diag = vec![0.0; n];
    let mut k_upper = vec![0.0; n];
    for i in 1..n - 1 {
        k_lower[i] = diff;
        k_diag[i] = -2.0 * diff;
        k_upper[i] = diff;
    }
    k_diag[0] = -2.0 * diff - bc * (1.0 - gains.mu1);
    k_upper[0] = 2.0 * diff;
    k_diag[n - 1] = -2.0 * diff - bc * (1.0 - gains.beta1);
    k_lower[n - 1] = 2.0 * diff;
    let k_mid = [bc * gains.mu3, bc * gains.beta3];

    let mass_at = |i: usize| match i {
        0 => mass[0],
        i if i == n - 1 => mass[1],
        _ => 1.0,
    };
    let a_lower: Vec<f64> = k_lower.iter().map(|v| -theta * dt * v).collect();
    let a_upper: Vec<f64> = k_upper.iter().map(|v| -theta * dt * v).collect();
    let a_diag: Vec<f64> = (0..n).map(|i| mass_at(i) - theta * dt * k_diag[i]).collect();

    let scale = a_diag.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let mut lu_lower = vec![0.0; n];
    let mut lu_pivot = vec![0.0; n];
    lu_pivot[0] = a_diag[0];
    for i in 1..n {
        if lu_pivot[i - 1].abs() <= 1e-14 * scale {
            return Err(Error::numerical(format!(
                "step matrix is singular: zero pivot in row {}",
                i - 1
            )));
        }
        lu_lower[i] = a_lower[i] / lu_pivot[i - 1];
        lu_pivot[i] = a_diag[i] - lu_lower[i] * a_upper[i - 1];
    }
    if lu_pivot[n - 1].abs() <= 1e-14 * scale {
        return Err(Error::numerical("step matrix is singular: zero pivot in last row"));
    }

    let mut op = LinearStepOperator {
        n,
        mid,
        dt,
        theta,
        scheme,
        gains: *gains,
        mass,
        k_lower,
        k_diag,
        k_upper,
        k_mid,
        bc_coeff: bc,
        lu_lower,
        lu_pivot,
        a_upper,
        sm_z: vec![0.0; n],
        sm_denom: 1.0,
        condition: f64::NAN,
    };

    if k_mid != [0.0, 0.0] {
        let mut u = vec![0.0; n];
        u[0] = -theta * dt * k_mid[0];
        u[n - 1] = -theta * dt * k_mid[1];
        op.thomas(&mut u);
        let denom = 1.0 + u[mid];
        if denom.abs() < 1e-12 {
            return Err(Error::numerical(format!(
                "step matrix is singular: midpoint coupling correction denominator {denom:e}"
            )));
        }
        op.sm_z = u;
        op.sm_denom = denom;
    }

    op.condition = op.estimate_condition();
    if !(op.condition.is_finite() && op.condition < MAX_CONDITION) {
        return Err(Error::numerical(format!(
            "step matrix is numerically singular (condition estimate {:e})",
            op.condition
        )));
    }
    Ok(op)
}

impl LinearStepOperator {
    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// Gains folded into the matrix.
    pub fn gains(&self) -> &Gains {
        &self.gains
    }

    /// One-norm condition estimate `||A||_1 ||A^-1||_1` of the step matrix.
    pub fn condition_estimate(&self) -> f64 {
        self.condition
    }

    fn mass_at(&self, i: usize) -> f64 {
        if i == 0 {
            self.mass[0]
        } else if i == self.n - 1 {
            self.mass[1]
        } else {
            1.0
        }
    }

    /// Entry `(i, j)` of the semi-discrete stiffness matrix `K`.
    pub fn stiffness_entry(&self, i: usize, j: usize) -> f64 {
        assert!(i < self.n && j < self.n, "index out of range");
        let mut v = 0.0;
        if i == j {
            v += self.k_diag[i];
        } else if j + 1 == i {
            v += self.k_lower[i];
        } else if j == i + 1 {
            v += self.k_upper[i];
        }
        if j == self.mid {
            if i == 0 {
                v += self.k_mid[0];
            } else if i == self.n - 1 {
                v += self.k_mid[1];
            }
        }
        v
    }

    /// Entry `(i, j)` of the implicit step matrix `M - theta dt K`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let m = if i == j { self.mass_at(i) } else { 0.0 };
        m - self.theta * self.dt * self.stiffness_entry(i, j)
    }

    /// True when every nonzero entry lies on the three central diagonals.
    pub fn is_tridiagonal(&self) -> bool {
        self.k_mid == [0.0, 0.0]
    }

    fn thomas(&self, r: &mut [f64]) {
        let n = self.n;
        for i in 1..n {
            r[i] -= self.lu_lower[i] * r[i - 1];
        }
        r[n - 1] /= self.lu_pivot[n - 1];
        for i in (0..n - 1).rev() {
            r[i] = (r[i] - self.a_upper[i] * r[i + 1]) / self.lu_pivot[i];
        }
    }

    /// Solves `(M - theta dt K) x = r` in place.
    pub fn solve_in_place(&self, r: &mut [f64]) {
        assert_eq!(r.len(), self.n, "right-hand side length");
        self.thomas(r);
        if !self.is_tridiagonal() {
            let f = r[self.mid] / self.sm_denom;
            for (ri, zi) in r.iter_mut().zip(&self.sm_z) {
                *ri -= f * zi;
            }
        }
    }

    fn estimate_condition(&self) -> f64 {
        let n = self.n;
        let mut a_norm = 0.0_f64;
        for j in 0..n {
            let lo = j.saturating_sub(1);
            let hi = (j + 1).min(n - 1);
            let mut col: f64 = (lo..=hi).map(|i| self.entry(i, j).abs()).sum();
            if j == self.mid {
                col += self.entry(0, j).abs() * f64::from(lo > 0);
                col += self.entry(n - 1, j).abs() * f64::from(hi < n - 1);
            }
            a_norm = a_norm.max(col);
        }
        let mut inv_norm = 0.0_f64;
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            self.solve_in_place(&mut e);
            inv_norm = inv_norm.max(e.iter().map(|v| v.abs()).sum());
        }
        a_norm * inv_norm
    }

    /// `K h` including the midpoint couplings.
    pub fn apply_stiffness(&self, h: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(h.len(), n, "field length");
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut v = self.k_diag[i] * h[i];
            if i > 0 {
                v += self.k_lower[i] * h[i - 1];
            }
            if i + 1 < n {
                v += self.k_upper[i] * h[i + 1];
            }
            out[i] = v;
        }
        out[0] += self.k_mid[0] * h[self.mid];
        out[n - 1] += self.k_mid[1] * h[self.mid];
        out
    }

    /// Semi-discrete time derivative `M^-1 (K h + f)` for a nodal source
    /// and external coolant commands.
    pub fn time_derivative(&self, h: &[f64], source: &[f64], cmd: (f64, f64)) -> Vec<f64> {
        let n = self.n;
        assert_eq!(source.len(), n, "source length");
        let mut out = self.apply_stiffness(h);
        for (o, s) in out.iter_mut().zip(source) {
            *o += s;
        }
        out[0] += self.bc_coeff * cmd.0;
        out[n - 1] += self.bc_coeff * cmd.1;
        out[0] /= self.mass[0];
        out[n - 1] /= self.mass[1];
        out
    }
}

/// Advances `h` by one step.
///
/// The source is `u + D` plus, when configured, independent Gaussian noise
/// with standard deviation `cfg.process_noise_std` at every node.
pub fn step<R: Rng + ?Sized>(
    op: &LinearStepOperator,
    h: &Field,
    inp: &StepInputs<'_>,
    cfg: &SolverConfig,
    rng: &mut R,
) -> Result<Field> {
    let n = op.n;
    if h.len() != n || inp.u_field.len() != n || inp.d_field.len() != n {
        return Err(Error::validation(
            "field",
            format!(
                "size mismatch: operator has {n} nodes, got h={}, u={}, D={}",
                h.len(),
                inp.u_field.len(),
                inp.d_field.len()
            ),
        ));
    }
    if (inp.dt - op.dt).abs() > 1e-12 * op.dt {
        return Err(Error::validation(
            "dt",
            format!("step inputs use dt={} but the operator was assembled for dt={}", inp.dt, op.dt),
        ));
    }

    let dt = op.dt;
    let explicit = 1.0 - op.theta;
    let kh = if explicit > 0.0 {
        op.apply_stiffness(&h.values)
    } else {
        vec![0.0; n]
    };
    let noise = if cfg.process_noise_std > 0.0 {
        Some(Normal::new(0.0, cfg.process_noise_std).map_err(|e| Error::validation("process_noise_std", e.to_string()))?)
    } else {
        None
    };

    let mut rhs = Vec::with_capacity(n);
    for (i, k) in kh.iter().enumerate() {
        let mut f = inp.u_field[i] + inp.d_field[i];
        if let Some(dist) = &noise {
            f += dist.sample(rng);
        }
        rhs.push(op.mass_at(i) * h.values[i] + explicit * dt * k + dt * f);
    }
    rhs[0] += dt * op.bc_coeff * inp.coolant_cmd.0;
    rhs[n - 1] += dt * op.bc_coeff * inp.coolant_cmd.1;

    op.solve_in_place(&mut rhs);
    let t_next = h.time + dt;
    if let Some(i) = rhs.iter().position(|v| !v.is_finite()) {
        return Err(Error::numerical(format!("non-finite temperature at node {i}")).at_time(t_next));
    }
    Ok(Field {
        values: rhs,
        time: t_next,
    })
}
