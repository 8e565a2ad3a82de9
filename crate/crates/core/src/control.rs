//! Boundary coolant controllers: open loop (OC), stability-only (St-C) and
//! stability-and-safety (StSf-C), together with the sensor model that feeds
//! them.
//!
//! The feedback laws act in error coordinates:
//!
//! ```text
//! u1 = mu1 h(0) + mu2 h_t(0) + mu3 h(m)
//! u2 = beta1 h(L) + beta2 h_t(L) + beta3 h(m)
//! ```
//!
//! and the physical coolant temperature is `T_c = T_d + u`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, PhysicalParams};

/// Boundary control gains. `mu*` act on the coolant at x = 0, `beta*` at x = L.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gains {
    pub mu1: f64,
    /// Rate gain at x = 0 (s).
    pub mu2: f64,
    pub mu3: f64,
    pub beta1: f64,
    /// Rate gain at x = L (s).
    pub beta2: f64,
    pub beta3: f64,
}

impl Gains {
    pub const fn zero() -> Self {
        Self::symmetric(0.0, 0.0, 0.0)
    }

    /// Same gains on both boundaries.
    pub const fn symmetric(g1: f64, g2: f64, g3: f64) -> Self {
        Self {
            mu1: g1,
            mu2: g2,
            mu3: g3,
            beta1: g1,
            beta2: g2,
            beta3: g3,
        }
    }

    /// Shipped stability-and-safety gains (certified for the default battery).
    pub const fn stsfc_default() -> Self {
        Self::symmetric(-1.0, -0.5, -0.7)
    }

    /// Shipped stability-only gains. The midpoint gain is positive on purpose,
    /// so these fail the safety gain clauses while still dissipating.
    pub const fn stc_default() -> Self {
        Self::symmetric(-0.3, -0.5, 0.3)
    }

    pub fn as_array(&self) -> [f64; 6] {
        [
            self.mu1, self.mu2, self.mu3, self.beta1, self.beta2, self.beta3,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let names = ["mu1", "mu2", "mu3", "beta1", "beta2", "beta3"];
        for (name, v) in names.iter().zip(self.as_array()) {
            if !v.is_finite() {
                return Err(Error::validation(*name, format!("gain must be finite, got {v}")));
            }
        }
        Ok(())
    }
}

/// Which of the three compared strategies is running.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ControllerVariant {
    #[serde(rename = "oc")]
    OpenLoop,
    #[serde(rename = "stc")]
    StabilityOnly,
    #[serde(rename = "stsfc")]
    StabilityAndSafety,
}

impl ControllerVariant {
    pub const ALL: [ControllerVariant; 3] = [
        ControllerVariant::OpenLoop,
        ControllerVariant::StabilityOnly,
        ControllerVariant::StabilityAndSafety,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ControllerVariant::OpenLoop => "oc",
            ControllerVariant::StabilityOnly => "stc",
            ControllerVariant::StabilityAndSafety => "stsfc",
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ControllerVariant::OpenLoop => "OC",
            ControllerVariant::StabilityOnly => "St-C",
            ControllerVariant::StabilityAndSafety => "StSf-C",
        }
    }
}

impl fmt::Display for ControllerVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ControllerVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "oc" | "openloop" => Ok(ControllerVariant::OpenLoop),
            "stc" | "stabilityonly" => Ok(ControllerVariant::StabilityOnly),
            "stsfc" | "stabilityandsafety" => Ok(ControllerVariant::StabilityAndSafety),
            _ => Err(Error::validation(
                "controller",
                format!("unknown controller `{s}` (expected oc, stc or stsfc)"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerKind {
    pub variant: ControllerVariant,
    /// Ignored for open loop.
    pub gains: Gains,
}

impl ControllerKind {
    pub fn open_loop() -> Self {
        Self {
            variant: ControllerVariant::OpenLoop,
            gains: Gains::zero(),
        }
    }

    pub fn new(variant: ControllerVariant, gains: Gains) -> Self {
        Self { variant, gains }
    }

    /// Gains actually applied: zero for open loop.
    pub fn effective_gains(&self) -> Gains {
        match self.variant {
            ControllerVariant::OpenLoop => Gains::zero(),
            _ => self.gains,
        }
    }
}

/// How the controller obtains the boundary rates `h_t(0)`, `h_t(L)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateMode {
    /// Noisy sensor samples, backward-differenced and low-pass filtered.
    Measured,
    /// Feedback folded into the implicit step (dynamic boundary condition);
    /// the closed-loop boundary conditions hold exactly at the discrete level.
    #[default]
    Exact,
}

/// Sensor readings at x = 0, m, L in error coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Measurements {
    pub y0: f64,
    pub ym: f64,
    pub y_l: f64,
    /// Filtered rate estimate at x = 0 (K/s).
    pub y0_dot: f64,
    /// Filtered rate estimate at x = L (K/s).
    pub y_l_dot: f64,
    pub time: f64,
}

/// Samples the three sensors with additive Gaussian noise and updates the
/// boundary rate estimates.
///
/// Rates are the backward difference of consecutive readings passed through
/// a first-order low-pass filter with time constant `filter_tau` (backward
/// Euler discretisation). With no previous sample the rates start at zero.
pub fn measure<R: Rng + ?Sized>(
    h: &Field,
    grid: &Grid,
    noise_std: f64,
    rng: &mut R,
    prev: Option<&Measurements>,
    dt: f64,
    filter_tau: f64,
) -> Measurements {
    debug_assert!(dt > 0.0 && filter_tau >= 0.0);
    let mut noisy = |v: f64| {
        if noise_std > 0.0 {
            v + Normal::new(0.0, noise_std)
                .expect("noise std is finite and positive")
                .sample(rng)
        } else {
            v
        }
    };
    let y0 = noisy(h.first());
    let ym = noisy(h.at_mid(grid));
    let y_l = noisy(h.last());

    let (y0_dot, y_l_dot) = match prev {
        None => (0.0, 0.0),
        Some(p) => {
            let blend = dt / (filter_tau + dt);
            let raw0 = (y0 - p.y0) / dt;
            let raw_l = (y_l - p.y_l) / dt;
            (
                p.y0_dot + blend * (raw0 - p.y0_dot),
                p.y_l_dot + blend * (raw_l - p.y_l_dot),
            )
        }
    };

    Measurements {
        y0,
        ym,
        y_l,
        y0_dot,
        y_l_dot,
        time: h.time,
    }
}

/// Error-coordinate coolant commands `(u1, u2)` in K.
pub fn control_commands(kind: &ControllerKind, meas: &Measurements) -> (f64, f64) {
    match kind.variant {
        ControllerVariant::OpenLoop => (0.0, 0.0),
        _ => {
            let g = &kind.gains;
            (
                g.mu1 * meas.y0 + g.mu2 * meas.y0_dot + g.mu3 * meas.ym,
                g.beta1 * meas.y_l + g.beta2 * meas.y_l_dot + g.beta3 * meas.ym,
            )
        }
    }
}

/// Physical coolant temperature for an error-coordinate command.
pub fn coolant_temperature(u: f64, params: &PhysicalParams) -> f64 {
    params.t_desired + u
}

/// Optional actuator limits on the physical coolant temperature (K).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoolantClamp {
    pub min_k: f64,
    pub max_k: f64,
}

impl CoolantClamp {
    pub fn apply(&self, u: f64, params: &PhysicalParams) -> f64 {
        coolant_temperature(u, params).clamp(self.min_k, self.max_k) - params.t_desired
    }
}
