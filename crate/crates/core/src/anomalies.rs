//! Nominal heat generation and the two anomaly models.
//!
//! * Mechanical fault: a sustained step in volumetric heating over one cell,
//!   expressed directly as a temperature rate (K/s).
//! * Overdischarge attack: an additive drain `I_a` (and optional multiplier
//!   `a_a`) on the module current. The extra Joule heat follows from the
//!   current, and once the state of charge drops below zero an
//!   overdischarge term grows linearly with the depletion depth.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{non_negative, positive, Field, Grid, PhysicalParams};
use crate::profile::CurrentProfile;

/// Uniform heating rate `heat_scale * I^2` (K/s).
pub fn nominal_heat(current: f64, p: &PhysicalParams) -> f64 {
    p.heat_scale * current * current
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    /// s
    pub onset: f64,
    /// K/s
    pub magnitude: f64,
    /// m
    pub location_center: f64,
    /// m
    pub location_width: f64,
}

impl FaultSpec {
    pub fn validate(&self, length: f64) -> Result<()> {
        non_negative("onset", self.onset)?;
        if !self.magnitude.is_finite() {
            return Err(Error::validation("magnitude", "must be finite"));
        }
        positive("location_width", self.location_width)?;
        if self.location_width > length {
            return Err(Error::validation("location_width", format!("exceeds module length {length}")));
        }
        if !(0.0..=length).contains(&self.location_center) {
            return Err(Error::validation(
                "location_center",
                format!("{} lies outside [0, {length}]", self.location_center),
            ));
        }
        Ok(())
    }

    /// Affected interval, clipped to the module.
    pub fn support(&self, length: f64) -> (f64, f64) {
        let half = 0.5 * self.location_width;
        ((self.location_center - half).max(0.0), (self.location_center + half).min(length))
    }
}

/// Fault heating at time `t`: zero before onset, a top-hat of height
/// `magnitude` over the nodes inside the affected interval afterwards.
pub fn fault_field(spec: &FaultSpec, t: f64, g: &Grid) -> Field {
    if t < spec.onset {
        return Field::zeros(g, t);
    }
    let (a, b) = spec.support(g.length);
    let tol = 1e-9 * g.length;
    Field::from_fn(g, t, |x| {
        if x >= a - tol && x <= b + tol {
            spec.magnitude
        } else {
            0.0
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    pub onset: f64,
    /// Additive drain current `I_a` (A).
    pub drain_current: f64,
    /// Multiplicative factor `a_a` on the nominal current.
    pub multiplier: f64,
    /// Overdischarge heating per unit of negative state of charge (K/s).
    pub overdischarge_heat_gain: f64,
}

impl AttackSpec {
    pub fn validate(&self) -> Result<()> {
        non_negative("onset", self.onset)?;
        non_negative("drain_current", self.drain_current)?;
        non_negative("overdischarge_heat_gain", self.overdischarge_heat_gain)?;
        if !self.multiplier.is_finite() {
            return Err(Error::validation("multiplier", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SocState {
    /// May go negative to express overdischarge depth.
    pub soc: f64,
    /// A h
    pub capacity: f64,
    pub initial_soc: f64,
}

impl SocState {
    pub fn new(capacity: f64, initial_soc: f64) -> Result<Self> {
        positive("capacity_ah", capacity)?;
        if !initial_soc.is_finite() {
            return Err(Error::validation("initial_soc", "must be finite"));
        }
        Ok(Self {
            soc: initial_soc,
            capacity,
            initial_soc,
        })
    }
}

/// Coulomb counting with discharge current positive.
pub fn update_soc(s: &SocState, total_current: f64, dt: f64) -> SocState {
    debug_assert!(dt > 0.0);
    SocState {
        soc: s.soc - total_current * dt / (3600.0 * s.capacity),
        ..*s
    }
}

/// Returns `(total_current, extra_heat)` for the attack at time `t`.
pub fn attack_effects(
    spec: &AttackSpec,
    nominal_current: f64,
    soc: &SocState,
    t: f64,
    p: &PhysicalParams,
) -> (f64, f64) {
    if t < spec.onset {
        return (nominal_current, 0.0);
    }
    let total = spec.multiplier * nominal_current + spec.drain_current;
    let mut extra = p.heat_scale * (total * total - nominal_current * nominal_current);
    if soc.soc < 0.0 {
        extra += spec.overdischarge_heat_gain * soc.soc.abs();
    }
    (total, extra)
}

/// Drain current that brings the state of charge to zero at `target_time`
/// under the given profile, assuming exact coulomb counting:
///
/// ```text
/// I_a = (3600 C soc(onset) - a_a int_onset^target I dt) / (target - onset)
/// ```
pub fn calibrate_drain_current(
    profile: &CurrentProfile,
    capacity: f64,
    initial_soc: f64,
    onset: f64,
    multiplier: f64,
    target_time: f64,
) -> Result<f64> {
    if !(target_time > onset) {
        return Err(Error::validation(
            "drain_current.calibrated_crossing_s",
            format!("target {target_time} must come after the attack onset {onset}"),
        ));
    }
    let charge_at_onset = initial_soc * 3600.0 * capacity - profile.integral(0.0, onset);
    let drain = (charge_at_onset - multiplier * profile.integral(onset, target_time)) / (target_time - onset);
    if !(drain >= 0.0) {
        return Err(Error::validation(
            "drain_current.calibrated_crossing_s",
            format!("the nominal current alone depletes the battery before {target_time} s (drain would be {drain:.3} A)"),
        ));
    }
    Ok(drain)
}
