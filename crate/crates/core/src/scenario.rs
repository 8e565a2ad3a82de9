//! Scenario configuration: the JSON schema, default resolution and
//! validation.
//!
//! Every section is optional and falls back to the calibrated battery
//! defaults. Unknown keys are rejected and parse errors carry the JSON path
//! of the offending value. A relative current-profile path is resolved
//! against the directory of the configuration file.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::anomalies::{calibrate_drain_current, AttackSpec, FaultSpec, SocState};
use crate::certify::DesignParams;
use crate::control::{ControllerKind, ControllerVariant, CoolantClamp, Gains, RateMode};
use crate::error::{Error, Result};
use crate::functionals::{BoundConstants, MonitorTolerance};
use crate::grid::{build_grid, non_negative, positive, Field, Grid, PhysicalParams};
use crate::profile::{load_current_profile, CurrentProfile};
use crate::solver::{Scheme, SolverConfig};

pub const DEFAULT_N_NODES: usize = 51;
pub const DEFAULT_DT: f64 = 0.1;
pub const DEFAULT_HORIZON: f64 = 1400.0;
pub const DEFAULT_SEED: u64 = 2024;
pub const DEFAULT_FILTER_TAU: f64 = 1.0;
pub const DEFAULT_PROCESS_STD: f64 = 0.01;
pub const DEFAULT_MEASUREMENT_STD: f64 = 0.1;
pub const DEFAULT_CAPACITY_AH: f64 = 100.0;
pub const DEFAULT_INITIAL_SOC: f64 = 0.74;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub alpha: Option<f64>,
    pub k_bc: Option<f64>,
    pub length: Option<f64>,
    pub heat_scale: Option<f64>,
    pub t_desired: Option<f64>,
    pub h_max: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_nodes: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub scheme: Option<Scheme>,
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub variant: Option<ControllerVariant>,
    /// Gains used whenever the stability-only controller runs.
    pub stc_gains: Option<Gains>,
    /// Gains used whenever the stability-and-safety controller runs.
    pub stsfc_gains: Option<Gains>,
    pub rate_mode: Option<RateMode>,
    pub filter_tau: Option<f64>,
    pub coolant_clamp: Option<CoolantClamp>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DrainConfig {
    Value(f64),
    Calibrated(CalibratedDrain),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibratedDrain {
    /// Time at which the state of charge should cross zero (s).
    pub calibrated_crossing_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AnomalyConfig {
    #[default]
    None,
    Fault {
        onset: f64,
        magnitude: f64,
        location_center: f64,
        location_width: f64,
    },
    Attack {
        onset: f64,
        drain_current: DrainConfig,
        multiplier: Option<f64>,
        overdischarge_heat_gain: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileConfig {
    Path(String),
    Constant(ConstantProfile),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantProfile {
    pub constant_a: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub process_std: Option<f64>,
    pub measurement_std: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatteryConfig {
    pub capacity_ah: Option<f64>,
    pub initial_soc: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialCondition {
    #[default]
    Zero,
    Uniform {
        value: f64,
    },
    Values {
        values: Vec<f64>,
    },
}

impl InitialCondition {
    pub fn field(&self, g: &Grid) -> Result<Field> {
        match self {
            InitialCondition::Zero => Ok(Field::zeros(g, 0.0)),
            InitialCondition::Uniform { value } => Field::new(vec![*value; g.n_nodes], 0.0),
            InitialCondition::Values { values } => {
                if values.len() != g.n_nodes {
                    return Err(Error::validation(
                        "initial_condition.values",
                        format!("expected {} values, got {}", g.n_nodes, values.len()),
                    ));
                }
                Field::new(values.clone(), 0.0)
            }
        }
    }
}

/// The configuration file as written.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: Option<String>,
    pub description: Option<String>,
    #[serde(default)]
    pub params: ParamsConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub anomaly: AnomalyConfig,
    pub current_profile: Option<ProfileConfig>,
    pub horizon: Option<f64>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub battery: BatteryConfig,
    #[serde(default)]
    pub initial_condition: InitialCondition,
    pub design: Option<DesignParams>,
    pub monitor_tolerance: Option<MonitorTolerance>,
    pub bound_constants: Option<BoundConstants>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Anomaly {
    None,
    Fault(FaultSpec),
    Attack(AttackSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResolvedNoise {
    pub process_std: f64,
    pub measurement_std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResolvedBattery {
    pub capacity_ah: f64,
    pub initial_soc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControllerGains {
    pub stc: Gains,
    pub stsfc: Gains,
}

impl ControllerGains {
    pub fn for_variant(&self, v: ControllerVariant) -> Gains {
        match v {
            ControllerVariant::OpenLoop => Gains::zero(),
            ControllerVariant::StabilityOnly => self.stc,
            ControllerVariant::StabilityAndSafety => self.stsfc,
        }
    }
}

/// A fully resolved and validated scenario.
#[derive(Debug, Clone, Serialize)]
pub struct Scenario {
    pub name: String,
    pub description: Option<String>,
    pub params: PhysicalParams,
    pub grid: Grid,
    pub dt: f64,
    pub steps: usize,
    pub solver: SolverConfig,
    pub controller: ControllerKind,
    pub controller_gains: ControllerGains,
    pub rate_mode: RateMode,
    pub filter_tau: f64,
    pub coolant_clamp: Option<CoolantClamp>,
    pub anomaly: Anomaly,
    /// Target crossing time when the drain current was calibrated.
    pub drain_calibrated_for: Option<f64>,
    pub battery: ResolvedBattery,
    pub profile_source: String,
    pub profile_covers_horizon: bool,
    #[serde(skip)]
    pub profile: Arc<CurrentProfile>,
    pub horizon: f64,
    pub seed: u64,
    pub noise: ResolvedNoise,
    pub initial_condition: InitialCondition,
    pub design: Option<DesignParams>,
    pub monitor_tolerance: MonitorTolerance,
    pub bound_constants: Option<BoundConstants>,
}

fn parse_error(path: &Path, err: serde_path_to_error::Error<serde_json::Error>) -> Error {
    let at = err.path().to_string();
    Error::Parse {
        path: path.to_path_buf(),
        message: if at == "." {
            err.into_inner().to_string()
        } else {
            format!("at `{at}`: {}", err.into_inner())
        },
    }
}

/// Parses configuration text. `origin` is only used in error messages.
pub fn parse_config(text: &str, origin: &Path) -> Result<ScenarioConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| parse_error(origin, e))
}

/// Reads, parses, resolves and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cfg = parse_config(&text, path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    cfg.resolve(&base)
}

impl ScenarioConfig {
    /// Applies defaults and validates. Relative profile paths are taken
    /// relative to `base_dir`.
    pub fn resolve(&self, base_dir: &Path) -> Result<Scenario> {
        let d = PhysicalParams::battery_default();
        let pc = &self.params;
        let params = PhysicalParams {
            alpha: pc.alpha.unwrap_or(d.alpha),
            k_bc: pc.k_bc.unwrap_or(d.k_bc),
            length: pc.length.unwrap_or(d.length),
            heat_scale: pc.heat_scale.unwrap_or(d.heat_scale),
            t_desired: pc.t_desired.unwrap_or(d.t_desired),
            h_max: pc.h_max.unwrap_or(d.h_max),
        };
        params.validate().map_err(|e| e.within("params"))?;

        let grid = build_grid(params.length, self.grid.n_nodes.unwrap_or(DEFAULT_N_NODES))
            .map_err(|e| e.within("grid"))?;

        let dt = self.solver.dt.unwrap_or(DEFAULT_DT);
        positive("dt", dt).map_err(|e| e.within("solver"))?;
        let horizon = self.horizon.unwrap_or(DEFAULT_HORIZON);
        positive("horizon", horizon)?;
        let ratio = horizon / dt;
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-6 * ratio.max(1.0) || steps < 1.0 {
            return Err(Error::validation(
                "horizon",
                format!("must be a positive whole multiple of solver.dt = {dt}, got {horizon}"),
            ));
        }

        let noise = ResolvedNoise {
            process_std: self.noise.process_std.unwrap_or(DEFAULT_PROCESS_STD),
            measurement_std: self.noise.measurement_std.unwrap_or(DEFAULT_MEASUREMENT_STD),
        };
        non_negative("process_std", noise.process_std).map_err(|e| e.within("noise"))?;
        non_negative("measurement_std", noise.measurement_std).map_err(|e| e.within("noise"))?;

        let seed = self.seed.unwrap_or(DEFAULT_SEED);
        let solver = SolverConfig {
            scheme: self.solver.scheme.unwrap_or_default(),
            process_noise_std: noise.process_std,
            rng_seed: seed,
        };

        let cc = &self.controller;
        let controller_gains = ControllerGains {
            stc: cc.stc_gains.unwrap_or_else(Gains::stc_default),
            stsfc: cc.stsfc_gains.unwrap_or_else(Gains::stsfc_default),
        };
        controller_gains.stc.validate().map_err(|e| e.within("controller.stc_gains"))?;
        controller_gains.stsfc.validate().map_err(|e| e.within("controller.stsfc_gains"))?;
        let variant = cc.variant.unwrap_or(ControllerVariant::StabilityAndSafety);
        let controller = ControllerKind::new(variant, controller_gains.for_variant(variant));
        let filter_tau = cc.filter_tau.unwrap_or(DEFAULT_FILTER_TAU);
        non_negative("filter_tau", filter_tau).map_err(|e| e.within("controller"))?;
        if let Some(c) = &cc.coolant_clamp {
            if !(c.min_k.is_finite() && c.max_k.is_finite() && c.min_k < c.max_k) {
                return Err(Error::validation("controller.coolant_clamp", "require finite min_k < max_k"));
            }
        }

        let battery = ResolvedBattery {
            capacity_ah: self.battery.capacity_ah.unwrap_or(DEFAULT_CAPACITY_AH),
            initial_soc: self.battery.initial_soc.unwrap_or(DEFAULT_INITIAL_SOC),
        };
        SocState::new(battery.capacity_ah, battery.initial_soc).map_err(|e| e.within("battery"))?;

        let (profile, profile_source) = match &self.current_profile {
            None => (CurrentProfile::constant(0.0), "constant 0 A".to_string()),
            Some(ProfileConfig::Constant(c)) => {
                if !c.constant_a.is_finite() {
                    return Err(Error::validation("current_profile.constant_a", "must be finite"));
                }
                (CurrentProfile::constant(c.constant_a), format!("constant {} A", c.constant_a))
            }
            Some(ProfileConfig::Path(p)) => {
                let path = PathBuf::from(p);
                let full = if path.is_absolute() { path } else { base_dir.join(path) };
                (load_current_profile(&full)?, p.clone())
            }
        };
        let profile_covers_horizon = profile.covers(0.0, horizon);
        if !profile_covers_horizon {
            log::warn!(
                "current profile `{profile_source}` ends at {} s, before the horizon {horizon} s; its last value is held",
                profile.end()
            );
        }

        let mut drain_calibrated_for = None;
        let anomaly = match &self.anomaly {
            AnomalyConfig::None => Anomaly::None,
            AnomalyConfig::Fault {
                onset,
                magnitude,
                location_center,
                location_width,
            } => {
                let spec = FaultSpec {
                    onset: *onset,
                    magnitude: *magnitude,
                    location_center: *location_center,
                    location_width: *location_width,
                };
                spec.validate(params.length).map_err(|e| e.within("anomaly"))?;
                Anomaly::Fault(spec)
            }
            AnomalyConfig::Attack {
                onset,
                drain_current,
                multiplier,
                overdischarge_heat_gain,
            } => {
                let multiplier = multiplier.unwrap_or(1.0);
                non_negative("onset", *onset).map_err(|e| e.within("anomaly"))?;
                let drain = match drain_current {
                    DrainConfig::Value(v) => *v,
                    DrainConfig::Calibrated(c) => {
                        drain_calibrated_for = Some(c.calibrated_crossing_s);
                        calibrate_drain_current(
                            &profile,
                            battery.capacity_ah,
                            battery.initial_soc,
                            *onset,
                            multiplier,
                            c.calibrated_crossing_s,
                        )
                        .map_err(|e| match e {
                            Error::Validation { message, .. } => {
                                Error::validation("anomaly.drain_current.calibrated_crossing_s", message)
                            }
                            other => other,
                        })?
                    }
                };
                let spec = AttackSpec {
                    onset: *onset,
                    drain_current: drain,
                    multiplier,
                    overdischarge_heat_gain: overdischarge_heat_gain.unwrap_or(0.0),
                };
                spec.validate().map_err(|e| e.within("anomaly"))?;
                Anomaly::Attack(spec)
            }
        };

        self.initial_condition.field(&grid)?;
        if let Some(dp) = &self.design {
            dp.validate().map_err(|e| e.within("design"))?;
        }
        let monitor_tolerance = self.monitor_tolerance.unwrap_or_default();
        non_negative("relative", monitor_tolerance.relative).map_err(|e| e.within("monitor_tolerance"))?;
        non_negative("absolute", monitor_tolerance.absolute).map_err(|e| e.within("monitor_tolerance"))?;

        Ok(Scenario {
            name: self.name.clone().unwrap_or_else(|| "scenario".to_string()),
            description: self.description.clone(),
            params,
            grid,
            dt,
            steps: steps as usize,
            solver,
            controller,
            controller_gains,
            rate_mode: cc.rate_mode.unwrap_or_default(),
            filter_tau,
            coolant_clamp: cc.coolant_clamp,
            anomaly,
            drain_calibrated_for,
            battery,
            profile_source,
            profile_covers_horizon,
            profile: Arc::new(profile),
            horizon,
            seed,
            noise,
            initial_condition: self.initial_condition.clone(),
            design: self.design,
            monitor_tolerance,
            bound_constants: self.bound_constants,
        })
    }
}

impl Scenario {
    /// Same scenario with another controller, using its configured gains.
    pub fn with_variant(&self, variant: ControllerVariant) -> Scenario {
        let mut s = self.clone();
        s.controller = ControllerKind::new(variant, self.controller_gains.for_variant(variant));
        s
    }

    pub fn with_seed(&self, seed: u64) -> Scenario {
        let mut s = self.clone();
        s.seed = seed;
        s.solver.rng_seed = seed;
        s
    }

    /// Noise-free copy.
    pub fn without_noise(&self) -> Scenario {
        let mut s = self.clone();
        s.noise = ResolvedNoise {
            process_std: 0.0,
            measurement_std: 0.0,
        };
        s.solver.process_noise_std = 0.0;
        s
    }

    /// SHA-256 over the resolved configuration and the profile samples.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(self).expect("scenario serialises"));
        for (t, c) in self.profile.points() {
            hasher.update(t.to_le_bytes());
            hasher.update(c.to_le_bytes());
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn initial_field(&self) -> Field {
        self.initial_condition
            .field(&self.grid)
            .expect("initial condition validated at resolution")
    }
}
