use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::anomalies::{attack_effects, fault_field, nominal_heat, update_soc, SocState};
use crate::certify::{certify, Certificate, Classification, ProbeConfig, SearchConfig};
use crate::control::{
    control_commands, coolant_temperature, measure, ControllerKind, Gains, Measurements, RateMode,
};
use crate::error::Result;
use crate::functionals::{
    eval_functionals, monitor_trajectory, trajectory_bound_check, BoundCheckReport, FunctionalSample, MonitorReport,
    MonitorSeries,
};
use crate::grid::{l2_norm, Field, Grid};
use crate::scenario::{Anomaly, Scenario};
use crate::solver::{assemble_system, step, StepInputs};

/// RNG stream for process noise. Streams depend only on the seed, so every
/// controller compared on one scenario sees the same noise realisation.
pub const PROCESS_STREAM: u64 = 1;
pub const MEASUREMENT_STREAM: u64 = 2;

pub fn noise_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryMetadata {
    pub scenario_name: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub controller: ControllerKind,
    pub rate_mode: RateMode,
    pub n_nodes: usize,
    pub dt: f64,
    pub horizon: f64,
    pub drain_current: Option<f64>,
    pub profile_warnings: usize,
    /// Written at the top level of the summary document.
    #[serde(skip)]
    pub certificate: Certificate,
    pub scenario: serde_json::Value,
}

/// Sampled closed-loop run. All per-sample vectors have `steps + 1` entries.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Temperature error at every node (K).
    pub fields: Vec<Vec<f64>>,
    /// Coolant temperatures `(T_c1, T_c2)` (K).
    pub coolant: Vec<(f64, f64)>,
    pub soc: Vec<f64>,
    /// Spatial L2 norm of the anomaly term.
    pub anomaly_l2: Vec<f64>,
    /// Spatial L2 norm of the nominal heat input.
    pub input_l2: Vec<f64>,
    pub functionals: Vec<FunctionalSample>,
    pub metadata: TrajectoryMetadata,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// First sample time with `max |h| > h_max`.
    pub fn first_unsafe_time(&self, h_max: f64) -> Option<f64> {
        self.fields
            .iter()
            .position(|f| f.iter().any(|v| v.abs() > h_max))
            .map(|i| self.times[i])
    }

    /// Linearly interpolated time at which the state of charge first drops
    /// below zero.
    pub fn soc_zero_crossing(&self) -> Option<f64> {
        let i = self.soc.iter().position(|s| *s < 0.0)?;
        if i == 0 {
            return Some(self.times[0]);
        }
        let (s0, s1) = (self.soc[i - 1], self.soc[i]);
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        Some(t0 + (t1 - t0) * s0 / (s0 - s1))
    }

    pub fn node_series(&self, node: usize) -> Vec<f64> {
        self.fields.iter().map(|f| f[node]).collect()
    }
}

/// Certificate for the scenario's controller at its configured gains.
pub fn scenario_certificate(scenario: &Scenario) -> Result<Certificate> {
    let gains = scenario.controller.effective_gains();
    certify(
        &gains,
        &scenario.params,
        scenario.design.as_ref(),
        &SearchConfig::default(),
        &ProbeConfig::default(),
    )
}

struct Sources {
    total_current: f64,
    u_value: f64,
    d_field: Field,
}

fn sources_at(scenario: &Scenario, grid: &Grid, soc: &SocState, t: f64) -> Sources {
    let p = &scenario.params;
    let current = scenario.profile.current_at(t);
    let mut total = current;
    let d_field = match &scenario.anomaly {
        Anomaly::None => Field::zeros(grid, t),
        Anomaly::Fault(spec) => fault_field(spec, t, grid),
        Anomaly::Attack(spec) => {
            let (tot, extra) = attack_effects(spec, current, soc, t, p);
            total = tot;
            Field::constant(grid, extra, t)
        }
    };
    Sources {
        total_current: total,
        u_value: nominal_heat(current, p),
        d_field,
    }
}

#[derive(Default)]
struct Recorder {
    times: Vec<f64>,
    fields: Vec<Vec<f64>>,
    coolant: Vec<(f64, f64)>,
    soc: Vec<f64>,
    anomaly_l2: Vec<f64>,
    input_l2: Vec<f64>,
    functionals: Vec<FunctionalSample>,
}

impl Recorder {
    fn with_capacity(n: usize) -> Self {
        Self {
            times: Vec::with_capacity(n),
            fields: Vec::with_capacity(n),
            coolant: Vec::with_capacity(n),
            soc: Vec::with_capacity(n),
            anomaly_l2: Vec::with_capacity(n),
            input_l2: Vec::with_capacity(n),
            functionals: Vec::with_capacity(n),
        }
    }

    fn push(&mut self, scenario: &Scenario, cert: &Certificate, h: &Field, soc: &SocState, cmd: (f64, f64)) {
        let p = &scenario.params;
        let grid = &scenario.grid;
        let s = sources_at(scenario, grid, soc, h.time);
        self.times.push(h.time);
        self.fields.push(h.values.clone());
        self.coolant.push((coolant_temperature(cmd.0, p), coolant_temperature(cmd.1, p)));
        self.soc.push(soc.soc);
        self.anomaly_l2.push(l2_norm(&s.d_field, grid));
        self.input_l2.push(s.u_value.abs() * p.length.sqrt());
        self.functionals.push(eval_functionals(h, grid, p, cert));
    }
}

fn exact_command(g: &Gains, h: &[f64], prev: Option<&[f64]>, mid: usize, dt: f64) -> (f64, f64) {
    let n = h.len();
    let (r0, rl) = match prev {
        Some(p) => ((h[0] - p[0]) / dt, (h[n - 1] - p[n - 1]) / dt),
        None => (0.0, 0.0),
    };
    (
        g.mu1 * h[0] + g.mu2 * r0 + g.mu3 * h[mid],
        g.beta1 * h[n - 1] + g.beta2 * rl + g.beta3 * h[mid],
    )
}

/// Runs the closed loop over the scenario horizon.
///
/// Sources are evaluated at the midpoint of each step. The recorded inputs,
/// anomaly norms and state of charge are instantaneous values at the sample
/// times. In measured-rate mode the coolant command computed from the
/// sensors at `t_n` is held over the step and recorded at `t_n`; in exact
/// mode the feedback lives in the step matrix and the recorded command is
/// evaluated from the state with a backward-difference boundary rate.
pub fn simulate(scenario: &Scenario) -> Result<Trajectory> {
    let cert = scenario_certificate(scenario)?;
    simulate_with_certificate(scenario, cert)
}

pub fn simulate_with_certificate(scenario: &Scenario, cert: Certificate) -> Result<Trajectory> {
    let grid = scenario.grid;
    let p = &scenario.params;
    let dt = scenario.dt;
    let n_steps = scenario.steps;
    let gains = scenario.controller.effective_gains();
    let exact = scenario.rate_mode == RateMode::Exact;
    let matrix_gains = if exact { gains } else { Gains::zero() };
    let op = assemble_system(p, &matrix_gains, &grid, dt, scenario.solver.scheme)?;

    let mut proc_rng = noise_rng(scenario.seed, PROCESS_STREAM);
    let mut meas_rng = noise_rng(scenario.seed, MEASUREMENT_STREAM);

    let mut rec = Recorder::with_capacity(n_steps + 1);
    let mut h = scenario.initial_field();
    let mut soc = SocState::new(scenario.battery.capacity_ah, scenario.battery.initial_soc)?;
    let mut prev_meas: Option<Measurements> = None;
    let mut prev_values: Option<Vec<f64>> = None;

    let mut command_for = |h: &Field, prev_values: Option<&[f64]>| -> (f64, f64) {
        if exact {
            return exact_command(&gains, &h.values, prev_values, grid.mid_index, dt);
        }
        let m = measure(
            h,
            &grid,
            scenario.noise.measurement_std,
            &mut meas_rng,
            prev_meas.as_ref(),
            dt,
            scenario.filter_tau,
        );
        prev_meas = Some(m);
        let (u1, u2) = control_commands(&scenario.controller, &m);
        match &scenario.coolant_clamp {
            Some(c) => (c.apply(u1, p), c.apply(u2, p)),
            None => (u1, u2),
        }
    };

    for n in 0..n_steps {
        let t = n as f64 * dt;
        h.time = t;
        let cmd = command_for(&h, prev_values.as_deref());
        rec.push(scenario, &cert, &h, &soc, cmd);

        let src = sources_at(scenario, &grid, &soc, t + 0.5 * dt);
        let u_field = vec![src.u_value; grid.n_nodes];
        let inputs = StepInputs {
            u_field: &u_field,
            d_field: &src.d_field.values,
            coolant_cmd: if exact { (0.0, 0.0) } else { cmd },
            dt,
        };
        let next = step(&op, &h, &inputs, &scenario.solver, &mut proc_rng)?;
        soc = update_soc(&soc, src.total_current, dt);
        prev_values = Some(std::mem::replace(&mut h, next).values);
    }
    h.time = n_steps as f64 * dt;
    let cmd = command_for(&h, prev_values.as_deref());
    rec.push(scenario, &cert, &h, &soc, cmd);

    let drain_current = match &scenario.anomaly {
        Anomaly::Attack(a) => Some(a.drain_current),
        _ => None,
    };
    let metadata = TrajectoryMetadata {
        scenario_name: scenario.name.clone(),
        scenario_hash: scenario.hash(),
        seed: scenario.seed,
        controller: scenario.controller,
        rate_mode: scenario.rate_mode,
        n_nodes: grid.n_nodes,
        dt,
        horizon: scenario.horizon,
        drain_current,
        profile_warnings: scenario.profile.warning_count(),
        certificate: cert,
        scenario: serde_json::to_value(scenario).expect("scenario serialises"),
    };
    Ok(Trajectory {
        times: rec.times,
        fields: rec.fields,
        coolant: rec.coolant,
        soc: rec.soc,
        anomaly_l2: rec.anomaly_l2,
        input_l2: rec.input_l2,
        functionals: rec.functionals,
        metadata,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub controller: String,
    pub classification: Classification,
    /// K
    pub max_temperature: f64,
    pub min_temperature: f64,
    pub max_temperature_x0: f64,
    pub max_temperature_mid: f64,
    pub max_temperature_xl: f64,
    pub first_unsafe_time: Option<f64>,
    pub min_coolant_temperature: f64,
    pub max_coolant_temperature: f64,
    pub final_soc: f64,
    pub soc_zero_crossing: Option<f64>,
    pub max_energy: f64,
    pub agmon_violations: usize,
    pub condition2_fraction: Option<f64>,
    pub vcond2_fraction: Option<f64>,
}

fn max_of(v: impl Iterator<Item = f64>) -> f64 {
    v.fold(f64::NEG_INFINITY, f64::max)
}

fn min_of(v: impl Iterator<Item = f64>) -> f64 {
    v.fold(f64::INFINITY, f64::min)
}

pub fn summarize(traj: &Trajectory, scenario: &Scenario, monitor: &MonitorReport) -> RunSummary {
    let td = scenario.params.t_desired;
    let last = scenario.grid.last();
    let mid = scenario.grid.mid_index;
    let node_max = |i: usize| td + max_of(traj.fields.iter().map(|f| f[i]));
    let agmon_violations = traj
        .functionals
        .iter()
        .filter(|s| s.max_abs * s.max_abs > s.energy * (1.0 + 1e-12))
        .count();
    RunSummary {
        controller: traj.metadata.controller.variant.label().to_string(),
        classification: traj.metadata.certificate.classification,
        max_temperature: td + max_of(traj.fields.iter().flat_map(|f| f.iter().copied())),
        min_temperature: td + min_of(traj.fields.iter().flat_map(|f| f.iter().copied())),
        max_temperature_x0: node_max(0),
        max_temperature_mid: node_max(mid),
        max_temperature_xl: node_max(last),
        first_unsafe_time: traj.first_unsafe_time(scenario.params.h_max),
        min_coolant_temperature: min_of(traj.coolant.iter().flat_map(|c| [c.0, c.1])),
        max_coolant_temperature: max_of(traj.coolant.iter().flat_map(|c| [c.0, c.1])),
        final_soc: *traj.soc.last().unwrap_or(&f64::NAN),
        soc_zero_crossing: traj.soc_zero_crossing(),
        max_energy: max_of(traj.functionals.iter().map(|s| s.energy)),
        agmon_violations,
        condition2_fraction: monitor.condition2.fraction_satisfied,
        vcond2_fraction: monitor.vcond2.fraction_satisfied,
    }
}

/// Simulation plus monitoring and summary metrics.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trajectory: Trajectory,
    pub monitor: MonitorReport,
    /// Present when the scenario supplies bound constants.
    pub bound_check: Option<BoundCheckReport>,
    pub summary: RunSummary,
}

pub fn run_scenario(scenario: &Scenario) -> Result<RunOutput> {
    let trajectory = simulate(scenario)?;
    let monitor = monitor_trajectory(&trajectory, &trajectory.metadata.certificate, &scenario.monitor_tolerance);
    let summary = summarize(&trajectory, scenario, &monitor);
    let bound_check = scenario.bound_constants.as_ref().map(|k| {
        trajectory_bound_check(
            &MonitorSeries {
                times: &trajectory.times,
                samples: &trajectory.functionals,
                norm_d: &trajectory.anomaly_l2,
                norm_u: &trajectory.input_l2,
            },
            k,
        )
    });
    Ok(RunOutput {
        trajectory,
        monitor,
        bound_check,
        summary,
    })
}
