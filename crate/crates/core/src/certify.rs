//! Gain certification.
//!
//! A gain set is checked against two inequality systems:
//!
//! * the practical input-to-state safety (pISSf) conditions: sign and range
//!   clauses on the gains plus a condition coupling the design parameters
//!   `gamma3..gamma5`, yielding the barrier constants `c1..c5` and `kappa`;
//! * the input-to-state stability (ISSt) conditions: three margins
//!   `d~1..d~3` that depend on `sigma1..sigma4`, yielding the Lyapunov
//!   weights `beta4`, `beta5` and the rates `d1..d5`.
//!
//! [`find_design_params`] constructs the design parameters by a deterministic
//! log-grid search and [`classify`] turns the outcome into the three-way
//! controller taxonomy, falling back to a simulated dissipation probe for
//! gain sets outside the safety clauses.

use serde::{Deserialize, Serialize};

use crate::control::Gains;
use crate::error::{Error, Result};
use crate::functionals::{dissipation_check, lyapunov_value, DissipationReport, MonitorTolerance};
use crate::grid::{build_grid, Field, PhysicalParams};
use crate::solver::{assemble_system, step, Scheme, SolverConfig, StepInputs};

/// Fixed barrier scaling constants (any `c1 > 1`, `0 < c2 < 1` is admissible).
pub const C1: f64 = 1.5;
pub const C2: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignParams {
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub gamma4: f64,
    pub gamma5: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub sigma3: f64,
    pub sigma4: f64,
}

impl DesignParams {
    pub fn from_arrays(gamma: [f64; 5], sigma: [f64; 4]) -> Self {
        Self {
            gamma1: gamma[0],
            gamma2: gamma[1],
            gamma3: gamma[2],
            gamma4: gamma[3],
            gamma5: gamma[4],
            sigma1: sigma[0],
            sigma2: sigma[1],
            sigma3: sigma[2],
            sigma4: sigma[3],
        }
    }

    pub fn gammas(&self) -> [f64; 5] {
        [self.gamma1, self.gamma2, self.gamma3, self.gamma4, self.gamma5]
    }

    pub fn sigmas(&self) -> [f64; 4] {
        [self.sigma1, self.sigma2, self.sigma3, self.sigma4]
    }

    pub fn validate(&self) -> Result<()> {
        let names = [
            "gamma1", "gamma2", "gamma3", "gamma4", "gamma5", "sigma1", "sigma2", "sigma3", "sigma4",
        ];
        let values = self.gammas().into_iter().chain(self.sigmas());
        for (name, v) in names.iter().zip(values) {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(*name, format!("design parameter must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// One inequality `lhs <op> rhs`, with `margin` positive when satisfied
/// (zero counts as satisfied for non-strict clauses).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clause {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub strict: bool,
    pub margin: f64,
    pub pass: bool,
}

impl Clause {
    /// `lhs < rhs` (strict) or `lhs <= rhs`.
    pub fn less(name: &str, lhs: f64, rhs: f64, strict: bool) -> Self {
        let margin = rhs - lhs;
        let pass = if strict { lhs < rhs } else { lhs <= rhs };
        Self {
            name: name.to_string(),
            lhs,
            rhs,
            strict,
            margin,
            pass,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TheoremStatus {
    Pass,
    Fail,
    NotApplicable,
}

/// The gain clauses of the safety theorem. They involve no design parameters.
pub fn gain_clauses(g: &Gains, p: &PhysicalParams) -> Vec<Clause> {
    let a = p.alpha;
    vec![
        Clause::less("mu1 < 1", g.mu1, 1.0, true),
        Clause::less("(mu1 - 1)/alpha <= mu2", (g.mu1 - 1.0) / a, g.mu2, false),
        Clause::less("mu2 < 0", g.mu2, 0.0, true),
        Clause::less("mu3 < 0", g.mu3, 0.0, true),
        Clause::less("beta1 < 1", g.beta1, 1.0, true),
        Clause::less("(beta1 - 1)/alpha <= beta2", (g.beta1 - 1.0) / a, g.beta2, false),
        Clause::less("beta2 < 0", g.beta2, 0.0, true),
        Clause::less("beta3 < 0", g.beta3, 0.0, true),
    ]
}

pub fn gain_clauses_hold(g: &Gains, p: &PhysicalParams) -> bool {
    gain_clauses(g, p).iter().all(|c| c.pass)
}

/// Slack of the design-parameter condition
/// `(gamma3 + gamma4)/(2 alpha^2) + 1/gamma5 < 1/alpha`; positive when it holds.
pub fn gamma_condition_slack(alpha: f64, gamma3: f64, gamma4: f64, gamma5: f64) -> f64 {
    1.0 / alpha - ((gamma3 + gamma4) / (2.0 * alpha * alpha) + 1.0 / gamma5)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Report {
    pub status: TheoremStatus,
    pub gain_clauses: Vec<Clause>,
    pub gamma_condition: Clause,
    pub c1: f64,
    pub c2: f64,
    /// `None` when `mu1 >= 1` or `beta1 >= 1` leaves the formula undefined.
    pub c3: Option<f64>,
    pub c4: f64,
    pub c5: f64,
    pub kappa: Option<f64>,
    /// `c3` is evaluated exactly as the printed formula reads.
    pub c3_note: String,
}

pub fn check_theorem1(g: &Gains, p: &PhysicalParams, dp: &DesignParams) -> Result<Theorem1Report> {
    dp.validate()?;
    let a = p.alpha;
    let k = p.k_bc;
    let clauses = gain_clauses(g, p);
    let lhs = (dp.gamma3 + dp.gamma4) / (2.0 * a * a) + 1.0 / dp.gamma5;
    let gamma_condition = Clause::less("(gamma3 + gamma4)/(2 alpha^2) + 1/gamma5 < 1/alpha", lhs, 1.0 / a, true);

    let c3 = if g.mu1 < 1.0 && g.beta1 < 1.0 {
        let boundary = dp.gamma5 / 2.0
            + k * a / 4.0 * (g.mu3 * g.mu3 / (1.0 - g.mu1) + g.beta3 * g.beta3 / (1.0 - g.beta1));
        Some(2.0 * a.max((dp.gamma1 + dp.gamma2) / 2.0).max(boundary))
    } else {
        None
    };
    let pass = clauses.iter().all(|c| c.pass) && gamma_condition.pass;
    Ok(Theorem1Report {
        status: if pass { TheoremStatus::Pass } else { TheoremStatus::Fail },
        gain_clauses: clauses,
        gamma_condition,
        c1: C1,
        c2: C2,
        c3,
        c4: 1.0 / dp.gamma1 + 1.0 / dp.gamma3,
        c5: 1.0 / dp.gamma2 + 1.0 / dp.gamma4,
        kappa: c3.map(|c| p.h_max * c),
        c3_note: "as-printed".to_string(),
    })
}

/// The three stability margins `(d~1, d~2, d~3)`.
pub fn theorem2_margins(g: &Gains, p: &PhysicalParams, sigma: [f64; 4]) -> [f64; 3] {
    let (a, k) = (p.alpha, p.k_bc);
    let [s1, s2, s3, s4] = sigma;
    [
        a - (s1 + s2 + k * a * (g.mu3 * s3 + g.beta3 * s4)),
        k * a * (1.0 - g.mu1) - a / 4.0 - k * a * g.mu3 / (2.0 * s3),
        k * a * (1.0 - g.beta1) - a / 4.0 - k * a * g.beta3 / (2.0 * s4),
    ]
}

fn min_margin(g: &Gains, p: &PhysicalParams, sigma: [f64; 4]) -> f64 {
    let [a, b, c] = theorem2_margins(g, p, sigma);
    a.min(b).min(c)
}

/// Lyapunov boundary weights `(beta4, beta5) = (-k alpha mu2, -k alpha beta2)`.
pub fn lyapunov_weights(g: &Gains, p: &PhysicalParams) -> (f64, f64) {
    (-p.k_bc * p.alpha * g.mu2, -p.k_bc * p.alpha * g.beta2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Report {
    pub status: TheoremStatus,
    pub margins: Vec<Clause>,
    pub d_tilde1: f64,
    pub d_tilde2: f64,
    pub d_tilde3: f64,
    pub beta4: f64,
    pub beta5: f64,
    pub d1: f64,
    pub d2: f64,
    /// Defined only when `beta4, beta5 > 0`.
    pub d3: Option<f64>,
    pub d4: f64,
    pub d5: f64,
}

pub fn check_theorem2(g: &Gains, p: &PhysicalParams, dp: &DesignParams) -> Result<Theorem2Report> {
    dp.validate()?;
    let [dt1, dt2, dt3] = theorem2_margins(g, p, dp.sigmas());
    let (b4, b5) = lyapunov_weights(g, p);
    let margins = vec![
        Clause::less("d~1 > 0", 0.0, dt1, true),
        Clause::less("d~2 > 0", 0.0, dt2, true),
        Clause::less("d~3 > 0", 0.0, dt3, true),
    ];
    let status = if !gain_clauses_hold(g, p) {
        TheoremStatus::NotApplicable
    } else if margins.iter().all(|c| c.pass) && b4 > 0.0 && b5 > 0.0 {
        TheoremStatus::Pass
    } else {
        TheoremStatus::Fail
    };
    let d3 = (b4 > 0.0 && b5 > 0.0).then(|| 2.0 * (dt1 / 2.0).min(dt2 / b4).min(dt3 / b5));
    Ok(Theorem2Report {
        status,
        margins,
        d_tilde1: dt1,
        d_tilde2: dt2,
        d_tilde3: dt3,
        beta4: b4,
        beta5: b5,
        d1: 0.5 * 1.0_f64.min(b4).min(b5),
        d2: 0.5 * 1.0_f64.max(b4).max(b5),
        d3,
        d4: 1.0 / (2.0 * dp.sigma1),
        d5: 1.0 / (2.0 * dp.sigma2),
    })
}

/// Search box and resolution for [`find_design_params`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub lower: f64,
    pub upper: f64,
    pub points_per_axis: usize,
    /// Refinement stops once the pattern step (in decades) falls below this.
    pub min_step_decades: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            lower: 1e-3,
            upper: 1e3,
            points_per_axis: 25,
            min_step_decades: 1e-6,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lower > 0.0 && self.upper > self.lower && self.upper.is_finite()) {
            return Err(Error::validation("search", "require 0 < lower < upper < inf"));
        }
        if self.points_per_axis < 2 {
            return Err(Error::validation("search.points_per_axis", "need at least 2 points"));
        }
        if !(self.min_step_decades > 0.0) {
            return Err(Error::validation("search.min_step_decades", "must be positive"));
        }
        Ok(())
    }

    /// Logarithmically spaced grid, endpoints included exactly.
    pub fn grid(&self) -> Vec<f64> {
        let (lo, hi) = (self.lower.log10(), self.upper.log10());
        let n = self.points_per_axis;
        (0..n)
            .map(|i| match i {
                0 => self.lower,
                i if i == n - 1 => self.upper,
                i => 10f64.powf(lo + (hi - lo) * i as f64 / (n - 1) as f64),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InfeasibleReason {
    /// A parameter-free gain clause fails.
    GainClauses,
    /// No `gamma3..gamma5` in the box satisfies the design condition.
    GammaCondition,
    /// No `sigma1..sigma4` in the box makes every stability margin positive.
    Theorem2Margins,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum DesignSearch {
    Feasible {
        design: DesignParams,
        /// `min(gamma slack, d~1, d~2, d~3)` at the returned point.
        min_margin: f64,
    },
    Infeasible {
        reason: InfeasibleReason,
        /// Best parameters found, for diagnostics (absent when the gain
        /// clauses already fail).
        best: Option<DesignParams>,
        best_margin: Option<f64>,
        detail: String,
    },
}

impl DesignSearch {
    pub fn is_feasible(&self) -> bool {
        matches!(self, DesignSearch::Feasible { .. })
    }

    pub fn design(&self) -> Option<&DesignParams> {
        match self {
            DesignSearch::Feasible { design, .. } => Some(design),
            DesignSearch::Infeasible { best, .. } => best.as_ref(),
        }
    }
}

fn maximise_sigma(g: &Gains, p: &PhysicalParams, cfg: &SearchConfig) -> ([f64; 4], f64) {
    let grid = cfg.grid();
    let obj = |s: [f64; 4]| min_margin(g, p, s);

    // Coordinate sweeps over the grid; ties keep the smaller value.
    let mut idx = [0usize; 4];
    let at = |idx: [usize; 4]| idx.map(|i| grid[i]);
    let mut best = obj(at(idx));
    loop {
        let mut moved = false;
        for axis in 0..4 {
            for cand in 0..grid.len() {
                let mut trial = idx;
                trial[axis] = cand;
                let v = obj(at(trial));
                if v > best {
                    best = v;
                    idx = trial;
                    moved = true;
                }
            }
        }
        if !moved {
            break;
        }
    }

    // Joint pattern search in log space over all 80 neighbours.
    let (lo, hi) = (cfg.lower.log10(), cfg.upper.log10());
    let mut point = at(idx).map(f64::log10);
    let mut step = (hi - lo) / (grid.len() - 1) as f64;
    let to_sigma = |pt: [f64; 4]| pt.map(|v| 10f64.powf(v).clamp(cfg.lower, cfg.upper));
    while step >= cfg.min_step_decades {
        let mut best_move: Option<([f64; 4], f64)> = None;
        for code in 0..81 {
            if code == 40 {
                continue;
            }
            let mut trial = point;
            let mut c = code;
            for v in trial.iter_mut() {
                let off = (c % 3) as f64 - 1.0;
                c /= 3;
                *v = (*v + off * step).clamp(lo, hi);
            }
            let val = obj(to_sigma(trial));
            if val > best && best_move.is_none_or(|(_, b)| val > b) {
                best_move = Some((trial, val));
            }
        }
        match best_move {
            Some((trial, val)) => {
                point = trial;
                best = val;
            }
            None => step /= 2.0,
        }
    }
    let sigma = to_sigma(point);
    (sigma, obj(sigma))
}

/// Constructs design parameters for both theorems.
///
/// The stability block `sigma1..sigma4` maximises the smallest margin
/// `min(d~1, d~2, d~3)`: coordinate-wise over the log grid, then jointly by a
/// shrinking pattern search. In the safety block `gamma1`, `gamma2` only
/// scale the constants and sit at the lower bound, as do `gamma3`, `gamma4`,
/// which only tighten the design condition; `gamma5` is the smallest grid
/// value whose slack reaches the stability margin, or the largest one when
/// none does.
pub fn find_design_params(g: &Gains, p: &PhysicalParams, cfg: &SearchConfig) -> Result<DesignSearch> {
    g.validate()?;
    p.validate()?;
    cfg.validate()?;

    let failing: Vec<String> = gain_clauses(g, p)
        .into_iter()
        .filter(|c| !c.pass)
        .map(|c| c.name)
        .collect();
    if !failing.is_empty() {
        return Ok(DesignSearch::Infeasible {
            reason: InfeasibleReason::GainClauses,
            best: None,
            best_margin: None,
            detail: format!("gain clauses fail: {}", failing.join(", ")),
        });
    }

    let (sigma, sigma_margin) = maximise_sigma(g, p, cfg);

    let grid = cfg.grid();
    let (g3, g4) = (cfg.lower, cfg.lower);
    let slack = |g5: f64| gamma_condition_slack(p.alpha, g3, g4, g5);
    let g5 = grid
        .iter()
        .copied()
        .find(|&v| slack(v) > 0.0 && slack(v) >= sigma_margin)
        .unwrap_or(cfg.upper);
    let design = DesignParams::from_arrays([cfg.lower, cfg.lower, g3, g4, g5], sigma);
    let gamma_slack = slack(g5);
    let margin = gamma_slack.min(sigma_margin);

    if !(gamma_slack > 0.0) {
        return Ok(DesignSearch::Infeasible {
            reason: InfeasibleReason::GammaCondition,
            best: Some(design),
            best_margin: Some(gamma_slack),
            detail: format!("largest design-condition slack in the box is {gamma_slack:e}"),
        });
    }
    if !(sigma_margin > 0.0) {
        return Ok(DesignSearch::Infeasible {
            reason: InfeasibleReason::Theorem2Margins,
            best: Some(design),
            best_margin: Some(sigma_margin),
            detail: format!("best smallest stability margin in the box is {sigma_margin:e}"),
        });
    }
    Ok(DesignSearch::Feasible {
        design,
        min_margin: margin,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    #[serde(rename = "certified-pISSf-and-ISSt")]
    CertifiedPissfAndIsst,
    #[serde(rename = "numeric-ISSt-only")]
    NumericIsstOnly,
    #[serde(rename = "uncertified")]
    Uncertified,
}

impl Classification {
    pub fn as_str(&self) -> &'static str {
        match self {
            Classification::CertifiedPissfAndIsst => "certified-pISSf-and-ISSt",
            Classification::NumericIsstOnly => "numeric-ISSt-only",
            Classification::Uncertified => "uncertified",
        }
    }
}

/// Settings of the zero-input dissipation probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub n_nodes: usize,
    pub steps: usize,
    /// Horizon as a multiple of the diffusion time `L^2 / alpha`.
    pub horizon_diffusion_times: f64,
    /// Required `V(end) / V(0)` upper bound.
    pub required_ratio: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            n_nodes: 41,
            steps: 2000,
            horizon_diffusion_times: 0.5,
            required_ratio: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub ran: bool,
    /// Why the probe was skipped or failed early.
    pub note: Option<String>,
    pub horizon: f64,
    pub dt: f64,
    pub dissipation: Option<DissipationReport>,
    pub passed: bool,
}

impl ProbeReport {
    fn skipped(note: String) -> Self {
        Self {
            ran: false,
            note: Some(note),
            horizon: 0.0,
            dt: 0.0,
            dissipation: None,
            passed: false,
        }
    }
}

/// Simulates the unforced closed loop (feedback folded into the step) from a
/// smooth positive profile and checks that the Lyapunov functional with
/// weights `beta4`, `beta5` never increases and loses a fixed fraction.
pub fn dissipation_probe(g: &Gains, p: &PhysicalParams, cfg: &ProbeConfig) -> ProbeReport {
    let (b4, b5) = lyapunov_weights(g, p);
    if !(b4 > 0.0 && b5 > 0.0) {
        return ProbeReport::skipped(format!(
            "Lyapunov weights must be positive (beta4 = {b4}, beta5 = {b5})"
        ));
    }
    let grid = match build_grid(p.length, cfg.n_nodes) {
        Ok(g) => g,
        Err(e) => return ProbeReport::skipped(e.to_string()),
    };
    let horizon = cfg.horizon_diffusion_times * p.length * p.length / p.alpha;
    let dt = horizon / cfg.steps as f64;
    let op = match assemble_system(p, g, &grid, dt, Scheme::CrankNicolson) {
        Ok(op) => op,
        Err(e) => return ProbeReport::skipped(e.to_string()),
    };
    let pi = std::f64::consts::PI;
    let mut h = Field::from_fn(&grid, 0.0, |x| {
        0.5 * p.h_max * (0.6 + 0.4 * (pi * x / p.length).sin())
    });
    let zeros = vec![0.0; grid.n_nodes];
    let solver_cfg = SolverConfig::default();
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
    let mut values = Vec::with_capacity(cfg.steps + 1);
    values.push(lyapunov_value(&h, &grid, b4, b5));
    for _ in 0..cfg.steps {
        let inp = StepInputs {
            u_field: &zeros,
            d_field: &zeros,
            coolant_cmd: (0.0, 0.0),
            dt,
        };
        h = match step(&op, &h, &inp, &solver_cfg, &mut rng) {
            Ok(h) => h,
            Err(e) => {
                return ProbeReport {
                    ran: true,
                    note: Some(e.to_string()),
                    horizon,
                    dt,
                    dissipation: None,
                    passed: false,
                }
            }
        };
        values.push(lyapunov_value(&h, &grid, b4, b5));
    }
    let report = dissipation_check(&values, dt, &MonitorTolerance::default(), cfg.required_ratio);
    ProbeReport {
        ran: true,
        note: None,
        horizon,
        dt,
        passed: report.passed,
        dissipation: Some(report),
    }
}

/// Complete verification result for one gain set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub classification: Classification,
    pub gains: Gains,
    pub theorem1_pass: bool,
    pub theorem2_pass: bool,
    pub theorem1: Option<Theorem1Report>,
    pub theorem2: Option<Theorem2Report>,
    pub search: DesignSearch,
    pub chosen_design: Option<DesignParams>,
    pub c1: f64,
    pub c2: f64,
    pub c3: Option<f64>,
    pub c4: Option<f64>,
    pub c5: Option<f64>,
    pub kappa: Option<f64>,
    pub d_tilde1: Option<f64>,
    pub d_tilde2: Option<f64>,
    pub d_tilde3: Option<f64>,
    pub beta4: f64,
    pub beta5: f64,
    pub d1: Option<f64>,
    pub d2: Option<f64>,
    pub d3: Option<f64>,
    pub d4: Option<f64>,
    pub d5: Option<f64>,
    pub probe: Option<ProbeReport>,
}

impl Certificate {
    /// Boundary weights for the Lyapunov functional. Runs without a
    /// stability classification get zero weights, flagged by the second
    /// element being `false`.
    pub fn lyapunov_weights(&self) -> (f64, f64, bool) {
        match self.classification {
            Classification::Uncertified => (0.0, 0.0, false),
            _ => (self.beta4, self.beta5, true),
        }
    }

    /// Certificate with every derived constant missing, for open-loop runs or
    /// tests of the monitor guard paths.
    pub fn empty(gains: Gains) -> Self {
        Self {
            classification: Classification::Uncertified,
            gains,
            theorem1_pass: false,
            theorem2_pass: false,
            theorem1: None,
            theorem2: None,
            search: DesignSearch::Infeasible {
                reason: InfeasibleReason::GainClauses,
                best: None,
                best_margin: None,
                detail: "not evaluated".to_string(),
            },
            chosen_design: None,
            c1: C1,
            c2: C2,
            c3: None,
            c4: None,
            c5: None,
            kappa: None,
            d_tilde1: None,
            d_tilde2: None,
            d_tilde3: None,
            beta4: 0.0,
            beta5: 0.0,
            d1: None,
            d2: None,
            d3: None,
            d4: None,
            d5: None,
            probe: None,
        }
    }
}

/// Evaluates both theorems at the given design parameters (or at the
/// searched ones when `design` is `None`) and classifies the gain set.
pub fn certify(
    g: &Gains,
    p: &PhysicalParams,
    design: Option<&DesignParams>,
    search_cfg: &SearchConfig,
    probe_cfg: &ProbeConfig,
) -> Result<Certificate> {
    let search = find_design_params(g, p, search_cfg)?;
    let chosen = match design {
        Some(d) => {
            d.validate()?;
            Some(*d)
        }
        None => search.design().copied(),
    };

    let mut cert = Certificate::empty(*g);
    cert.search = search;
    cert.chosen_design = chosen;
    let (b4, b5) = lyapunov_weights(g, p);
    cert.beta4 = b4;
    cert.beta5 = b5;

    if let Some(dp) = chosen {
        let t1 = check_theorem1(g, p, &dp)?;
        let t2 = check_theorem2(g, p, &dp)?;
        cert.theorem1_pass = t1.status == TheoremStatus::Pass;
        cert.theorem2_pass = t2.status == TheoremStatus::Pass;
        cert.c3 = t1.c3;
        cert.c4 = Some(t1.c4);
        cert.c5 = Some(t1.c5);
        cert.kappa = t1.kappa;
        cert.d_tilde1 = Some(t2.d_tilde1);
        cert.d_tilde2 = Some(t2.d_tilde2);
        cert.d_tilde3 = Some(t2.d_tilde3);
        cert.d1 = Some(t2.d1);
        cert.d2 = Some(t2.d2);
        cert.d3 = t2.d3;
        cert.d4 = Some(t2.d4);
        cert.d5 = Some(t2.d5);
        cert.theorem1 = Some(t1);
        cert.theorem2 = Some(t2);
    }

    cert.classification = if cert.theorem1_pass && cert.theorem2_pass {
        Classification::CertifiedPissfAndIsst
    } else if !cert.theorem1_pass {
        let probe = dissipation_probe(g, p, probe_cfg);
        let passed = probe.passed;
        cert.probe = Some(probe);
        if passed {
            Classification::NumericIsstOnly
        } else {
            Classification::Uncertified
        }
    } else {
        Classification::Uncertified
    };
    Ok(cert)
}

/// Three-way classification with the default search and probe settings.
pub fn classify(g: &Gains, p: &PhysicalParams) -> Result<Classification> {
    Ok(certify(g, p, None, &SearchConfig::default(), &ProbeConfig::default())?.classification)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_params(k: f64) -> PhysicalParams {
        PhysicalParams {
            alpha: 1.0,
            k_bc: k,
            length: 1.0,
            heat_scale: 0.0,
            t_desired: 298.0,
            h_max: 15.0,
        }
    }

    fn example_gains() -> Gains {
        Gains::symmetric(0.5, -0.4, -0.1)
    }

    #[test]
    fn theorem1_worked_example() {
        let dp = DesignParams::from_arrays([1.0, 1.0, 0.2, 0.2, 2.0], [1.0; 4]);
        let r = check_theorem1(&example_gains(), &unit_params(1.0), &dp).unwrap();
        assert!(r.gain_clauses.iter().all(|c| c.pass));
        assert_relative_eq!(r.gamma_condition.lhs, 0.7, epsilon = 1e-12);
        assert!(r.gamma_condition.pass);
        assert_eq!(r.status, TheoremStatus::Pass);
        assert_relative_eq!(r.c3.unwrap(), 2.02, epsilon = 1e-12);
        assert_relative_eq!(r.kappa.unwrap(), 30.3, epsilon = 1e-10);
        assert_relative_eq!(r.c4, 6.0, epsilon = 1e-12);
        assert_eq!((r.c1, r.c2), (1.5, 0.5));
        assert_eq!(r.c3_note, "as-printed");
    }

    #[test]
    fn rate_gain_lower_bound_clause() {
        let g = Gains { mu2: -0.6, ..example_gains() };
        let clauses = gain_clauses(&g, &unit_params(1.0));
        let c = clauses.iter().find(|c| c.name.starts_with("(mu1")).unwrap();
        assert!(!c.pass);
        let g = Gains { mu2: -0.5, ..example_gains() };
        assert!(gain_clauses_hold(&g, &unit_params(1.0)));
    }

    #[test]
    fn theorem2_worked_examples() {
        let p = unit_params(1.0);
        let dp = DesignParams::from_arrays([1.0; 5], [0.3, 0.3, 1.0, 1.0]);
        let r = check_theorem2(&example_gains(), &p, &dp).unwrap();
        assert_relative_eq!(r.d_tilde2, 0.3, epsilon = 1e-12);
        assert_relative_eq!(r.d_tilde1, 0.6, epsilon = 1e-12);
        assert_relative_eq!(r.beta4, 0.4, epsilon = 1e-12);
        assert_eq!(r.status, TheoremStatus::Pass);
        assert_relative_eq!(r.d1, 0.2, epsilon = 1e-12);
        assert_relative_eq!(r.d2, 0.5, epsilon = 1e-12);
        assert_relative_eq!(r.d3.unwrap(), 2.0 * 0.3_f64.min(0.3 / 0.4), epsilon = 1e-12);
        assert_relative_eq!(r.d4, 1.0 / 0.6, epsilon = 1e-12);
    }

    #[test]
    fn theorem2_not_applicable_outside_gain_clauses() {
        let dp = DesignParams::from_arrays([1.0; 5], [0.3, 0.3, 1.0, 1.0]);
        let r = check_theorem2(&Gains::stc_default(), &unit_params(1.0), &dp).unwrap();
        assert_eq!(r.status, TheoremStatus::NotApplicable);
    }

    #[test]
    fn nonpositive_design_params_rejected() {
        let dp = DesignParams::from_arrays([1.0, 0.0, 1.0, 1.0, 1.0], [1.0; 4]);
        assert!(matches!(
            check_theorem1(&example_gains(), &unit_params(1.0), &dp),
            Err(Error::Validation { .. })
        ));
        let dp = DesignParams::from_arrays([1.0; 5], [1.0, 1.0, -1.0, 1.0]);
        assert!(check_theorem2(&example_gains(), &unit_params(1.0), &dp).is_err());
    }

    #[test]
    fn grid_has_exact_endpoints() {
        let grid = SearchConfig::default().grid();
        assert_eq!(grid.len(), 25);
        assert_eq!(grid[0], 1e-3);
        assert_eq!(grid[24], 1e3);
        assert_relative_eq!(grid[12], 1.0, epsilon = 1e-12);
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn search_infeasible_cases() {
        let p = PhysicalParams::battery_default();
        let cfg = SearchConfig::default();
        let g = Gains { mu3: 0.1, ..Gains::stsfc_default() };
        match find_design_params(&g, &p, &cfg).unwrap() {
            DesignSearch::Infeasible { reason, detail, .. } => {
                assert_eq!(reason, InfeasibleReason::GainClauses);
                assert!(detail.contains("mu3 < 0"));
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
        let r = find_design_params(&Gains::zero(), &p, &cfg).unwrap();
        assert!(!r.is_feasible());
    }

    #[test]
    fn shipped_safety_gains_are_certified() {
        let p = PhysicalParams::battery_default();
        let cert = certify(
            &Gains::stsfc_default(),
            &p,
            None,
            &SearchConfig::default(),
            &ProbeConfig::default(),
        )
        .unwrap();
        assert_eq!(cert.classification, Classification::CertifiedPissfAndIsst);
        for v in [cert.d_tilde1, cert.d_tilde2, cert.d_tilde3, cert.c3, cert.c4, cert.c5, cert.kappa, cert.d3] {
            assert!(v.unwrap() > 0.0);
        }
        assert_relative_eq!(cert.kappa.unwrap(), 15.0 * cert.c3.unwrap());
        assert!(cert.probe.is_none());
    }

    #[test]
    fn gross_violations_are_uncertified() {
        let g = Gains { mu1: 10.0, mu2: 1.0, mu3: 5.0, beta1: 10.0, beta2: 1.0, beta3: 5.0 };
        assert_eq!(classify(&g, &PhysicalParams::battery_default()).unwrap(), Classification::Uncertified);
    }

    #[test]
    fn design_search_is_deterministic() {
        let p = PhysicalParams::battery_default();
        let a = find_design_params(&Gains::stsfc_default(), &p, &SearchConfig::default()).unwrap();
        let b = find_design_params(&Gains::stsfc_default(), &p, &SearchConfig::default()).unwrap();
        assert_eq!(a, b);
    }
}
