use proptest::prelude::*;
use rand::rngs::mock::StepRng;

use thermoguard::anomalies::{fault_field, update_soc, FaultSpec, SocState};
use thermoguard::certify::{
    certify, check_theorem1, check_theorem2, find_design_params, Classification, DesignSearch, ProbeConfig,
    SearchConfig, TheoremStatus,
};
use thermoguard::control::Gains;
use thermoguard::functionals::{agmon_check, MonitorTolerance};
use thermoguard::grid::{build_grid, s_norm_sq, Field, PhysicalParams};
use thermoguard::output::format_float;
use thermoguard::profile::CurrentProfile;
use thermoguard::solver::{assemble_system, step, Scheme, SolverConfig, StepInputs};

fn quiet(scheme: Scheme) -> SolverConfig {
    SolverConfig {
        scheme,
        process_noise_std: 0.0,
        rng_seed: 0,
    }
}

#[allow(clippy::too_many_arguments)]
fn advance(p: &PhysicalParams, g: &Gains, n: usize, dt: f64, scheme: Scheme, h0: Vec<f64>, source: f64, steps: usize) -> Vec<f64> {
    let grid = build_grid(p.length, n).unwrap();
    let op = assemble_system(p, g, &grid, dt, scheme).unwrap();
    let u = vec![source; n];
    let d = vec![0.0; n];
    let inp = StepInputs {
        u_field: &u,
        d_field: &d,
        coolant_cmd: (0.0, 0.0),
        dt,
    };
    let mut h = Field::new(h0, 0.0).unwrap();
    let mut rng = StepRng::new(0, 0);
    for _ in 0..steps {
        h = step(&op, &h, &inp, &quiet(scheme), &mut rng).unwrap();
    }
    h.values
}

fn scheme() -> impl Strategy<Value = Scheme> {
    prop_oneof![Just(Scheme::CrankNicolson), Just(Scheme::BackwardEuler)]
}

fn stabilising_gains() -> impl Strategy<Value = Gains> {
    (-2.0..0.9f64, 0.05..0.95f64, -2.0..-0.01f64, -2.0..0.9f64, 0.05..0.95f64, -2.0..-0.01f64).prop_map(
        |(m1, s2, m3, b1, t2, b3)| {
            let a = PhysicalParams::battery_default().alpha;
            Gains {
                mu1: m1,
                mu2: s2 * (m1 - 1.0) / a,
                mu3: m3,
                beta1: b1,
                beta2: t2 * (b1 - 1.0) / a,
                beta3: b3,
            }
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn agmon_holds_for_smooth_fields(
        half in 4usize..80,
        length in 0.1..10.0f64,
        coeffs in prop::collection::vec(-10.0..10.0f64, 1..6),
        offset in -10.0..10.0f64,
    ) {
        let g = build_grid(length, 2 * half + 1).unwrap();
        let h = Field::from_fn(&g, 0.0, |x| {
            offset + coeffs.iter().enumerate().map(|(j, c)| c * (j as f64 * std::f64::consts::PI * x / length).cos()).sum::<f64>()
        });
        prop_assert!(agmon_check(&h, &g).holds);
    }

    #[test]
    fn zero_state_is_a_fixed_point(g in stabilising_gains(), dt in 1e-3..5.0f64, s in scheme()) {
        let p = PhysicalParams::battery_default();
        let out = advance(&p, &g, 21, dt, s, vec![0.0; 21], 0.0, 5);
        prop_assert!(out.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn step_is_linear(g in stabilising_gains(), a in -3.0..3.0f64, b in -3.0..3.0f64, seed in 0u64..1000) {
        let p = PhysicalParams::battery_default();
        let n = 15;
        let f1: Vec<f64> = (0..n).map(|i| ((i as u64 * 7 + seed) % 11) as f64 - 5.0).collect();
        let f2: Vec<f64> = (0..n).map(|i| ((i as u64 * 3 + 2 * seed) % 13) as f64 - 6.0).collect();
        let mix: Vec<f64> = f1.iter().zip(&f2).map(|(x, y)| a * x + b * y).collect();
        let r1 = advance(&p, &g, n, 0.5, Scheme::CrankNicolson, f1, 0.0, 1);
        let r2 = advance(&p, &g, n, 0.5, Scheme::CrankNicolson, f2, 0.0, 1);
        let rm = advance(&p, &g, n, 0.5, Scheme::CrankNicolson, mix, 0.0, 1);
        for i in 0..n {
            let expect = a * r1[i] + b * r2[i];
            prop_assert!((rm[i] - expect).abs() <= 1e-9 * (1.0 + expect.abs()));
        }
    }

    #[test]
    fn insulated_uniform_source_grows_linearly(q in -1.0..1.0f64, dt in 0.01..2.0f64, steps in 1usize..50, s in scheme()) {
        let p = PhysicalParams { k_bc: 0.0, ..PhysicalParams::battery_default() };
        let out = advance(&p, &Gains::zero(), 31, dt, s, vec![0.0; 31], q, steps);
        let exact = q * dt * steps as f64;
        prop_assert!(out.iter().all(|v| (v - exact).abs() <= 1e-9 * (1.0 + exact.abs())));
    }

    #[test]
    fn certified_gains_dissipate_in_closed_loop(g in stabilising_gains()) {
        let p = PhysicalParams::battery_default();
        let cert = certify(&g, &p, None, &SearchConfig::default(), &ProbeConfig::default()).unwrap();
        prop_assume!(cert.classification == Classification::CertifiedPissfAndIsst);
        let n = 21;
        let grid = build_grid(p.length, n).unwrap();
        let h0: Vec<f64> = grid.nodes().map(|x| 5.0 + 3.0 * (3.0 * x).sin()).collect();
        let first = advance(&p, &g, n, 1.0, Scheme::BackwardEuler, h0, 0.0, 1);
        let later = advance(&p, &g, n, 1.0, Scheme::BackwardEuler, first.clone(), 0.0, 200);
        let s0 = s_norm_sq(&Field::new(first, 0.0).unwrap(), &grid);
        let s1 = s_norm_sq(&Field::new(later, 0.0).unwrap(), &grid);
        prop_assert!(s1 <= s0, "{s1} > {s0}");
    }

    #[test]
    fn feasible_search_results_satisfy_both_theorems(g in stabilising_gains(), alpha_exp in -2.8..-1.0f64) {
        let p = PhysicalParams { alpha: 10f64.powf(alpha_exp), ..PhysicalParams::battery_default() };
        match find_design_params(&g, &p, &SearchConfig::default()).unwrap() {
            DesignSearch::Feasible { design, min_margin } => {
                prop_assert!(min_margin > 0.0);
                prop_assert_eq!(check_theorem1(&g, &p, &design).unwrap().status, TheoremStatus::Pass);
                prop_assert_eq!(check_theorem2(&g, &p, &design).unwrap().status, TheoremStatus::Pass);
            }
            DesignSearch::Infeasible { best, .. } => {
                if let Some(d) = best {
                    let t1 = check_theorem1(&g, &p, &d).unwrap().status;
                    let t2 = check_theorem2(&g, &p, &d).unwrap().status;
                    prop_assert!(t1 != TheoremStatus::Pass || t2 != TheoremStatus::Pass);
                }
            }
        }
    }

    #[test]
    fn certification_is_deterministic(g in stabilising_gains()) {
        let p = PhysicalParams::battery_default();
        let a = certify(&g, &p, None, &SearchConfig::default(), &ProbeConfig::default()).unwrap();
        let b = certify(&g, &p, None, &SearchConfig::default(), &ProbeConfig::default()).unwrap();
        prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn profile_integral_is_additive(
        pts in prop::collection::vec((0.1..50.0f64, 0.0..400.0f64), 2..20),
        cuts in (0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64),
    ) {
        let mut t = 0.0;
        let points: Vec<(f64, f64)> = pts.iter().map(|(dt, c)| { t += dt; (t, *c) }).collect();
        let profile = CurrentProfile::from_points(&points).unwrap();
        let span = t + 20.0;
        let mut c = [cuts.0 * span - 10.0, cuts.1 * span - 10.0, cuts.2 * span - 10.0];
        c.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let whole = profile.integral(c[0], c[2]);
        let parts = profile.integral(c[0], c[1]) + profile.integral(c[1], c[2]);
        prop_assert!((whole - parts).abs() <= 1e-9 * (1.0 + whole.abs()));
    }

    #[test]
    fn fault_heat_stays_inside_its_cell(center in 0.0..1.0f64, width in 0.01..1.0f64, half in 5usize..100) {
        let g = build_grid(1.0, 2 * half + 1).unwrap();
        let spec = FaultSpec { onset: 0.0, magnitude: 1.5, location_center: center, location_width: width };
        let (a, b) = spec.support(1.0);
        let f = fault_field(&spec, 1.0, &g);
        for (i, v) in f.values.iter().enumerate() {
            let x = g.x(i);
            if *v != 0.0 {
                prop_assert!(x >= a - 1e-9 && x <= b + 1e-9);
            } else {
                prop_assert!(x < a - 1e-12 || x > b + 1e-12);
            }
        }
    }

    #[test]
    fn coulomb_counting_is_additive(cap in 1.0..200.0f64, i1 in -300.0..300.0f64, i2 in -300.0..300.0f64, dt in 0.01..10.0f64) {
        let s = SocState::new(cap, 0.5).unwrap();
        let two = update_soc(&update_soc(&s, i1, dt), i2, dt);
        let direct = 0.5 - (i1 + i2) * dt / (3600.0 * cap);
        prop_assert!((two.soc - direct).abs() < 1e-12);
    }

    #[test]
    fn tolerance_is_monotone_in_rhs(lhs in -1e3..1e3f64, rhs in -1e3..1e3f64, bump in 0.0..1e3f64) {
        let tol = MonitorTolerance::default();
        if tol.holds(lhs, rhs) {
            prop_assert!(tol.holds(lhs, rhs + bump));
        }
    }

    #[test]
    fn floats_survive_csv_formatting(x in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        let mut s = String::new();
        format_float(&mut s, x);
        prop_assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits());
    }
}
