use std::path::Path;

use thermoguard::compare::{run_compare, write_comparison, COMPARISON_FILE};
use thermoguard::control::ControllerVariant::{self, *};
use thermoguard::scenario::{parse_config, Scenario};

fn scenario(text: &str) -> Scenario {
    parse_config(text, Path::new("t.json")).unwrap().resolve(Path::new(".")).unwrap()
}

#[test]
fn rows_follow_request_order_and_share_noise() {
    let s = scenario(r#"{"horizon": 20, "current_profile": {"constant_a": 200}}"#);
    let order = [StabilityAndSafety, OpenLoop, StabilityOnly];
    let bundle = run_compare(&s, &order).unwrap();
    let got: Vec<ControllerVariant> = bundle.runs.iter().map(|r| r.variant).collect();
    assert_eq!(got, order);
    assert!(bundle.all_ok());
    // Identical seeds mean identical measurement noise, so the open-loop
    // trajectory equals a standalone run.
    let alone = thermoguard::simulate::simulate(&s.with_variant(OpenLoop)).unwrap();
    assert_eq!(bundle.run(OpenLoop).unwrap().trajectory.fields, alone.fields);
}

#[test]
fn failing_run_does_not_abort_siblings() {
    // In exact mode the rate gains enter the step matrix; a large positive
    // rate gain makes the boundary mass negative for St-C only.
    let s = scenario(
        r#"{"horizon": 5, "controller": {"rate_mode": "exact",
            "stc_gains": {"mu1": -0.3, "mu2": 100, "mu3": 0.3, "beta1": -0.3, "beta2": -0.5, "beta3": 0.3}}}"#,
    );
    let bundle = run_compare(&s, &ControllerVariant::ALL).unwrap();
    assert!(bundle.runs[0].result.is_ok());
    assert!(bundle.runs[2].result.is_ok());
    let err = bundle.runs[1].result.as_ref().unwrap_err();
    assert_eq!(err.exit_code(), 3);

    let dir = tempfile::tempdir().unwrap();
    let written = write_comparison(&bundle, &s, dir.path()).unwrap();
    assert_eq!(written.runs.len(), 2);
    assert!(dir.path().join("oc/trajectory.csv").exists());
    assert!(!dir.path().join("stc").exists());
    let table: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(COMPARISON_FILE)).unwrap()).unwrap();
    let rows = table["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[1]["ok"], false);
    assert!(rows[1]["error"].as_str().unwrap().contains("boundary mass"));
    assert_eq!(table["unsafe_threshold_k"], 313.0);
}

#[test]
fn empty_controller_list_is_rejected() {
    let s = scenario("{}");
    assert!(run_compare(&s, &[]).is_err());
}
