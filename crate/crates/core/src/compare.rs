//! Runs one scenario under several controllers and tabulates the outcomes.
//!
//! Every run uses the scenario seed unchanged, so all controllers face the
//! same process and measurement noise. Runs execute on scoped threads; a
//! failing run is reported in its row and does not stop the others.

use std::path::{Path, PathBuf};
use std::thread;

use serde::Serialize;

use crate::certify::Classification;
use crate::control::ControllerVariant;
use crate::error::{Error, Result};
use crate::output::{write_json, write_trajectory, WrittenRun};
use crate::scenario::Scenario;
use crate::simulate::{run_scenario, RunOutput};

pub const COMPARISON_FILE: &str = "comparison.json";

#[derive(Debug)]
pub struct ControllerRun {
    pub variant: ControllerVariant,
    pub result: Result<RunOutput>,
}

#[derive(Debug)]
pub struct ComparisonBundle {
    pub scenario_name: String,
    pub seed: u64,
    /// In the order the controllers were requested.
    pub runs: Vec<ControllerRun>,
}

/// One line of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub controller: String,
    pub label: String,
    pub ok: bool,
    pub error: Option<String>,
    pub classification: Option<Classification>,
    pub max_temperature: Option<f64>,
    pub max_temperature_mid: Option<f64>,
    pub max_temperature_xl: Option<f64>,
    pub first_unsafe_time: Option<f64>,
    pub min_coolant_temperature: Option<f64>,
    pub soc_zero_crossing: Option<f64>,
    pub condition2_fraction: Option<f64>,
    pub vcond2_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonTable {
    pub scenario_name: String,
    pub seed: u64,
    pub unsafe_threshold_k: f64,
    pub rows: Vec<ComparisonRow>,
}

pub fn parse_controller_list(text: &str) -> Result<Vec<ControllerVariant>> {
    let list = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<ControllerVariant>())
        .collect::<Result<Vec<_>>>()?;
    check_controllers(&list)?;
    Ok(list)
}

fn check_controllers(list: &[ControllerVariant]) -> Result<()> {
    if list.is_empty() {
        return Err(Error::validation("controllers", "at least one controller is required"));
    }
    for (i, v) in list.iter().enumerate() {
        if list[..i].contains(v) {
            return Err(Error::validation("controllers", format!("`{}` listed twice", v.name())));
        }
    }
    Ok(())
}

pub fn run_compare(base: &Scenario, controllers: &[ControllerVariant]) -> Result<ComparisonBundle> {
    check_controllers(controllers)?;
    let scenarios: Vec<Scenario> = controllers.iter().map(|v| base.with_variant(*v)).collect();
    let results: Vec<Result<RunOutput>> = thread::scope(|scope| {
        let handles: Vec<_> = scenarios.iter().map(|s| scope.spawn(move || run_scenario(s))).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::numerical("controller run panicked"))))
            .collect()
    });
    Ok(ComparisonBundle {
        scenario_name: base.name.clone(),
        seed: base.seed,
        runs: controllers
            .iter()
            .zip(results)
            .map(|(variant, result)| ControllerRun {
                variant: *variant,
                result,
            })
            .collect(),
    })
}

impl ComparisonBundle {
    pub fn run(&self, v: ControllerVariant) -> Option<&RunOutput> {
        self.runs.iter().find(|r| r.variant == v).and_then(|r| r.result.as_ref().ok())
    }

    pub fn all_ok(&self) -> bool {
        self.runs.iter().all(|r| r.result.is_ok())
    }

    pub fn table(&self, base: &Scenario) -> ComparisonTable {
        let rows = self
            .runs
            .iter()
            .map(|r| {
                let mut row = ComparisonRow {
                    controller: r.variant.name().to_string(),
                    label: r.variant.label().to_string(),
                    ok: r.result.is_ok(),
                    error: None,
                    classification: None,
                    max_temperature: None,
                    max_temperature_mid: None,
                    max_temperature_xl: None,
                    first_unsafe_time: None,
                    min_coolant_temperature: None,
                    soc_zero_crossing: None,
                    condition2_fraction: None,
                    vcond2_fraction: None,
                };
                match &r.result {
                    Ok(out) => {
                        let s = &out.summary;
                        row.classification = Some(s.classification);
                        row.max_temperature = Some(s.max_temperature);
                        row.max_temperature_mid = Some(s.max_temperature_mid);
                        row.max_temperature_xl = Some(s.max_temperature_xl);
                        row.first_unsafe_time = s.first_unsafe_time;
                        row.min_coolant_temperature = Some(s.min_coolant_temperature);
                        row.soc_zero_crossing = s.soc_zero_crossing;
                        row.condition2_fraction = s.condition2_fraction;
                        row.vcond2_fraction = s.vcond2_fraction;
                    }
                    Err(e) => row.error = Some(e.to_string()),
                }
                row
            })
            .collect();
        ComparisonTable {
            scenario_name: self.scenario_name.clone(),
            seed: self.seed,
            unsafe_threshold_k: base.params.t_desired + base.params.h_max,
            rows,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WrittenComparison {
    pub comparison: PathBuf,
    pub runs: Vec<(ControllerVariant, WrittenRun)>,
}

/// Writes `<out>/<controller>/{trajectory.csv,summary.json}` for every
/// successful run and `<out>/comparison.json` for the table.
pub fn write_comparison(bundle: &ComparisonBundle, base: &Scenario, out_dir: &Path) -> Result<WrittenComparison> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut runs = Vec::new();
    for r in &bundle.runs {
        if let Ok(out) = &r.result {
            runs.push((r.variant, write_trajectory(out, &out_dir.join(r.variant.name()))?));
        }
    }
    let comparison = out_dir.join(COMPARISON_FILE);
    write_json(&bundle.table(base), &comparison)?;
    Ok(WrittenComparison { comparison, runs })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn controller_lists() {
        use ControllerVariant::*;
        assert_eq!(
            parse_controller_list("oc, stc,stsfc").unwrap(),
            vec![OpenLoop, StabilityOnly, StabilityAndSafety]
        );
        assert!(parse_controller_list("").is_err());
        assert!(parse_controller_list("oc,oc").is_err());
        assert!(parse_controller_list("oc,pid").is_err());
    }
}
