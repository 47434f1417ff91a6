//! Browser bindings for the rideshare mechanisms. Every export takes and
//! returns JSON strings; the plain-Rust functions underneath are what the
//! native tests exercise.

use serde_json::json;
use wasm_bindgen::prelude::*;

use rideshare_core::audit::{audit_dominant, audit_expost, DeviationSpace};
use rideshare_core::cli::parse_scenario;
use rideshare_core::corpus;
use rideshare_core::payments::{expected_utility, Mechanism};
use rideshare_core::simulate::run_trials;
use rideshare_core::CommuterId;

/// Largest trial count the page may request.
pub const MAX_TRIALS: u64 = 200_000;

fn mechanism(name: &str) -> Result<Mechanism, String> {
    name.parse().map_err(|e: rideshare_core::payments::UnknownMechanism| e.to_string())
}

/// Driver's expected utility as a function of the probability she reports,
/// in the two-commuter driver/rider scenario. `gate` > 0 makes the rider's
/// value conditional on the reported driver probability reaching it.
pub fn manipulation_curve(
    mechanism_name: &str,
    alpha: f64,
    beta: f64,
    gate: f64,
    p_driver: f64,
    p_rider: f64,
    points: usize,
) -> Result<String, String> {
    let m = mechanism(mechanism_name)?;
    if !(2..=1001).contains(&points) {
        return Err("points must be between 2 and 1001".into());
    }
    for (name, p) in [("p_driver", p_driver), ("p_rider", p_rider), ("gate", gate)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(format!("{name} must lie in [0, 1]"));
        }
    }
    let s = if gate > 0.0 {
        corpus::threshold_pair(alpha, beta, gate, p_driver, p_rider)
    } else {
        corpus::linear_pair(alpha, beta, p_driver, p_rider)
    };
    let driver = CommuterId(0);
    let utility = |s: &rideshare_core::Scenario| {
        let sched = m.run(s);
        expected_utility(s, driver, &sched)
            .map(|u| (u + 0.0, sched.allocation.is_all_none()))
            .map_err(|e| e.to_string())
    };
    let (truthful, _) = utility(&s)?;
    let mut curve = Vec::with_capacity(points);
    for k in 0..points {
        let p_hat = k as f64 / (points - 1) as f64;
        let mut report = s.commuter(driver).true_type.clone();
        report.p_commit = p_hat;
        let (u, alone) = utility(&s.with_report(driver, report))?;
        curve.push(json!({ "p_hat": p_hat, "utility": u, "shares": !alone }));
    }
    Ok(json!({ "mechanism": m, "truthful_utility": truthful, "curve": curve }).to_string())
}

pub fn audit(scenario_json: &str, mechanism_name: &str, notion: &str, grid: usize) -> Result<String, String> {
    let m = mechanism(mechanism_name)?;
    let s = parse_scenario(scenario_json).map_err(|e| e.to_string())?;
    if !(2..=101).contains(&grid) {
        return Err("grid must be between 2 and 101".into());
    }
    let space = DeviationSpace::with_grid(grid);
    let report = match notion {
        "expost" => audit_expost(&s, m, &space),
        "dominant" => audit_dominant(&s, m, &space, &space).map_err(|e| e.to_string())?,
        other => return Err(format!("unknown notion `{other}`")),
    };
    serde_json::to_string(&report).map_err(|e| e.to_string())
}

pub fn simulate(scenario_json: &str, mechanism_name: &str, trials: u64, seed: u64) -> Result<String, String> {
    let m = mechanism(mechanism_name)?;
    let s = parse_scenario(scenario_json).map_err(|e| e.to_string())?;
    if trials > MAX_TRIALS {
        return Err(format!("at most {MAX_TRIALS} trials"));
    }
    let sched = m.run(&s);
    let run = run_trials(&s, &sched, trials, seed).map_err(|e| e.to_string())?;
    let expected: Vec<Option<f64>> = s.ids().map(|i| expected_utility(&s, i, &sched).ok()).collect();
    Ok(json!({
        "allocation": sched.allocation.to_string(),
        "payments": sched.entries.iter().map(ToString::to_string).collect::<Vec<_>>(),
        "expected_utility": expected,
        "summary": run.summary,
    })
    .to_string())
}

#[wasm_bindgen(js_name = manipulationCurve)]
pub fn manipulation_curve_js(
    mechanism: &str,
    alpha: f64,
    beta: f64,
    gate: f64,
    p_driver: f64,
    p_rider: f64,
    points: usize,
) -> Result<String, JsError> {
    manipulation_curve(mechanism, alpha, beta, gate, p_driver, p_rider, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = audit)]
pub fn audit_js(scenario_json: &str, mechanism: &str, notion: &str, grid: usize) -> Result<String, JsError> {
    audit(scenario_json, mechanism, notion, grid).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = simulate)]
pub fn simulate_js(scenario_json: &str, mechanism: &str, trials: u32, seed: u32) -> Result<String, JsError> {
    simulate(scenario_json, mechanism, u64::from(trials), u64::from(seed)).map_err(|e| JsError::new(&e))
}

/// The bundled example scenarios, keyed by name.
#[wasm_bindgen(js_name = exampleScenarios)]
pub fn example_scenarios() -> String {
    let files: Vec<(String, String)> = corpus::all_scenarios()
        .iter()
        .map(|s| (s.name().to_owned(), rideshare_core::cli::serialize_scenario(s)))
        .collect();
    serde_json::to_string(&files.into_iter().collect::<std::collections::BTreeMap<_, _>>()).expect("strings serialize")
}
