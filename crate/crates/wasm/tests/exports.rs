use rideshare_core::cli::serialize_scenario;
use rideshare_core::corpus;
use rideshare_wasm::{audit, example_scenarios, manipulation_curve, simulate};
use serde_json::Value;

#[test]
fn threshold_curve_jumps_at_the_gate() {
    let out: Value = serde_json::from_str(&manipulation_curve("commit", -2.0, 5.0, 0.6, 0.5, 0.8, 21).unwrap()).unwrap();
    assert_eq!(out["truthful_utility"].as_f64().unwrap(), 0.0);
    let curve = out["curve"].as_array().unwrap();
    assert_eq!(curve.len(), 21);
    let at = |k: usize| curve[k]["utility"].as_f64().unwrap();
    assert_eq!(at(11), 0.0);
    assert!((at(12) - 1.2).abs() < 1e-12);
    assert!(!curve[11]["shares"].as_bool().unwrap());
    assert!(curve[12]["shares"].as_bool().unwrap());
}

#[test]
fn linear_curve_is_maximized_by_truth_under_commit() {
    let out: Value = serde_json::from_str(&manipulation_curve("commit", -2.0, 5.0, 0.0, 0.5, 0.8, 41).unwrap()).unwrap();
    let truth = out["truthful_utility"].as_f64().unwrap();
    for point in out["curve"].as_array().unwrap() {
        assert!(point["utility"].as_f64().unwrap() <= truth + 1e-9);
    }
}

#[test]
fn curve_rejects_bad_input() {
    assert!(manipulation_curve("vcg", -2.0, 5.0, 0.0, 0.5, 0.8, 21).is_err());
    assert!(manipulation_curve("commit", -2.0, 5.0, 0.0, 1.5, 0.8, 21).is_err());
    assert!(manipulation_curve("commit", -2.0, 5.0, 0.0, 0.5, 0.8, 1).is_err());
}

#[test]
fn audit_reports_witness() {
    let text = serialize_scenario(&corpus::threshold_pair(-2.0, 5.0, 0.6, 0.5, 0.8));
    let out: Value = serde_json::from_str(&audit(&text, "commit", "expost", 21).unwrap()).unwrap();
    assert_eq!(out["verdict"], "violated");
    assert!((out["witness"]["gain"].as_f64().unwrap() - 1.2).abs() < 1e-12);
    assert!(audit(&text, "commit", "sometimes", 21).is_err());
}

#[test]
fn simulate_summarizes() {
    let text = serialize_scenario(&corpus::linear_pair(-2.0, 5.0, 0.5, 0.8));
    let out: Value = serde_json::from_str(&simulate(&text, "commit", 2000, 1).unwrap()).unwrap();
    assert_eq!(out["summary"]["trials"], 2000);
    assert_eq!(out["payments"][0], "(-4, 0)");
    assert!(simulate(&text, "commit", 0, 1).is_err());
}

#[test]
fn examples_parse() {
    let map: std::collections::BTreeMap<String, String> = serde_json::from_str(&example_scenarios()).unwrap();
    assert!(map.contains_key("threshold-pair"));
    for text in map.values() {
        rideshare_core::cli::parse_scenario(text).unwrap();
    }
}
