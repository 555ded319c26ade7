use geoha_web::{hysteresis_json, risk_json, simulate_json};
use serde_json::Value;

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn event3_alone_has_nothing_learned_yet() {
    let v = parse(simulate_json("event3", "adaptive", 3.0, 7.0, 0.05).unwrap());
    let run = &v["runs"][0];
    assert_eq!(run["hard_failure"], 750.0);
    assert_eq!(run["switchover_at"], 745.0);
    assert_eq!(run["metrics"]["total_so"], 25.0);
    assert!((v["upper"].as_f64().unwrap() - 0.35).abs() < 1e-12);
    assert_eq!(run["posterior"].as_array().unwrap().len(), 801);
}

#[test]
fn sequence_learns_across_events() {
    let v = parse(simulate_json("sequence", "adaptive", 3.0, 7.0, 0.05).unwrap());
    assert_eq!(v["runs"].as_array().unwrap().len(), 3);
    let last = &v["runs"][2];
    assert_eq!(last["switchover_at"], 730.0);
    assert_eq!(last["metrics"]["total_so"], 10.0);
    let edge = v["cpts"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["source"] == "m7" && e["target"] == "m11")
        .unwrap();
    assert_eq!(edge["n_obs"], 3);
}

#[test]
fn static_strategy_keeps_priors() {
    let v = parse(simulate_json("sequence", "static", 3.0, 7.0, 0.05).unwrap());
    assert!(v["cpts"].as_array().unwrap().iter().all(|e| e["n_obs"] == 0));
}

#[test]
fn bad_inputs_are_errors() {
    assert!(simulate_json("nope", "adaptive", 3.0, 7.0, 0.05).is_err());
    assert!(simulate_json("event3", "psychic", 3.0, 7.0, 0.05).is_err());
    assert!(simulate_json("event3", "adaptive", 3.0, 7.0, 0.5).is_err());
    assert!(risk_json(0.05, "[1.5]", "[]").is_err());
    assert!(risk_json(0.05, "[0.1]", "[0]").is_err());
    assert!(hysteresis_json("not json", 3.0, 7.0, 0.05).is_err());
}

#[test]
fn risk_calculator() {
    let v = parse(risk_json(0.05, "[0.5, 0.2]", "[]").unwrap());
    let p_eff = 1.0 - 0.95 * 0.5 * 0.8;
    assert!((v["p_eff"].as_f64().unwrap() - p_eff).abs() < 1e-12);
    assert_eq!(v["posterior"], v["p_eff"]);
    let v = parse(risk_json(0.05, "[]", "[2.0, 2.0]").unwrap());
    let odds = 0.05 / 0.95 * 4.0;
    assert!((v["posterior"].as_f64().unwrap() - odds / (1.0 + odds)).abs() < 1e-12);
    assert_eq!(v["likelihood"], 4.0);
}

#[test]
fn hysteresis_holds_inside_band() {
    let v = parse(hysteresis_json("[0.1, 0.36, 0.3, 0.26, 0.24, 0.3]", 3.0, 7.0, 0.05).unwrap());
    let d: Vec<&str> = v["decisions"].as_array().unwrap().iter().map(|d| d.as_str().unwrap()).collect();
    assert_eq!(d, ["STANDBY", "SWITCHOVER", "SWITCHOVER", "SWITCHOVER", "STANDBY", "STANDBY"]);
    assert_eq!(v["transitions"], 2);
}
