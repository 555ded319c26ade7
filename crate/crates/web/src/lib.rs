//! Browser bindings for the demo page. Every export takes plain numbers or
//! strings and hands back a JSON string; the `*_json` functions hold the logic
//! so they can be tested without a JS host.

use geoha_core::inference::{bayesian_update, noisy_or, EvidenceVector};
use geoha_core::pipeline::PipelineConfig;
use geoha_core::policy::{decide, Decision, DecisionState, Thresholds};
use geoha_core::simulator::{run_sequence, ScenarioRun, Strategy, SwitchoverMetrics};
use geoha_core::{bundled, Error, Result, Target};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
struct RunView {
    scenario: String,
    strategy: Strategy,
    hard_failure: Option<f64>,
    switchover_at: Option<f64>,
    metrics: SwitchoverMetrics,
    /// `[t, posterior]` for the switchover node.
    posterior: Vec<[f64; 2]>,
}

#[derive(Debug, Serialize)]
struct EdgeView {
    source: String,
    target: String,
    p: f64,
    n_obs: u64,
}

#[derive(Debug, Serialize)]
struct SimulationView {
    upper: f64,
    lower: f64,
    runs: Vec<RunView>,
    cpts: Vec<EdgeView>,
}

fn run_view(run: &ScenarioRun) -> Result<RunView> {
    let scenario = bundled::scenario(&run.scenario)?;
    Ok(RunView {
        scenario: run.scenario.clone(),
        strategy: run.strategy,
        hard_failure: scenario.hard_failure(),
        switchover_at: run
            .timeline
            .first_time(|e| matches!(e, geoha_core::simulator::TimelineEvent::SwitchoverStart)),
        metrics: run.metrics.clone(),
        posterior: run
            .posteriors
            .iter()
            .filter(|r| r.target == Target::Switchover)
            .map(|r| [r.t, r.posterior])
            .collect(),
    })
}

/// Run a bundled scenario, or `sequence` for events 1 to 3 replayed through
/// one persona so the adaptive strategy carries what it learned forward.
pub fn simulate_json(scenario: &str, strategy: &str, c_fp: f64, c_fn: f64, delta: f64) -> Result<String> {
    let strategy: Strategy = strategy.parse()?;
    let thresholds = Thresholds::from_costs(c_fp, c_fn, delta)?;
    let scenarios = if scenario == "sequence" {
        bundled::event_sequence()?
    } else {
        vec![bundled::scenario(scenario)?]
    };
    let scenarios: Vec<_> = scenarios.into_iter().map(|s| s.with_strategy(strategy)).collect();
    let cfg = PipelineConfig {
        thresholds,
        ..PipelineConfig::default()
    };
    let mut persona = bundled::persona("demo", cfg)?;
    let runs = run_sequence(&scenarios, &mut persona)?;
    let view = SimulationView {
        upper: thresholds.upper(),
        lower: thresholds.lower(),
        runs: runs.iter().map(run_view).collect::<Result<_>>()?,
        cpts: persona
            .pipeline()
            .cpts()
            .iter()
            .map(|(target, source, e)| EdgeView {
                source: source.to_string(),
                target: target.to_string(),
                p: e.probability,
                n_obs: e.n_obs,
            })
            .collect(),
    };
    Ok(serde_json::to_string(&view)?)
}

#[derive(Debug, Serialize)]
struct RiskView {
    p_eff: f64,
    likelihood: f64,
    posterior: f64,
}

fn parse_numbers(text: &str, what: &str) -> Result<Vec<f64>> {
    serde_json::from_str(text).map_err(|e| Error::Config(format!("{what}: {e}")))
}

/// Noisy-OR over `conditionals` (a JSON array) followed by the odds update
/// with the given likelihood `ratios`.
pub fn risk_json(base_prior: f64, conditionals: &str, ratios: &str) -> Result<String> {
    if !(0.0..1.0).contains(&base_prior) {
        return Err(Error::Config(format!("base prior must lie in [0, 1), got {base_prior}")));
    }
    let ps = parse_numbers(conditionals, "conditionals")?;
    if let Some(p) = ps.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Config(format!("conditional {p} is not a probability")));
    }
    let ratios = parse_numbers(ratios, "likelihood ratios")?;
    let names: Vec<String> = (0..ratios.len()).map(|i| format!("evidence[{i}]")).collect();
    let evidence = EvidenceVector::from_ratios(names.iter().map(String::as_str).zip(ratios))?;
    let p_eff = noisy_or(base_prior, ps);
    let view = RiskView {
        p_eff,
        likelihood: evidence.combined(),
        posterior: bayesian_update(p_eff, &evidence),
    };
    Ok(serde_json::to_string(&view)?)
}

#[derive(Debug, Serialize)]
struct HysteresisView {
    tau: f64,
    upper: f64,
    lower: f64,
    decisions: Vec<Decision>,
    transitions: usize,
}

/// Feed a posterior series through the hysteresis rule, starting in standby.
pub fn hysteresis_json(posteriors: &str, c_fp: f64, c_fn: f64, delta: f64) -> Result<String> {
    let th = Thresholds::from_costs(c_fp, c_fn, delta)?;
    let series = parse_numbers(posteriors, "posteriors")?;
    let mut state = DecisionState::standby(0.0);
    let mut decisions = Vec::with_capacity(series.len());
    let mut transitions = 0;
    for (i, p) in series.into_iter().enumerate() {
        state = decide(p, &state, &th, i as f64);
        transitions += usize::from(state.transitioned());
        decisions.push(state.decision);
    }
    let view = HysteresisView {
        tau: th.tau_active,
        upper: th.upper(),
        lower: th.lower(),
        decisions,
        transitions,
    };
    Ok(serde_json::to_string(&view)?)
}

fn js(r: Result<String>) -> std::result::Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn simulate(scenario: &str, strategy: &str, c_fp: f64, c_fn: f64, delta: f64) -> std::result::Result<String, JsError> {
    js(simulate_json(scenario, strategy, c_fp, c_fn, delta))
}

#[wasm_bindgen]
pub fn risk(base_prior: f64, conditionals: &str, ratios: &str) -> std::result::Result<String, JsError> {
    js(risk_json(base_prior, conditionals, ratios))
}

#[wasm_bindgen]
pub fn hysteresis(posteriors: &str, c_fp: f64, c_fn: f64, delta: f64) -> std::result::Result<String, JsError> {
    js(hysteresis_json(posteriors, c_fp, c_fn, delta))
}

#[wasm_bindgen]
pub fn scenario_names() -> String {
    serde_json::to_string(&bundled::SCENARIO_NAMES).expect("static names serialize")
}
