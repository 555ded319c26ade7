//! How the bundled incident fixtures were tuned, kept as executable checks.
//!
//! Each detection is driven by a service entering the degraded set, not by a
//! slow drift of evidence across the threshold. A ramp starting at the
//! baseline with slope `k` first exceeds `threshold * baseline` at
//! `ceil(t0 + (threshold - 1) * baseline / k)`. Slopes are chosen so that the
//! crossing tick sits 2% above threshold while the tick before sits below it
//! by more than the noise amplitude.
//!
//! Priors are then set so that with only m7 and m5 degraded the static
//! switchover posterior stays inside [0.05, 0.35], and m11 (prior 0.3)
//! entering the set pushes it over. After two replays the adaptive learner
//! has raised P(SO | m7) to 0.5212, enough for m7 alone.

use geoha_core::bundled;
use geoha_core::pipeline::PipelineConfig;
use geoha_core::simulator::{run_scenario, run_sequence, InjectionKind, Scenario, ScenarioRun, Strategy};
use geoha_core::Target;

fn ramp_crossings(s: &Scenario) -> Vec<(String, f64, f64, f64)> {
    let baselines = bundled::baselines().unwrap();
    s.injections
        .iter()
        .filter(|i| i.kind == InjectionKind::MetricRamp)
        .map(|i| {
            let b = &baselines[i.params.metric.as_ref().unwrap()];
            let slope = i.params.slope.unwrap();
            let dt = ((b.degrade_threshold - 1.0) * b.baseline_value / slope).ceil();
            let t = i.time + dt;
            let at = (b.baseline_value + slope * dt) / b.baseline_value;
            let before = (b.baseline_value + slope * (dt - 1.0)) / b.baseline_value;
            (i.service_id.to_string(), t, at, before)
        })
        .collect()
}

#[test]
fn ramps_cross_on_the_planned_ticks() {
    let s = bundled::scenario("event3").unwrap();
    let crossings = ramp_crossings(&s);
    let ticks: Vec<(&str, f64)> = crossings.iter().map(|(svc, t, _, _)| (svc.as_str(), *t)).collect();
    assert_eq!(ticks, [("m7", 730.0), ("m5", 740.0), ("m11", 745.0)]);
    for (svc, _, at, before) in &crossings {
        // noise cannot move either neighbour across the threshold
        assert!(at * (1.0 - s.noise) > 1.5, "{svc}");
        assert!(before * (1.0 + s.noise) < 1.5, "{svc}");
    }
}

fn so_posterior(run: &ScenarioRun, t: f64) -> f64 {
    run.posteriors
        .iter()
        .find(|r| r.t == t && r.target == Target::Switchover)
        .unwrap()
        .posterior
}

#[test]
fn static_trajectory() {
    let mut p = bundled::persona("cal", PipelineConfig::default()).unwrap();
    let s = bundled::scenario("event3").unwrap().with_strategy(Strategy::Static);
    let run = run_scenario(&s, &mut p).unwrap();
    let frozen = [(729.0, 0.05), (730.0, 0.100732505046), (744.0, 0.314831500700), (745.0, 0.679286270124)];
    for (t, expected) in frozen {
        let got = so_posterior(&run, t);
        assert!((got - expected).abs() < 1e-9, "t={t}: {got}");
    }
    let upper = PipelineConfig::default().thresholds.upper();
    // the last tick before detection stays clear of the switchover edge
    assert!(upper - so_posterior(&run, 744.0) > 0.03);
}

#[test]
fn adaptive_trajectory() {
    let mut p = bundled::persona("cal", PipelineConfig::default()).unwrap();
    let runs = run_sequence(&bundled::event_sequence().unwrap(), &mut p).unwrap();
    let run = &runs[2];
    let upper = PipelineConfig::default().thresholds.upper();
    assert_eq!(so_posterior(run, 729.0), 0.05);
    let at = so_posterior(run, 730.0);
    assert!((at - 0.554101683113).abs() < 1e-9, "{at}");
    assert!(at - upper > 0.15);
    // event 1 has learned nothing yet when its switchover fires
    let fixed = run_scenario(
        &bundled::scenario("event1").unwrap().with_strategy(Strategy::Static),
        &mut bundled::persona("cal2", PipelineConfig::default()).unwrap(),
    )
    .unwrap();
    for t in 100..=145 {
        let t = f64::from(t);
        assert_eq!(so_posterior(&runs[0], t), so_posterior(&fixed, t), "t={t}");
    }
    assert_eq!(runs[0].metrics.detection_time, Some(-5.0));
}
