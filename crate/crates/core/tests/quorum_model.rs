use geoha_core::bundled;
use geoha_core::cascade::FailureEvent;
use geoha_core::pipeline::{PipelineConfig, PipelineEvent};
use geoha_core::policy::Decision;
use geoha_core::quorum::{step_personas, MemberId, Persona};
use geoha_core::telemetry::{TelemetrySample, Tier};
use geoha_core::verify::quorum_model_check;

#[test]
fn exhaustive_sequences_up_to_six() {
    let s = quorum_model_check(6).unwrap();
    // 6 operations, lengths 0..=6
    assert_eq!(s.sequences, (0..=6).map(|k| 6usize.pow(k)).sum::<usize>());
    assert!(s.quorum_lost_states > 0);
    assert!(s.rejoins > 0);
}

fn persona(id: &str) -> Persona {
    bundled::persona(id, PipelineConfig::default()).unwrap()
}

fn sample(svc: &str, metric: &str, value: f64, t: f64) -> PipelineEvent {
    PipelineEvent::Sample(TelemetrySample::new(svc, metric, value, t, Tier::Application))
}

/// Push every bundled metric well past its threshold.
fn storm(p: &mut Persona, t: f64) {
    p.submit(sample("m7", "latency", 300.0, t));
    p.submit(sample("m5", "error_rate", 3.0, t));
    p.submit(sample("m11", "replication_lag", 600.0, t));
}

#[test]
fn quota_defers_excess_events() {
    let mut p = persona("q");
    p.set_quota(10).unwrap();
    for i in 0..25 {
        p.submit(sample("m7", "latency", 100.0, f64::from(i)));
    }
    let tick = p.step(25.0).unwrap();
    assert_eq!((tick.processed, tick.deferred), (10, 15));
    let tick = p.step(26.0).unwrap();
    assert_eq!((tick.processed, tick.deferred), (10, 5));
    let tick = p.step(27.0).unwrap();
    assert_eq!((tick.processed, tick.deferred), (5, 0));
    assert!(p.set_quota(0).is_err());
}

#[test]
fn decision_frozen_while_quorum_lost() {
    let mut p = persona("frozen");
    storm(&mut p, 1.0);
    let tick = p.step(1.0).unwrap();
    assert_eq!(tick.decision_record().unwrap().decision, Decision::Switchover);

    p.fail_member(MemberId::Arbiter).unwrap();
    p.fail_member(MemberId::Active).unwrap();
    for t in 2..10 {
        p.submit(sample("m7", "latency", 100.0, f64::from(t)));
        let tick = p.step(f64::from(t)).unwrap();
        assert!(tick.evaluation.is_none());
        assert!(tick.leader.is_none());
        assert_eq!(p.pipeline().decision().decision, Decision::Switchover);
    }

    let synced = p.rejoin_member(MemberId::Arbiter).unwrap();
    assert_eq!(&synced, p.pipeline().cpts());
    assert_eq!(p.quorum().leader(), Some(MemberId::Standby));
    let tick = p.step(10.0).unwrap();
    assert!(tick.evaluation.is_some());
}

#[test]
fn personas_are_isolated() {
    let mut a = persona("a");
    let b = persona("b");
    let b_keys = b.pipeline().touched_keys();
    let b_cpts = b.pipeline().cpts().clone();
    let mut fleet = vec![b, persona("c")];

    a.pipeline_mut().set_learning(true);
    a.submit(PipelineEvent::Failure(FailureEvent::new("m7", 1.0)));
    a.submit(PipelineEvent::Failure(FailureEvent::new("m11", 2.0)));
    storm(&mut a, 2.0);
    a.step(2.0).unwrap();
    assert_ne!(a.pipeline().cpts(), &b_cpts);

    step_personas(&mut fleet, 2.0).unwrap();
    assert_eq!(fleet[0].pipeline().touched_keys(), b_keys);
    assert_eq!(fleet[0].pipeline().cpts(), &b_cpts);
}

#[test]
fn step_personas_runs_in_id_order() {
    let mut fleet = vec![persona("zulu"), persona("alpha"), persona("mike")];
    let ticks = step_personas(&mut fleet, 0.0).unwrap();
    let ids: Vec<&str> = ticks.iter().map(|t| t.persona_id.as_str()).collect();
    assert_eq!(ids, ["alpha", "mike", "zulu"]);
}

#[test]
fn reinstantiate_restores_checkpoint() {
    let mut p = persona("r");
    p.pipeline_mut().set_learning(true);
    let (saved, _) = p.checkpoint();
    p.submit(PipelineEvent::Failure(FailureEvent::new("m7", 1.0)));
    p.submit(PipelineEvent::Failure(FailureEvent::new("m11", 2.0)));
    p.step(2.0).unwrap();
    assert_ne!(p.pipeline().cpts(), &saved);
    p.submit(sample("m7", "latency", 100.0, 3.0));
    p.reinstantiate();
    assert_eq!(p.pipeline().cpts(), &saved);
    assert_eq!(p.pending(), 0);
    assert!(p.pipeline().telemetry().is_empty());
}
