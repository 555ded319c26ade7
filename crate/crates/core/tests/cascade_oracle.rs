use geoha_core::cascade::{CascadeDb, CascadeWindowConfig, FailureEvent};
use geoha_core::verify::{brute_force_cascades, check_cascade_oracle};
use geoha_core::{ServiceId, Target};
use proptest::prelude::*;

#[test]
fn online_matches_oracle_on_200_traces() {
    let compared = check_cascade_oracle(200, 50, 0xCA5CADE).unwrap();
    assert!(compared > 0, "traces produced no cascades at all");
}

#[test]
fn oracle_check_is_seed_independent() {
    for seed in 1..6 {
        check_cascade_oracle(200, 50, seed).unwrap();
    }
}

fn trace() -> impl Strategy<Value = Vec<FailureEvent>> {
    prop::collection::vec((0u8..5, 0u32..30), 0..50).prop_map(|steps| {
        let mut t = 0.0;
        steps
            .into_iter()
            .map(|(s, dt)| {
                t += f64::from(dt);
                FailureEvent::new(format!("s{s}"), t)
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    /// One failure of A credits A->B at most once, so the ratio stays in [0, 1].
    #[test]
    fn cascade_ratio_bounded(events in trace(), window in 1u32..90) {
        let mut db = CascadeDb::new(CascadeWindowConfig::new(f64::from(window)).unwrap());
        for ev in &events {
            db.record_failure(ev).unwrap();
        }
        for a in 0..5 {
            let src = ServiceId::new(format!("s{a}"));
            for b in 0..5 {
                if let Ok(r) = db.cascade_ratio(&src, &Target::service(format!("s{b}"))) {
                    prop_assert!((0.0..=1.0).contains(&r));
                }
            }
        }
    }

    #[test]
    fn matches_oracle(events in trace(), window in 1u32..90) {
        let window = f64::from(window);
        let mut db = CascadeDb::new(CascadeWindowConfig::new(window).unwrap());
        let mut online = Vec::new();
        for ev in &events {
            for o in db.record_failure(ev).unwrap() {
                prop_assert!(o.delay >= 0.0 && o.delay <= window);
                prop_assert_ne!(Some(&o.source), match &o.target { Target::Service(s) => Some(s), _ => None });
                if let Target::Service(t) = o.target {
                    online.push((o.source, t, o.delay.to_bits(), o.t.to_bits()));
                }
            }
        }
        online.sort();
        prop_assert_eq!(online, brute_force_cascades(&events, window));
    }
}

#[test]
fn out_of_order_failure_rejected() {
    let mut db = CascadeDb::new(CascadeWindowConfig::default());
    db.record_failure(&FailureEvent::new("a", 10.0)).unwrap();
    assert!(db.record_failure(&FailureEvent::new("b", 9.0)).is_err());
}
