//! Reference checks shared by the test suites: a brute-force cascade oracle,
//! an exhaustive quorum model check, and operation counters for the scaling
//! claims.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cascade::{CascadeDb, CascadeWindowConfig, FailureEvent};
use crate::config::PriorsFile;
use crate::inference::{self, EvidenceVector, InferenceConfig};
use crate::learner::{CptEntry, CptStore};
use crate::pipeline::{Pipeline, PipelineConfig, PipelineEvent};
use crate::quorum::{step_personas, MemberId, Persona, QuorumState, Role};
use crate::telemetry::{Baselines, DegradationReport, TelemetrySample, Tier};
use crate::{ServiceId, Target};

/// `(source, target, delay, t)` with floats kept bit-exact for comparison.
pub type CascadeTuple = (ServiceId, ServiceId, u64, u64);

/// Every (most recent prior failure of A, failure of B) pair with A != B and
/// a delay inside the window, found by scanning the whole trace.
pub fn brute_force_cascades(trace: &[FailureEvent], window: f64) -> Vec<CascadeTuple> {
    let mut out = Vec::new();
    for (j, b) in trace.iter().enumerate() {
        let mut latest: BTreeMap<&ServiceId, f64> = BTreeMap::new();
        for a in &trace[..j] {
            latest.insert(&a.service, a.timestamp);
        }
        for (src, t_a) in latest {
            let delay = b.timestamp - t_a;
            if src != &b.service && (0.0..=window).contains(&delay) {
                out.push((src.clone(), b.service.clone(), delay.to_bits(), b.timestamp.to_bits()));
            }
        }
    }
    out.sort();
    out
}

/// Sorted random failure trace over a handful of services.
pub fn random_trace(rng: &mut impl Rng, max_len: usize) -> Vec<FailureEvent> {
    let len = rng.gen_range(0..=max_len);
    let services = rng.gen_range(1..=6);
    let mut t = 0.0;
    (0..len)
        .map(|_| {
            // whole seconds so equal timestamps occur
            t += f64::from(rng.gen_range(0..40u32));
            FailureEvent::new(format!("s{}", rng.gen_range(0..services)), t)
        })
        .collect()
}

/// Compare the online detector to the brute-force enumeration on `traces`
/// random traces. Returns the number of cascades compared.
pub fn check_cascade_oracle(traces: usize, max_len: usize, seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut compared = 0;
    for n in 0..traces {
        let window = f64::from(rng.gen_range(1..=90u32));
        let trace = random_trace(&mut rng, max_len);
        let cfg = CascadeWindowConfig::new(window).map_err(|e| e.to_string())?;
        let mut db = CascadeDb::new(cfg);
        let mut online = Vec::new();
        for ev in &trace {
            if rng.gen_bool(0.3) {
                db.prune(ev.timestamp);
            }
            for obs in db.record_failure(ev).map_err(|e| e.to_string())? {
                let Target::Service(target) = obs.target else {
                    return Err("switchover target in a failure trace".into());
                };
                online.push((obs.source, target, obs.delay.to_bits(), obs.t.to_bits()));
            }
        }
        online.sort();
        let expected = brute_force_cascades(&trace, window);
        if online != expected {
            return Err(format!(
                "trace {n} (window {window}): online found {} cascades, oracle {}",
                online.len(),
                expected.len()
            ));
        }
        compared += expected.len();
    }
    Ok(compared)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuorumOp {
    Fail(MemberId),
    Rejoin(MemberId),
}

impl QuorumOp {
    pub const ALL: [QuorumOp; 6] = [
        QuorumOp::Fail(MemberId::Arbiter),
        QuorumOp::Fail(MemberId::Active),
        QuorumOp::Fail(MemberId::Standby),
        QuorumOp::Rejoin(MemberId::Arbiter),
        QuorumOp::Rejoin(MemberId::Active),
        QuorumOp::Rejoin(MemberId::Standby),
    ];
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ModelCheckSummary {
    pub sequences: usize,
    pub states: usize,
    pub quorum_lost_states: usize,
    pub rejoins: usize,
}

/// Enumerate every fail/rejoin sequence up to `max_len` and check the quorum
/// safety properties after each step. A persona rides along to confirm that
/// nothing is decided while the quorum is lost.
pub fn quorum_model_check(max_len: usize) -> Result<ModelCheckSummary, String> {
    let mut summary = ModelCheckSummary::default();
    let mut path = Vec::new();
    walk(
        QuorumState::bootstrap(),
        &mut BTreeMap::new(),
        &mut path,
        max_len,
        &mut summary,
    )?;
    // Persona replay over full-length sequences covers every prefix.
    let total = QuorumOp::ALL.len().pow(max_len as u32);
    for code in 0..total {
        let mut persona = idle_persona("model");
        let mut c = code;
        for step in 0..max_len {
            let op = QuorumOp::ALL[c % QuorumOp::ALL.len()];
            c /= QuorumOp::ALL.len();
            match op {
                QuorumOp::Fail(m) => persona.fail_member(m),
                QuorumOp::Rejoin(m) => persona.rejoin_member(m).map(|_| ()),
            }
            .map_err(|e| e.to_string())?;
            let tick = persona.step(step as f64).map_err(|e| e.to_string())?;
            let lost = !persona.quorum().has_quorum();
            if lost && (tick.evaluation.is_some() || tick.decision_record().is_some()) {
                return Err(format!("decision emitted without quorum (sequence {code})"));
            }
            if !lost && tick.evaluation.is_none() {
                return Err(format!("no evaluation despite quorum (sequence {code})"));
            }
        }
    }
    Ok(summary)
}

fn walk(
    q: QuorumState,
    term_leaders: &mut BTreeMap<u64, MemberId>,
    path: &mut Vec<QuorumOp>,
    remaining: usize,
    summary: &mut ModelCheckSummary,
) -> Result<(), String> {
    summary.sequences += 1;
    if remaining == 0 {
        return Ok(());
    }
    for op in QuorumOp::ALL {
        let mut next = q.clone();
        let (was_down, member) = match op {
            QuorumOp::Fail(m) => (false, m),
            QuorumOp::Rejoin(m) => (!q.member(m).alive, m),
        };
        match op {
            QuorumOp::Fail(m) => next.fail_member(m),
            QuorumOp::Rejoin(m) => next.rejoin(m),
        }
        .map_err(|e| format!("{path:?} + {op:?}: {e}"))?;
        path.push(op);
        summary.states += 1;
        let fail = |msg: String| Err(format!("after {path:?}: {msg}"));
        if let Err(msg) = next.check_invariants() {
            return fail(msg);
        }
        if next.alive_count() >= 2 && next.leader().is_none() {
            return fail("quorum alive but no leader".into());
        }
        if next.leader().is_none() {
            summary.quorum_lost_states += 1;
        }
        if was_down {
            summary.rejoins += 1;
            if next.member(member).role != Role::Follower {
                return fail(format!("rejoiner {member} is {:?}", next.member(member).role));
            }
        }
        let mut added = None;
        if let Some(leader) = next.leader() {
            match term_leaders.get(&next.term()) {
                Some(&other) if other != leader => {
                    return fail(format!("term {} has leaders {other} and {leader}", next.term()));
                }
                Some(_) => {}
                None => {
                    term_leaders.insert(next.term(), leader);
                    added = Some(next.term());
                }
            }
        }
        walk(next, term_leaders, path, remaining - 1, summary)?;
        if let Some(term) = added {
            term_leaders.remove(&term);
        }
        path.pop();
    }
    Ok(())
}

fn idle_persona(id: &str) -> Persona {
    let pipeline = Pipeline::new(PipelineConfig::default(), Baselines::new(), &PriorsFile::default())
        .expect("default pipeline config is valid");
    Persona::new(id, pipeline, 8).expect("non-zero quota")
}

/// Degraded services visited by one switchover prediction with `n` degraded
/// services, each carrying a learned conditional.
pub fn predict_folds(n: usize) -> usize {
    let services: Vec<String> = (0..n).map(|i| format!("svc{i}")).collect();
    let report = DegradationReport::from_services(services.iter().map(String::as_str));
    let mut cpts = CptStore::new();
    for s in &services {
        cpts.insert(Target::Switchover, ServiceId::from(s.as_str()), CptEntry::prior(0.01));
    }
    let cfg = InferenceConfig::default();
    inference::predict(&report, &cpts, &EvidenceVector::neutral(), &cfg).visited
}

/// Total operations reported by stepping `personas` identical personas
/// through the same short workload.
pub fn persona_stepping_ops(personas: usize) -> Result<usize, String> {
    let mut baselines = Baselines::new();
    baselines.insert(
        "latency".into(),
        crate::telemetry::SiteBaseline::new("latency", 100.0, 1.5).map_err(|e| e.to_string())?,
    );
    let priors = PriorsFile::parse(r#"{"critical_services":["c"],"priors":{"SO":{"a":0.1,"b":0.1},"c":{"a":0.1}}}"#)
        .map_err(|e| e.to_string())?;
    let mut fleet = (0..personas)
        .map(|i| {
            let p = Pipeline::new(PipelineConfig::default(), baselines.clone(), &priors)?;
            Persona::new(format!("p{i:04}"), p, 16)
        })
        .collect::<crate::Result<Vec<_>>>()
        .map_err(|e| e.to_string())?;
    let mut ops = 0;
    for t in 0..20u32 {
        let t = f64::from(t);
        for p in fleet.iter_mut() {
            for svc in ["a", "b"] {
                let value = if t >= 10.0 { 200.0 } else { 100.0 };
                p.submit(PipelineEvent::Sample(TelemetrySample::new(svc, "latency", value, t, Tier::Node)));
            }
            if t == 12.0 {
                p.submit(PipelineEvent::Failure(FailureEvent::new("a", t)));
            }
        }
        ops += step_personas(&mut fleet, t)
            .map_err(|e| e.to_string())?
            .iter()
            .map(|tick| tick.ops)
            .sum::<usize>();
    }
    Ok(ops)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_on_hand_trace() {
        let trace = [
            FailureEvent::new("a", 0.0),
            FailureEvent::new("b", 10.0),
            FailureEvent::new("a", 20.0),
            FailureEvent::new("c", 100.0),
        ];
        let found = brute_force_cascades(&trace, 60.0);
        let pairs: Vec<(String, String)> = found
            .iter()
            .map(|(s, t, _, _)| (s.to_string(), t.to_string()))
            .collect();
        assert_eq!(pairs, [("a".into(), "b".into()), ("b".into(), "a".into())]);
    }

    #[test]
    fn short_model_check() {
        let s = quorum_model_check(2).unwrap();
        assert_eq!(s.sequences, 1 + 6 + 36);
    }
}
