//! Deterministic discrete-event fault injection.
//!
//! A scenario is a list of timed injections. The engine advances a simulated
//! clock one tick at a time, synthesizes telemetry for every stream named by a
//! metric ramp, feeds failures to the persona, and records when each strategy
//! detects the incident and completes the switchover.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cascade::{CascadeObservation, FailureEvent};
use crate::learner::CptUpdate;
use crate::pipeline::PipelineEvent;
use crate::policy::{Decision, DecisionRecord};
use crate::quorum::Persona;
use crate::telemetry::{TelemetrySample, Tier};
use crate::{Error, Result, ServiceId, Target};

/// Heartbeat timeout of the reference reactive strategy, in seconds.
pub const BASELINE_REACTIVE_DELAY: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "reactive15", alias = "REACTIVE_15")]
    Reactive15,
    #[serde(rename = "reactive5", alias = "REACTIVE_5")]
    Reactive5,
    #[serde(rename = "static", alias = "STATIC_BAYESIAN")]
    Static,
    #[serde(rename = "adaptive", alias = "ADAPTIVE_BAYESIAN")]
    Adaptive,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Reactive15, Strategy::Reactive5, Strategy::Static, Strategy::Adaptive];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Reactive15 => "reactive15",
            Strategy::Reactive5 => "reactive5",
            Strategy::Static => "static",
            Strategy::Adaptive => "adaptive",
        }
    }

    /// Heartbeat timeout for reactive strategies.
    pub fn reactive_delay(self) -> Option<f64> {
        match self {
            Strategy::Reactive15 => Some(15.0),
            Strategy::Reactive5 => Some(5.0),
            _ => None,
        }
    }

    pub fn is_bayesian(self) -> bool {
        self.reactive_delay().is_none()
    }

    pub fn learns(self) -> bool {
        self == Strategy::Adaptive
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectionKind {
    MetricRamp,
    ServiceFailure,
    HeartbeatLoss,
    UserSwitchover,
    Recovery,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InjectionParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<String>,
    /// Ramp slope in metric units per second.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
    /// Value at which the ramp levels off.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tier: Option<Tier>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    pub time: f64,
    pub kind: InjectionKind,
    pub service_id: ServiceId,
    #[serde(default)]
    pub params: InjectionParams,
}

fn default_tick() -> f64 {
    1.0
}

fn default_execution() -> f64 {
    30.0
}

fn default_strategy() -> Strategy {
    Strategy::Adaptive
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    #[serde(default = "default_tick")]
    pub tick: f64,
    pub duration: f64,
    #[serde(default)]
    pub injections: Vec<Injection>,
    #[serde(default = "default_execution")]
    pub execution_time: f64,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    /// Relative amplitude of uniform multiplicative measurement noise.
    #[serde(default)]
    pub noise: f64,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read scenario {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn with_strategy(mut self, strategy: Strategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("scenario {}: {msg}", self.name)));
        if !(self.tick > 0.0 && self.tick.is_finite()) {
            return bad(format!("tick must be positive, got {}", self.tick));
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return bad(format!("invalid duration {}", self.duration));
        }
        if !(self.execution_time >= 0.0 && self.execution_time.is_finite()) {
            return bad(format!("invalid execution time {}", self.execution_time));
        }
        if !(0.0..1.0).contains(&self.noise) {
            return bad(format!("noise must lie in [0, 1), got {}", self.noise));
        }
        let mut last = f64::NEG_INFINITY;
        for inj in &self.injections {
            if !(inj.time >= 0.0) || inj.time < last {
                return bad("injections must be sorted by non-negative time".into());
            }
            last = inj.time;
            if inj.time > self.duration {
                return bad(format!("injection at t={} is past the duration", inj.time));
            }
            if inj.kind == InjectionKind::MetricRamp {
                let p = &inj.params;
                if p.metric.is_none() || !p.slope.is_some_and(f64::is_finite) {
                    return bad(format!("metric_ramp at t={} needs metric and slope", inj.time));
                }
            }
        }
        Ok(())
    }

    /// First ramp or failure; the start of the MTTFD interval.
    pub fn degradation_onset(&self) -> Option<f64> {
        self.injections
            .iter()
            .find(|i| matches!(i.kind, InjectionKind::MetricRamp | InjectionKind::ServiceFailure))
            .map(|i| i.time)
    }

    /// First heartbeat loss; the reference point for detection time.
    pub fn hard_failure(&self) -> Option<f64> {
        self.injections
            .iter()
            .find(|i| i.kind == InjectionKind::HeartbeatLoss)
            .map(|i| i.time)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectionSource {
    Arbiter,
    Heartbeat,
    User,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimelineEvent {
    Injection {
        injection: InjectionKind,
        service_id: ServiceId,
    },
    Cascade {
        source: ServiceId,
        target: Target,
        delay: f64,
    },
    PosteriorCrossing {
        target: Target,
        posterior: f64,
        threshold: f64,
        direction: Direction,
    },
    Decision {
        decision: Decision,
        posterior: f64,
    },
    Detection {
        source: DetectionSource,
    },
    SwitchoverStart,
    SwitchoverComplete,
}

impl TimelineEvent {
    /// Tie-break order for events sharing a timestamp.
    pub fn priority(&self) -> u8 {
        match self {
            TimelineEvent::Injection { .. } => 0,
            TimelineEvent::Cascade { .. } | TimelineEvent::PosteriorCrossing { .. } => 1,
            TimelineEvent::Decision { .. } | TimelineEvent::Detection { .. } => 2,
            TimelineEvent::SwitchoverStart | TimelineEvent::SwitchoverComplete => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineEntry {
    pub t: f64,
    #[serde(flatten)]
    pub event: TimelineEvent,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EventTimeline {
    entries: Vec<TimelineEntry>,
}

impl EventTimeline {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert keeping (t, priority) order; equal keys stay in arrival order.
    pub fn push(&mut self, t: f64, event: TimelineEvent) {
        let key = (t, event.priority());
        let at = self
            .entries
            .partition_point(|e| (e.t, e.event.priority()) <= key);
        self.entries.insert(at, TimelineEntry { t, event });
    }

    pub fn entries(&self) -> &[TimelineEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn first_time(&self, pred: impl Fn(&TimelineEvent) -> bool) -> Option<f64> {
        self.entries.iter().find(|e| pred(&e.event)).map(|e| e.t)
    }

    pub fn count(&self, pred: impl Fn(&TimelineEvent) -> bool) -> usize {
        self.entries.iter().filter(|e| pred(&e.event)).count()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SwitchoverMetrics {
    pub detected: bool,
    /// Detection relative to the hard failure; negative means predictive lead.
    pub detection_time: Option<f64>,
    pub execution_time: f64,
    /// Downtime between the hard failure and the completed switchover.
    pub total_so: Option<f64>,
    pub mttfd: Option<f64>,
    pub improvement_pct: Option<f64>,
    pub switchovers: usize,
}

/// Derive metrics from a finished timeline. Without a hard failure there is
/// no downtime to measure, so only detection and MTTFD are reported.
pub fn compute_metrics(
    timeline: &EventTimeline,
    hard_failure_t: Option<f64>,
    degradation_onset_t: Option<f64>,
    baseline_total: f64,
) -> SwitchoverMetrics {
    let switchovers = timeline.count(|e| matches!(e, TimelineEvent::SwitchoverStart));
    let Some(detect) = timeline.first_time(|e| matches!(e, TimelineEvent::Detection { .. })) else {
        return SwitchoverMetrics {
            switchovers,
            ..Default::default()
        };
    };
    let start = timeline.first_time(|e| matches!(e, TimelineEvent::SwitchoverStart));
    let complete = timeline.first_time(|e| matches!(e, TimelineEvent::SwitchoverComplete));
    let execution_time = match (start, complete) {
        (Some(s), Some(c)) => c - s,
        _ => 0.0,
    };
    let total_so = match (hard_failure_t, complete) {
        (Some(hf), Some(c)) => Some((c - hf).max(0.0)),
        _ => None,
    };
    SwitchoverMetrics {
        detected: true,
        detection_time: hard_failure_t.map(|hf| detect - hf),
        execution_time,
        total_so,
        mttfd: degradation_onset_t.map(|o| detect - o),
        improvement_pct: total_so
            .filter(|_| baseline_total > 0.0)
            .map(|t| (baseline_total - t) / baseline_total * 100.0),
        switchovers,
    }
}

/// One posterior row per target per tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorRow {
    pub t: f64,
    pub target: Target,
    pub p_eff: f64,
    pub posterior: f64,
    pub contributors: Vec<(ServiceId, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRun {
    pub scenario: String,
    pub strategy: Strategy,
    pub timeline: EventTimeline,
    pub metrics: SwitchoverMetrics,
    pub posteriors: Vec<PosteriorRow>,
    pub decisions: Vec<DecisionRecord>,
    pub cascades: Vec<CascadeObservation>,
    pub updates: Vec<CptUpdate>,
}

impl ScenarioRun {
    /// First tick at which `target`'s posterior exceeded `threshold`.
    pub fn first_crossing(&self, target: &Target, threshold: f64) -> Option<f64> {
        self.posteriors
            .iter()
            .find(|r| &r.target == target && r.posterior > threshold)
            .map(|r| r.t)
    }
}

#[derive(Debug, Clone)]
struct Ramp {
    start: f64,
    slope: f64,
    cap: Option<f64>,
}

#[derive(Debug, Clone)]
struct Stream {
    baseline: f64,
    tier: Tier,
    ramp: Option<Ramp>,
}

impl Stream {
    fn value(&self, t: f64) -> f64 {
        match &self.ramp {
            None => self.baseline,
            Some(r) => {
                let v = self.baseline + r.slope * (t - r.start);
                match r.cap {
                    Some(c) if r.slope >= 0.0 => v.min(c),
                    Some(c) => v.max(c),
                    None => v,
                }
            }
        }
    }
}

fn build_streams(s: &Scenario, persona: &Persona) -> Result<BTreeMap<(ServiceId, String), Stream>> {
    let baselines = persona.pipeline().baselines();
    let mut streams = BTreeMap::new();
    for inj in s.injections.iter().filter(|i| i.kind == InjectionKind::MetricRamp) {
        let metric = inj.params.metric.clone().unwrap_or_default();
        let base = baselines.get(&metric).ok_or_else(|| {
            Error::Config(format!(
                "scenario {} ramps `{metric}` on {} but no baseline is configured",
                s.name, inj.service_id
            ))
        })?;
        streams.entry((inj.service_id.clone(), metric)).or_insert(Stream {
            baseline: base.baseline_value,
            tier: inj.params.tier.unwrap_or(Tier::Application),
            ramp: None,
        });
    }
    Ok(streams)
}

/// Run one scenario against `persona`. Learned tables carry over from the
/// persona's current state; only the adaptive strategy modifies them.
pub fn run_scenario(s: &Scenario, persona: &mut Persona) -> Result<ScenarioRun> {
    s.validate()?;
    let mut streams = build_streams(s, persona)?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);

    persona.begin_episode();
    persona.pipeline_mut().set_learning(s.strategy.learns());
    let tau = persona.pipeline().config().thresholds.tau_active;

    let hard_failure = s.hard_failure();
    let onset = s.degradation_onset();
    let reactive_at = s.strategy.reactive_delay().zip(hard_failure).map(|(k, hf)| hf + k);

    let mut timeline = EventTimeline::new();
    let mut posteriors = Vec::new();
    let mut decisions = Vec::new();
    let mut cascades = Vec::new();
    let mut updates = Vec::new();
    let mut above: BTreeSet<Target> = BTreeSet::new();
    let mut switching = false;
    let mut next = 0usize;

    let steps = (s.duration / s.tick).floor() as u64;
    for step in 0..=steps {
        let t = step as f64 * s.tick;
        let mut user_so = false;

        while let Some(inj) = s.injections.get(next).filter(|i| i.time <= t) {
            next += 1;
            timeline.push(
                t,
                TimelineEvent::Injection {
                    injection: inj.kind,
                    service_id: inj.service_id.clone(),
                },
            );
            match inj.kind {
                InjectionKind::MetricRamp => {
                    let metric = inj.params.metric.clone().unwrap_or_default();
                    if let Some(st) = streams.get_mut(&(inj.service_id.clone(), metric)) {
                        st.ramp = Some(Ramp {
                            start: t,
                            slope: inj.params.slope.unwrap_or(0.0),
                            cap: inj.params.target,
                        });
                    }
                }
                InjectionKind::ServiceFailure => {
                    persona.submit(PipelineEvent::Failure(FailureEvent {
                        service: inj.service_id.clone(),
                        timestamp: t,
                    }));
                }
                InjectionKind::HeartbeatLoss => {}
                InjectionKind::UserSwitchover => {
                    persona.submit(PipelineEvent::SwitchoverConfirmed(t));
                    user_so = true;
                }
                InjectionKind::Recovery => {
                    for ((svc, metric), st) in streams.iter_mut() {
                        let hit = svc == &inj.service_id
                            && inj.params.metric.as_ref().is_none_or(|m| m == metric);
                        if hit {
                            st.ramp = None;
                        }
                    }
                }
            }
        }

        for ((svc, metric), st) in &streams {
            let jitter = if s.noise > 0.0 {
                1.0 + s.noise * rng.gen_range(-1.0..=1.0)
            } else {
                1.0
            };
            persona.submit(PipelineEvent::Sample(TelemetrySample {
                service: svc.clone(),
                metric: metric.clone(),
                value: st.value(t) * jitter,
                timestamp: t,
                tier: st.tier,
            }));
        }

        let tick = persona.step(t)?;
        for out in tick.outcomes {
            for obs in &out.cascades {
                timeline.push(
                    t,
                    TimelineEvent::Cascade {
                        source: obs.source.clone(),
                        target: obs.target.clone(),
                        delay: obs.delay,
                    },
                );
            }
            cascades.extend(out.cascades);
            updates.extend(out.updates);
        }

        let mut detection = None;
        if let Some(eval) = tick.evaluation {
            for r in std::iter::once(&eval.switchover).chain(&eval.targets) {
                let is_above = r.posterior > tau;
                if is_above != above.contains(&r.target) {
                    timeline.push(
                        t,
                        TimelineEvent::PosteriorCrossing {
                            target: r.target.clone(),
                            posterior: r.posterior,
                            threshold: tau,
                            direction: if is_above { Direction::Up } else { Direction::Down },
                        },
                    );
                    if is_above {
                        above.insert(r.target.clone());
                    } else {
                        above.remove(&r.target);
                    }
                }
                posteriors.push(PosteriorRow {
                    t,
                    target: r.target.clone(),
                    p_eff: r.p_eff,
                    posterior: r.posterior,
                    contributors: r.contributing.clone(),
                });
            }
            let record = DecisionRecord {
                t,
                posterior: eval.switchover.posterior,
                decision: eval.state.decision,
            };
            if eval.state.transitioned() {
                timeline.push(
                    t,
                    TimelineEvent::Decision {
                        decision: record.decision,
                        posterior: record.posterior,
                    },
                );
            }
            if s.strategy.is_bayesian() && eval.state.decision == Decision::Switchover {
                detection = Some(DetectionSource::Arbiter);
            }
            decisions.push(record);
        }
        if reactive_at.is_some_and(|at| t >= at) {
            detection = Some(DetectionSource::Heartbeat);
        }
        if user_so {
            detection = Some(DetectionSource::User);
        }

        if let (Some(source), false) = (detection, switching) {
            switching = true;
            timeline.push(t, TimelineEvent::Detection { source });
            timeline.push(t, TimelineEvent::SwitchoverStart);
            timeline.push(t + s.execution_time, TimelineEvent::SwitchoverComplete);
            log::debug!("{}: {} detection at t={t} ({source:?})", s.name, s.strategy);
        }
    }

    let metrics = compute_metrics(
        &timeline,
        hard_failure,
        onset,
        BASELINE_REACTIVE_DELAY + s.execution_time,
    );
    Ok(ScenarioRun {
        scenario: s.name.clone(),
        strategy: s.strategy,
        timeline,
        metrics,
        posteriors,
        decisions,
        cascades,
        updates,
    })
}

/// Run scenarios in order on one persona, carrying learned state forward.
pub fn run_sequence(scenarios: &[Scenario], persona: &mut Persona) -> Result<Vec<ScenarioRun>> {
    scenarios.iter().map(|s| run_scenario(s, persona)).collect()
}
