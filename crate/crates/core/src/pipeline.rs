//! The per-persona arbitration chain: telemetry → cascade → learner →
//! inference → policy.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::cascade::{CascadeCounts, CascadeDb, CascadeObservation, CascadeWindowConfig, FailureEvent};
use crate::config::PriorsFile;
use crate::inference::{self, EvidenceVector, InferenceConfig, RiskAssessment};
use crate::learner::{self, CptStore, CptUpdate, LearnerConfig};
use crate::policy::{self, DecisionState, Thresholds};
use crate::telemetry::{Baselines, DegradationReport, TelemetrySample, TelemetryStore, DEFAULT_HORIZON};
use crate::{Error, Result, ServiceId, Target};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub cascade: CascadeWindowConfig,
    pub learner: LearnerConfig,
    pub inference: InferenceConfig,
    pub thresholds: Thresholds,
    /// Look-back for degradation assessment, in seconds.
    pub degradation_window: f64,
    pub telemetry_horizon: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            cascade: CascadeWindowConfig::default(),
            learner: LearnerConfig::default(),
            inference: InferenceConfig::default(),
            thresholds: Thresholds::default(),
            degradation_window: 5.0,
            telemetry_horizon: DEFAULT_HORIZON,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        CascadeWindowConfig::new(self.cascade.window)?;
        self.learner.validate()?;
        self.inference.validate()?;
        self.thresholds.validate()?;
        if !(self.degradation_window > 0.0) {
            return Err(Error::Config("degradation window must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PipelineEvent {
    Sample(TelemetrySample),
    Failure(FailureEvent),
    /// Operator-initiated switchover, taken as a confirmed positive label.
    SwitchoverConfirmed(f64),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventOutcome {
    pub cascades: Vec<CascadeObservation>,
    pub updates: Vec<CptUpdate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub t: f64,
    pub report: DegradationReport,
    pub switchover: RiskAssessment,
    /// Per-service targets present in the CPT store, in target order.
    pub targets: Vec<RiskAssessment>,
    pub state: DecisionState,
}

impl Evaluation {
    /// Degraded-service visits across all predictions made this tick.
    pub fn folds(&self) -> usize {
        self.switchover.visited + self.targets.iter().map(|r| r.visited).sum::<usize>()
    }
}

#[derive(Debug)]
pub struct Pipeline {
    cfg: PipelineConfig,
    baselines: Baselines,
    critical: BTreeSet<ServiceId>,
    telemetry: TelemetryStore,
    cascades: CascadeDb,
    cpts: CptStore,
    decision: DecisionState,
    learning: bool,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, baselines: Baselines, priors: &PriorsFile) -> Result<Self> {
        cfg.validate()?;
        let mut cpts = CptStore::new();
        learner::seed_priors(&mut cpts, &priors.priors)?;
        Ok(Self {
            cfg,
            baselines,
            critical: priors.critical_services.clone(),
            telemetry: TelemetryStore::new(cfg.telemetry_horizon),
            cascades: CascadeDb::new(cfg.cascade),
            cpts,
            decision: DecisionState::default(),
            learning: false,
        })
    }

    /// Replace the learned state with a snapshot taken earlier.
    pub fn restore(&mut self, cpts: CptStore, counts: Option<CascadeCounts>) {
        self.cpts = cpts;
        if let Some(counts) = counts {
            self.cascades = CascadeDb::with_counts(self.cfg.cascade, counts);
        }
    }

    pub fn set_learning(&mut self, on: bool) {
        self.learning = on;
    }

    pub fn learning(&self) -> bool {
        self.learning
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn baselines(&self) -> &Baselines {
        &self.baselines
    }

    pub fn critical_services(&self) -> &BTreeSet<ServiceId> {
        &self.critical
    }

    pub fn cpts(&self) -> &CptStore {
        &self.cpts
    }

    pub fn cascades(&self) -> &CascadeDb {
        &self.cascades
    }

    pub fn telemetry(&self) -> &TelemetryStore {
        &self.telemetry
    }

    pub fn telemetry_mut(&mut self) -> &mut TelemetryStore {
        &mut self.telemetry
    }

    pub fn decision(&self) -> &DecisionState {
        &self.decision
    }

    /// Start a new episode whose clock restarts at zero. Learned tables and
    /// cascade counters carry over; telemetry and the decision do not.
    pub fn begin_episode(&mut self) {
        self.telemetry.clear();
        self.cascades.reset_window();
        self.decision = DecisionState::default();
    }

    pub fn apply(&mut self, event: PipelineEvent) -> Result<EventOutcome> {
        let cascades = match event {
            PipelineEvent::Sample(sample) => {
                self.telemetry.ingest(sample)?;
                return Ok(EventOutcome::default());
            }
            PipelineEvent::Failure(failure) => {
                let mut obs = self.cascades.record_failure(&failure)?;
                if self.critical.contains(&failure.service) {
                    obs.extend(self.cascades.record_switchover_necessity(failure.timestamp)?);
                }
                obs
            }
            PipelineEvent::SwitchoverConfirmed(t) => self.cascades.record_switchover_necessity(t)?,
        };
        let updates = if self.learning {
            learner::apply_cascades(&cascades, &self.cascades, &self.cfg.learner, &mut self.cpts)?
        } else {
            Vec::new()
        };
        Ok(EventOutcome { cascades, updates })
    }

    /// Assess degradation at `now`, predict every target, and advance the
    /// hysteresis decision on the switchover posterior.
    pub fn evaluate(&mut self, now: f64) -> Result<Evaluation> {
        self.cascades.prune(now);
        let report = self
            .telemetry
            .assess_degradation(now, &self.baselines, self.cfg.degradation_window)?;
        let evidence = EvidenceVector::from_report(&report, &self.baselines, &self.cfg.inference);
        let switchover = inference::predict(&report, &self.cpts, &evidence, &self.cfg.inference);
        let targets = self
            .cpts
            .targets()
            .filter(|t| **t != Target::Switchover)
            .map(|t| inference::predict_target(t, &report, &self.cpts, &evidence, &self.cfg.inference))
            .collect();
        self.decision = policy::decide(switchover.posterior, &self.decision, &self.cfg.thresholds, now);
        Ok(Evaluation {
            t: now,
            report,
            switchover,
            targets,
            state: self.decision,
        })
    }

    /// Every store key this pipeline has written, namespaced by store.
    pub fn touched_keys(&self) -> BTreeSet<String> {
        let mut keys = BTreeSet::new();
        for k in self.telemetry.stream_keys() {
            keys.insert(format!("telemetry:{}/{}", k.service, k.metric));
        }
        for (t, s, _) in self.cpts.iter() {
            keys.insert(format!("cpt:{t}|{s}"));
        }
        for s in self.cascades.counts().n_failures.keys() {
            keys.insert(format!("cascade:{s}"));
        }
        keys
    }
}
