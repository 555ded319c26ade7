//! Online cascade detection.
//!
//! Every service failure is compared against the most recent failure of each
//! other service. If the earlier failure happened no more than the cascade
//! window before, the pair is reported as a temporal `A -> B` dependency. The
//! database also keeps the cumulative counters the learner needs:
//! `N_failures(A)` and `N_cascade(A -> B)`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::{Error, Result, ServiceId, Target};

pub const DEFAULT_CASCADE_WINDOW: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CascadeWindowConfig {
    /// Maximum delay, in seconds, between two failures for them to count as
    /// a cascade.
    pub window: f64,
}

impl Default for CascadeWindowConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_CASCADE_WINDOW,
        }
    }
}

impl CascadeWindowConfig {
    pub fn new(window: f64) -> Result<Self> {
        if !(window > 0.0 && window.is_finite()) {
            return Err(Error::Config(format!("cascade window must be positive, got {window}")));
        }
        Ok(Self { window })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureEvent {
    pub service: ServiceId,
    pub timestamp: f64,
}

impl FailureEvent {
    pub fn new(service: impl Into<String>, timestamp: f64) -> Self {
        Self {
            service: ServiceId::new(service),
            timestamp,
        }
    }
}

/// A detected `source -> target` sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeObservation {
    pub source: ServiceId,
    pub target: Target,
    pub delay: f64,
    /// Time at which the cascade was detected (the target's failure time).
    pub t: f64,
}

/// `0 <= t_b - t_a <= window`.
pub fn is_cascade(t_a: f64, t_b: f64, cfg: &CascadeWindowConfig) -> bool {
    let delay = t_b - t_a;
    delay >= 0.0 && delay <= cfg.window
}

#[derive(Debug, Clone, PartialEq)]
struct RecentFailure {
    t: f64,
    seq: u64,
    /// Targets already counted against this particular failure, so that one
    /// source failure contributes at most once to each `N_cascade` counter.
    credited: BTreeSet<Target>,
}

/// Cumulative counters, persisted between runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CascadeCounts {
    pub n_failures: BTreeMap<ServiceId, u64>,
    pub n_cascade: BTreeMap<ServiceId, BTreeMap<Target, u64>>,
}

#[derive(Debug, Clone, Default)]
pub struct CascadeDb {
    cfg: CascadeWindowConfig,
    recent: BTreeMap<ServiceId, RecentFailure>,
    counts: CascadeCounts,
    last_t: Option<f64>,
    seq: u64,
}

impl CascadeDb {
    pub fn new(cfg: CascadeWindowConfig) -> Self {
        Self {
            cfg,
            ..Self::default()
        }
    }

    pub fn with_counts(cfg: CascadeWindowConfig, counts: CascadeCounts) -> Self {
        Self {
            cfg,
            counts,
            ..Self::default()
        }
    }

    pub fn config(&self) -> &CascadeWindowConfig {
        &self.cfg
    }

    fn check_order(&mut self, t: f64) -> Result<()> {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::Contract(format!("failure timestamp {t} must be finite and non-negative")));
        }
        if let Some(last) = self.last_t {
            if t < last {
                return Err(Error::Ordering { t, last });
            }
        }
        self.last_t = Some(t);
        Ok(())
    }

    /// Prior failures of other services, oldest first.
    fn ordered_recent(&self, exclude: Option<&ServiceId>) -> Vec<ServiceId> {
        let mut v: Vec<(&ServiceId, &RecentFailure)> = self
            .recent
            .iter()
            .filter(|(id, _)| Some(*id) != exclude)
            .collect();
        v.sort_by(|a, b| a.1.t.total_cmp(&b.1.t).then(a.1.seq.cmp(&b.1.seq)));
        v.into_iter().map(|(id, _)| id.clone()).collect()
    }

    fn match_recent(&mut self, target: &Target, exclude: Option<&ServiceId>, t: f64) -> Vec<CascadeObservation> {
        let mut out = Vec::new();
        for source in self.ordered_recent(exclude) {
            let entry = self.recent.get_mut(&source).expect("listed above");
            if !is_cascade(entry.t, t, &self.cfg) {
                continue;
            }
            out.push(CascadeObservation {
                source: source.clone(),
                target: target.clone(),
                delay: t - entry.t,
                t,
            });
            if entry.credited.insert(target.clone()) {
                *self
                    .counts
                    .n_cascade
                    .entry(source)
                    .or_default()
                    .entry(target.clone())
                    .or_insert(0) += 1;
            }
        }
        out
    }

    /// Register a failure and return the cascades it completes.
    ///
    /// Only the most recent failure of each other service is considered.
    /// Self-cascades are never reported.
    pub fn record_failure(&mut self, event: &FailureEvent) -> Result<Vec<CascadeObservation>> {
        self.check_order(event.timestamp)?;
        let target = Target::Service(event.service.clone());
        let out = self.match_recent(&target, Some(&event.service), event.timestamp);
        self.seq += 1;
        self.recent.insert(
            event.service.clone(),
            RecentFailure {
                t: event.timestamp,
                seq: self.seq,
                credited: BTreeSet::new(),
            },
        );
        *self.counts.n_failures.entry(event.service.clone()).or_insert(0) += 1;
        Ok(out)
    }

    /// Register a confirmed switchover necessity (a critical service failing,
    /// or an operator-initiated switchover) and return `A -> SO` observations
    /// for every recent failure inside the window.
    pub fn record_switchover_necessity(&mut self, t: f64) -> Result<Vec<CascadeObservation>> {
        self.check_order(t)?;
        Ok(self.match_recent(&Target::Switchover, None, t))
    }

    /// `N_cascade(source -> target) / N_failures(source)`.
    pub fn cascade_ratio(&self, source: &ServiceId, target: &Target) -> Result<f64> {
        let failures = self.n_failures(source);
        if failures == 0 {
            return Err(Error::UndefinedRatio(source.clone()));
        }
        Ok(self.n_cascade(source, target) as f64 / failures as f64)
    }

    /// Evict recent failures older than `now - window`. Counters are kept.
    pub fn prune(&mut self, now: f64) -> usize {
        let cutoff = now - self.cfg.window;
        let before = self.recent.len();
        self.recent.retain(|_, r| r.t >= cutoff);
        before - self.recent.len()
    }

    /// Forget the sliding window and clock, keeping counters. Used between
    /// scenario episodes whose clocks restart at zero.
    pub fn reset_window(&mut self) {
        self.recent.clear();
        self.last_t = None;
    }

    pub fn n_failures(&self, service: &ServiceId) -> u64 {
        self.counts.n_failures.get(service).copied().unwrap_or(0)
    }

    pub fn n_cascade(&self, source: &ServiceId, target: &Target) -> u64 {
        self.counts
            .n_cascade
            .get(source)
            .and_then(|m| m.get(target))
            .copied()
            .unwrap_or(0)
    }

    pub fn recent_len(&self) -> usize {
        self.recent.len()
    }

    pub fn counts(&self) -> &CascadeCounts {
        &self.counts
    }
}
