//! Adaptive online CPT learning.
//!
//! Each detected cascade refreshes `P(target | source)` as a convex blend of
//! the current estimate and the observed cascade ratio. The retention weight
//! starts at `alpha_base` and grows toward 0.9 as the edge accumulates
//! observations, so young edges move quickly and mature ones settle.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cascade::{CascadeDb, CascadeObservation};
use crate::{Error, Result, ServiceId, Target};

/// Retention weight approached once an edge has enough observations.
pub const MATURE_RETENTION: f64 = 0.9;
/// Cap on the confidence term.
pub const MAX_CONFIDENCE: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub alpha_base: f64,
    /// Observations needed before an edge is considered mature.
    pub n_req: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            alpha_base: 0.7,
            n_req: 10,
        }
    }
}

impl LearnerConfig {
    pub fn new(alpha_base: f64, n_req: u64) -> Result<Self> {
        let cfg = Self { alpha_base, n_req };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..MATURE_RETENTION).contains(&self.alpha_base) {
            return Err(Error::Config(format!(
                "alpha_base must lie in [0, {MATURE_RETENTION}), got {}",
                self.alpha_base
            )));
        }
        if self.n_req == 0 {
            return Err(Error::Config("n_req must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CptEntry {
    #[serde(rename = "p")]
    pub probability: f64,
    pub n_obs: u64,
}

impl CptEntry {
    pub fn prior(probability: f64) -> Self {
        Self { probability, n_obs: 0 }
    }
}

/// One refreshed conditional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CptUpdate {
    pub source: ServiceId,
    pub target: Target,
    pub probability: f64,
    pub n_obs: u64,
}

/// Learned conditionals, indexed `target -> source`.
///
/// Serializes to the snapshot layout `{"SO": {"m7": {"p": 0.51, "n_obs": 3}}}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CptStore {
    tables: BTreeMap<Target, BTreeMap<ServiceId, CptEntry>>,
}

/// Expert priors in the same `target -> source` layout, probabilities only.
pub type PriorMap = BTreeMap<Target, BTreeMap<ServiceId, f64>>;

impl CptStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, target: &Target, source: &ServiceId) -> Option<&CptEntry> {
        self.tables.get(target).and_then(|t| t.get(source))
    }

    pub fn probability(&self, target: &Target, source: &ServiceId) -> Option<f64> {
        self.get(target, source).map(|e| e.probability)
    }

    pub fn insert(&mut self, target: Target, source: ServiceId, entry: CptEntry) {
        self.tables.entry(target).or_default().insert(source, entry);
    }

    pub fn targets(&self) -> impl Iterator<Item = &Target> {
        self.tables.keys()
    }

    /// `(target, source, entry)` in target-then-source order.
    pub fn iter(&self) -> impl Iterator<Item = (&Target, &ServiceId, &CptEntry)> {
        self.tables
            .iter()
            .flat_map(|(t, m)| m.iter().map(move |(s, e)| (t, s, e)))
    }

    pub fn len(&self) -> usize {
        self.tables.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let store: Self = serde_json::from_str(text)?;
        for (t, s, e) in store.iter() {
            check_probability(e.probability, &format!("P({t}|{s})"))?;
        }
        Ok(store)
    }
}

fn check_probability(p: f64, what: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!("{what} = {p} is not a probability")));
    }
    Ok(())
}

/// Retention weight for an edge with `n_obs` prior observations.
pub fn adaptive_rate(n_obs: u64, cfg: &LearnerConfig) -> f64 {
    let confidence = (n_obs as f64 / cfg.n_req as f64).min(MAX_CONFIDENCE);
    cfg.alpha_base * (1.0 - confidence) + MATURE_RETENTION * confidence
}

/// Blend `observed_ratio` into `entry`, weighting the old value by the
/// adaptive rate computed from the entry's pre-update observation count.
pub fn update_cpt(entry: &CptEntry, observed_ratio: f64, cfg: &LearnerConfig) -> Result<CptEntry> {
    if !(0.0..=1.0).contains(&observed_ratio) {
        return Err(Error::Contract(format!("observed ratio {observed_ratio} outside [0, 1]")));
    }
    let alpha = adaptive_rate(entry.n_obs, cfg);
    let p = alpha * entry.probability + (1.0 - alpha) * observed_ratio;
    Ok(CptEntry {
        probability: p.clamp(0.0, 1.0),
        n_obs: entry.n_obs + 1,
    })
}

/// Refresh the conditional for every observation, in order.
///
/// An edge with no entry yet starts from probability zero, the value an
/// absent conditional implicitly has under Noisy-OR.
pub fn apply_cascades(
    observations: &[CascadeObservation],
    db: &CascadeDb,
    cfg: &LearnerConfig,
    store: &mut CptStore,
) -> Result<Vec<CptUpdate>> {
    let mut updates = Vec::with_capacity(observations.len());
    for obs in observations {
        let ratio = db.cascade_ratio(&obs.source, &obs.target)?;
        let old = store
            .get(&obs.target, &obs.source)
            .copied()
            .unwrap_or(CptEntry::prior(0.0));
        let new = update_cpt(&old, ratio, cfg)?;
        store.insert(obs.target.clone(), obs.source.clone(), new);
        updates.push(CptUpdate {
            source: obs.source.clone(),
            target: obs.target.clone(),
            probability: new.probability,
            n_obs: new.n_obs,
        });
    }
    Ok(updates)
}

/// Install expert priors with zero observations.
pub fn seed_priors(store: &mut CptStore, priors: &PriorMap) -> Result<()> {
    for (target, row) in priors {
        for (source, &p) in row {
            check_probability(p, &format!("prior P({target}|{source})"))?;
        }
    }
    for (target, row) in priors {
        for (source, &p) in row {
            store.insert(target.clone(), source.clone(), CptEntry::prior(p));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::{CascadeWindowConfig, FailureEvent};

    const EPS: f64 = 1e-12;

    #[test]
    fn rate_examples() {
        let cfg = LearnerConfig::default();
        assert!((adaptive_rate(0, &cfg) - 0.7).abs() < EPS);
        assert!((adaptive_rate(5, &cfg) - 0.8).abs() < EPS);
        assert!((adaptive_rate(100, &cfg) - 0.89).abs() < EPS);
    }

    #[test]
    fn config_bounds() {
        assert!(LearnerConfig::new(0.9, 10).is_err());
        assert!(LearnerConfig::new(-0.1, 10).is_err());
        assert!(LearnerConfig::new(0.5, 0).is_err());
        assert!(LearnerConfig::new(0.0, 1).is_ok());
    }

    #[test]
    fn update_examples() {
        let cfg = LearnerConfig::default();
        // alpha 0.8 at n_obs=5
        let e = update_cpt(&CptEntry { probability: 0.5, n_obs: 5 }, 1.0, &cfg).unwrap();
        assert!((e.probability - 0.6).abs() < EPS);
        assert_eq!(e.n_obs, 6);

        let e = update_cpt(&CptEntry { probability: 0.37, n_obs: 3 }, 0.37, &cfg).unwrap();
        assert!((e.probability - 0.37).abs() < EPS);

        let e = update_cpt(&CptEntry::prior(0.0), 0.0, &cfg).unwrap();
        assert_eq!(e.probability, 0.0);

        assert!(matches!(
            update_cpt(&CptEntry::prior(0.5), 1.2, &cfg),
            Err(Error::Contract(_))
        ));
    }

    fn db_with_pair() -> CascadeDb {
        let mut db = CascadeDb::new(CascadeWindowConfig::default());
        db.record_failure(&FailureEvent::new("m7", 710.0)).unwrap();
        db
    }

    #[test]
    fn first_cascade_from_expert_prior() {
        let mut db = db_with_pair();
        let obs = db.record_failure(&FailureEvent::new("m11", 750.0)).unwrap();
        let mut store = CptStore::new();
        store.insert(Target::service("m11"), "m7".into(), CptEntry::prior(0.3));
        let ups = apply_cascades(&obs, &db, &LearnerConfig::default(), &mut store).unwrap();
        assert_eq!(ups.len(), 1);
        assert!((ups[0].probability - 0.51).abs() < EPS);
        assert_eq!(ups[0].n_obs, 1);
    }

    #[test]
    fn empty_observations_change_nothing() {
        let db = db_with_pair();
        let mut store = CptStore::new();
        store.insert(Target::Switchover, "m7".into(), CptEntry::prior(0.2));
        let before = store.clone();
        assert!(apply_cascades(&[], &db, &LearnerConfig::default(), &mut store)
            .unwrap()
            .is_empty());
        assert_eq!(store, before);
    }

    #[test]
    fn second_update_uses_incremented_count() {
        let cfg = LearnerConfig::default();
        let mut db = CascadeDb::new(CascadeWindowConfig::default());
        let mut store = CptStore::new();
        store.insert(Target::service("b"), "a".into(), CptEntry::prior(0.3));
        let mut expected = 0.3;
        for (round, base) in [0.0, 1000.0].into_iter().enumerate() {
            db.record_failure(&FailureEvent::new("a", base)).unwrap();
            let obs = db.record_failure(&FailureEvent::new("b", base + 5.0)).unwrap();
            apply_cascades(&obs, &db, &cfg, &mut store).unwrap();
            // replay by hand
            let alpha = 0.7 * (1.0 - round as f64 / 10.0) + 0.9 * (round as f64 / 10.0);
            expected = alpha * expected + (1.0 - alpha) * 1.0;
        }
        let e = store.get(&Target::service("b"), &"a".into()).unwrap();
        assert_eq!(e.n_obs, 2);
        assert!((e.probability - expected).abs() < EPS);
        // 0.51 then 0.72 * 0.51 + 0.28
        assert!((e.probability - 0.6472).abs() < EPS);
    }

    #[test]
    fn missing_source_failures_propagate() {
        let db = CascadeDb::new(CascadeWindowConfig::default());
        let obs = vec![CascadeObservation {
            source: "ghost".into(),
            target: Target::Switchover,
            delay: 1.0,
            t: 1.0,
        }];
        let mut store = CptStore::new();
        assert!(matches!(
            apply_cascades(&obs, &db, &LearnerConfig::default(), &mut store),
            Err(Error::UndefinedRatio(_))
        ));
    }

    #[test]
    fn absent_edge_starts_at_zero() {
        let mut db = db_with_pair();
        let obs = db.record_failure(&FailureEvent::new("m5", 720.0)).unwrap();
        let mut store = CptStore::new();
        apply_cascades(&obs, &db, &LearnerConfig::default(), &mut store).unwrap();
        let p = store.probability(&Target::service("m5"), &"m7".into()).unwrap();
        assert!((p - 0.3).abs() < EPS);
    }

    #[test]
    fn priors_seed_and_validate() {
        let mut priors = PriorMap::new();
        priors.entry(Target::Switchover).or_default().insert("m11".into(), 0.6);
        let mut store = CptStore::new();
        seed_priors(&mut store, &priors).unwrap();
        assert_eq!(store.get(&Target::Switchover, &"m11".into()), Some(&CptEntry::prior(0.6)));

        let mut empty = CptStore::new();
        seed_priors(&mut empty, &PriorMap::new()).unwrap();
        assert!(empty.is_empty());

        priors.entry(Target::Switchover).or_default().insert("bad".into(), 1.5);
        let mut store = CptStore::new();
        assert!(matches!(seed_priors(&mut store, &priors), Err(Error::Config(_))));
        assert!(store.is_empty());
    }

    #[test]
    fn prior_survives_one_update() {
        let cfg = LearnerConfig::default();
        let e = update_cpt(&CptEntry::prior(0.6), 0.0, &cfg).unwrap();
        assert!(e.probability > 0.0 && e.probability < 0.6);
        assert!((e.probability - 0.42).abs() < EPS);
    }

    #[test]
    fn snapshot_layout() {
        let mut store = CptStore::new();
        store.insert(Target::Switchover, "m7".into(), CptEntry { probability: 0.51, n_obs: 3 });
        let compact = serde_json::to_string(&store).unwrap();
        assert_eq!(compact, r#"{"SO":{"m7":{"p":0.51,"n_obs":3}}}"#);
        assert_eq!(CptStore::from_json(&compact).unwrap(), store);
        assert!(CptStore::from_json(r#"{"SO":{"m7":{"p":1.5,"n_obs":0}}}"#).is_err());
    }
}
