//! Noisy-OR risk aggregation followed by an odds-form evidence update.

use serde::{Deserialize, Serialize};

use crate::learner::CptStore;
use crate::telemetry::{Baselines, DegradationReport};
use crate::{Error, Result, ServiceId, Target};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    /// Switchover probability with no degraded services.
    pub base_prior: f64,
    /// Slope `k` of the likelihood map `exp(k * (normalized - threshold))`.
    pub evidence_slope: f64,
    pub min_likelihood: f64,
    pub max_likelihood: f64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            base_prior: 0.05,
            evidence_slope: 2.0,
            min_likelihood: 0.2,
            max_likelihood: 5.0,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_prior > 0.0 && self.base_prior < 1.0) {
            return Err(Error::Config(format!("base prior must lie in (0, 1), got {}", self.base_prior)));
        }
        if !(self.min_likelihood > 0.0 && self.min_likelihood <= 1.0 && self.max_likelihood >= 1.0) {
            return Err(Error::Config(format!(
                "likelihood clamp [{}, {}] must be positive and contain 1",
                self.min_likelihood, self.max_likelihood
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceItem {
    pub metric: String,
    pub likelihood_ratio: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvidenceVector {
    items: Vec<EvidenceItem>,
}

impl EvidenceVector {
    pub fn neutral() -> Self {
        Self::default()
    }

    pub fn new(items: Vec<EvidenceItem>) -> Result<Self> {
        for it in &items {
            if !(it.likelihood_ratio > 0.0 && it.likelihood_ratio.is_finite()) {
                return Err(Error::Contract(format!(
                    "likelihood ratio for {} must be positive, got {}",
                    it.metric, it.likelihood_ratio
                )));
            }
        }
        Ok(Self { items })
    }

    pub fn from_ratios<'a>(ratios: impl IntoIterator<Item = (&'a str, f64)>) -> Result<Self> {
        Self::new(
            ratios
                .into_iter()
                .map(|(m, r)| EvidenceItem {
                    metric: m.to_owned(),
                    likelihood_ratio: r,
                })
                .collect(),
        )
    }

    /// One clamped likelihood ratio per degraded metric in the report.
    pub fn from_report(report: &DegradationReport, baselines: &Baselines, cfg: &InferenceConfig) -> Self {
        let items = report
            .evidence
            .values()
            .flatten()
            .filter_map(|ev| {
                let b = baselines.get(&ev.metric)?;
                Some(EvidenceItem {
                    metric: ev.metric.clone(),
                    likelihood_ratio: likelihood_ratio(ev.normalized, b.degrade_threshold, cfg),
                })
            })
            .collect();
        Self { items }
    }

    pub fn items(&self) -> &[EvidenceItem] {
        &self.items
    }

    /// Product of all likelihood ratios.
    pub fn combined(&self) -> f64 {
        self.items.iter().map(|i| i.likelihood_ratio).product()
    }
}

/// `exp(k * (normalized - threshold))`, clamped to the configured range.
pub fn likelihood_ratio(normalized: f64, threshold: f64, cfg: &InferenceConfig) -> f64 {
    (cfg.evidence_slope * (normalized - threshold))
        .exp()
        .clamp(cfg.min_likelihood, cfg.max_likelihood)
}

/// `1 - (1 - base) * prod(1 - p_i)`.
pub fn noisy_or(base: f64, conditionals: impl IntoIterator<Item = f64>) -> f64 {
    let survive = conditionals
        .into_iter()
        .fold(1.0 - base, |acc, p| acc * (1.0 - p));
    (1.0 - survive).clamp(0.0, 1.0)
}

/// Odds-form Bayes update: posterior odds = prior odds times the combined
/// likelihood ratio.
pub fn bayesian_update(p_eff: f64, evidence: &EvidenceVector) -> f64 {
    if p_eff <= 0.0 {
        return 0.0;
    }
    if p_eff >= 1.0 {
        return 1.0;
    }
    let weighted = p_eff * evidence.combined();
    (weighted / (weighted + (1.0 - p_eff))).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskAssessment {
    pub target: Target,
    pub p_eff: f64,
    pub posterior: f64,
    /// Services whose conditional was folded, in report order.
    pub contributing: Vec<(ServiceId, f64)>,
    /// Degraded services examined; one per entry of the report.
    pub visited: usize,
}

/// Switchover risk for the current degradation report.
pub fn predict(
    report: &DegradationReport,
    cpts: &CptStore,
    evidence: &EvidenceVector,
    cfg: &InferenceConfig,
) -> RiskAssessment {
    predict_target(&Target::Switchover, report, cpts, evidence, cfg)
}

/// Risk for an arbitrary target node. Degraded services without a learned
/// conditional toward `target` are skipped.
pub fn predict_target(
    target: &Target,
    report: &DegradationReport,
    cpts: &CptStore,
    evidence: &EvidenceVector,
    cfg: &InferenceConfig,
) -> RiskAssessment {
    let mut p_eff = cfg.base_prior;
    let mut contributing = Vec::new();
    let mut visited = 0;
    for service in &report.degraded_services {
        visited += 1;
        if let Some(p_cond) = cpts.probability(target, service) {
            p_eff = noisy_or(p_eff, [p_cond]);
            contributing.push((service.clone(), p_cond));
        }
    }
    RiskAssessment {
        target: target.clone(),
        p_eff,
        posterior: bayesian_update(p_eff, evidence),
        contributing,
        visited,
    }
}
