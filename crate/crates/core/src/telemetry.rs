//! Multi-tier telemetry store, site normalization, and degradation thresholds.
//!
//! Samples are kept per `(service, metric)` stream in a bounded in-memory
//! buffer and optionally mirrored to a JSON Lines log. Values are normalized
//! as a ratio to a site baseline, so one threshold works regardless of the
//! deployment's scale.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, ServiceId};

/// Default retention per stream, in seconds.
pub const DEFAULT_HORIZON: f64 = 3600.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Node,
    Network,
    Application,
    Csg,
}

/// One timestamped metric reading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetrySample {
    pub service: ServiceId,
    pub metric: String,
    pub value: f64,
    #[serde(rename = "t")]
    pub timestamp: f64,
    pub tier: Tier,
}

impl TelemetrySample {
    pub fn new(
        service: impl Into<String>,
        metric: impl Into<String>,
        value: f64,
        timestamp: f64,
        tier: Tier,
    ) -> Self {
        Self {
            service: ServiceId::new(service),
            metric: metric.into(),
            value,
            timestamp,
            tier,
        }
    }

    fn validate(&self) -> Result<()> {
        if !self.timestamp.is_finite() || self.timestamp < 0.0 {
            return Err(Error::InvalidSample(format!(
                "timestamp {} must be finite and non-negative",
                self.timestamp
            )));
        }
        if !self.value.is_finite() {
            return Err(Error::InvalidSample(format!("value {} is not finite", self.value)));
        }
        Ok(())
    }
}

/// Per-metric normalization reference for one site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteBaseline {
    pub metric: String,
    pub baseline_value: f64,
    /// Normalized ratio above which the metric counts as degraded.
    pub degrade_threshold: f64,
}

impl SiteBaseline {
    pub fn new(metric: impl Into<String>, baseline_value: f64, degrade_threshold: f64) -> Result<Self> {
        let b = Self {
            metric: metric.into(),
            baseline_value,
            degrade_threshold,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.baseline_value > 0.0 && self.baseline_value.is_finite()) {
            return Err(Error::Config(format!(
                "baseline for {} must be positive, got {}",
                self.metric, self.baseline_value
            )));
        }
        if !(self.degrade_threshold > 0.0 && self.degrade_threshold.is_finite()) {
            return Err(Error::Config(format!(
                "degrade threshold for {} must be positive, got {}",
                self.metric, self.degrade_threshold
            )));
        }
        Ok(())
    }
}

pub type Baselines = BTreeMap<String, SiteBaseline>;

/// Ratio of the sample's value to the site baseline.
pub fn normalize(sample: &TelemetrySample, baseline: &SiteBaseline) -> Result<f64> {
    if sample.metric != baseline.metric {
        return Err(Error::Config(format!(
            "baseline for {} applied to metric {}",
            baseline.metric, sample.metric
        )));
    }
    baseline.validate()?;
    Ok(sample.value / baseline.baseline_value)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEvidence {
    pub metric: String,
    pub normalized: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DegradationReport {
    pub degraded_services: BTreeSet<ServiceId>,
    /// Worst normalized value per degraded metric within the window.
    pub evidence: BTreeMap<ServiceId, Vec<MetricEvidence>>,
}

impl DegradationReport {
    pub fn is_empty(&self) -> bool {
        self.degraded_services.is_empty()
    }

    pub fn from_services<I, S>(services: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            degraded_services: services.into_iter().map(|s| ServiceId::new(s)).collect(),
            evidence: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StreamKey {
    pub service: ServiceId,
    pub metric: String,
}

/// In-memory telemetry store with per-stream retention.
pub struct TelemetryStore {
    horizon: f64,
    streams: BTreeMap<StreamKey, VecDeque<TelemetrySample>>,
    log: Option<Box<dyn Write + Send>>,
}

impl fmt::Debug for TelemetryStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TelemetryStore")
            .field("horizon", &self.horizon)
            .field("streams", &self.streams.len())
            .field("logging", &self.log.is_some())
            .finish()
    }
}

impl Default for TelemetryStore {
    fn default() -> Self {
        Self::new(DEFAULT_HORIZON)
    }
}

impl TelemetryStore {
    pub fn new(horizon: f64) -> Self {
        Self {
            horizon,
            streams: BTreeMap::new(),
            log: None,
        }
    }

    /// Mirror every accepted sample to `log` as one JSON line.
    pub fn with_log(mut self, log: Box<dyn Write + Send>) -> Self {
        self.log = Some(log);
        self
    }

    pub fn set_log(&mut self, log: Option<Box<dyn Write + Send>>) {
        self.log = log;
    }

    pub fn ingest(&mut self, sample: TelemetrySample) -> Result<()> {
        sample.validate()?;
        let key = StreamKey {
            service: sample.service.clone(),
            metric: sample.metric.clone(),
        };
        let stream = self.streams.entry(key).or_default();
        if let Some(last) = stream.back() {
            if sample.timestamp < last.timestamp {
                return Err(Error::Monotonicity {
                    service: sample.service,
                    metric: sample.metric,
                    t: sample.timestamp,
                    last: last.timestamp,
                });
            }
        }
        if let Some(log) = self.log.as_mut() {
            serde_json::to_writer(&mut *log, &sample)?;
            log.write_all(b"\n")?;
        }
        let cutoff = sample.timestamp - self.horizon;
        stream.push_back(sample);
        while stream.front().is_some_and(|s| s.timestamp < cutoff) {
            stream.pop_front();
        }
        Ok(())
    }

    pub fn flush_log(&mut self) -> Result<()> {
        if let Some(log) = self.log.as_mut() {
            log.flush()?;
        }
        Ok(())
    }

    /// All samples of `service` with `start <= t <= end`, ordered by time.
    pub fn query_window(&self, service: &ServiceId, start: f64, end: f64) -> Result<Vec<TelemetrySample>> {
        check_window(start, end)?;
        let mut out: Vec<TelemetrySample> = self
            .streams
            .iter()
            .filter(|(k, _)| &k.service == service)
            .flat_map(|(_, s)| s.iter())
            .filter(|s| s.timestamp >= start && s.timestamp <= end)
            .cloned()
            .collect();
        out.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        Ok(out)
    }

    /// Like [`query_window`](Self::query_window) across every service.
    pub fn query_all(&self, start: f64, end: f64) -> Result<Vec<TelemetrySample>> {
        check_window(start, end)?;
        let mut out: Vec<TelemetrySample> = self
            .streams
            .values()
            .flat_map(|s| s.iter())
            .filter(|s| s.timestamp >= start && s.timestamp <= end)
            .cloned()
            .collect();
        out.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        Ok(out)
    }

    /// A service is degraded when any of its metrics has a normalized value
    /// strictly above its threshold within `[now - window, now]`.
    ///
    /// Metrics without a baseline are ignored.
    pub fn assess_degradation(&self, now: f64, baselines: &Baselines, window: f64) -> Result<DegradationReport> {
        if !(window > 0.0) {
            return Err(Error::Config(format!("assessment window must be positive, got {window}")));
        }
        let start = now - window;
        let mut report = DegradationReport::default();
        for (key, stream) in &self.streams {
            let Some(baseline) = baselines.get(&key.metric) else {
                continue;
            };
            let worst = stream
                .iter()
                .rev()
                .take_while(|s| s.timestamp >= start)
                .filter(|s| s.timestamp <= now)
                .map(|s| s.value / baseline.baseline_value)
                .fold(f64::NEG_INFINITY, f64::max);
            if worst > baseline.degrade_threshold {
                report.degraded_services.insert(key.service.clone());
                report.evidence.entry(key.service.clone()).or_default().push(MetricEvidence {
                    metric: key.metric.clone(),
                    normalized: worst,
                });
            }
        }
        Ok(report)
    }

    pub fn stream_keys(&self) -> impl Iterator<Item = &StreamKey> {
        self.streams.keys()
    }

    pub fn len(&self) -> usize {
        self.streams.values().map(VecDeque::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drop every sample; the log sink is kept.
    pub fn clear(&mut self) {
        self.streams.clear();
    }
}

fn check_window(start: f64, end: f64) -> Result<()> {
    if start > end {
        return Err(Error::Config(format!("query window start {start} exceeds end {end}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn latency(t: f64, v: f64) -> TelemetrySample {
        TelemetrySample::new("m7", "latency", v, t, Tier::Application)
    }

    fn baselines() -> Baselines {
        let mut b = Baselines::new();
        b.insert("latency".into(), SiteBaseline::new("latency", 100.0, 1.5).unwrap());
        b
    }

    #[test]
    fn ingest_then_query() {
        let mut store = TelemetryStore::default();
        store.ingest(latency(700.0, 120.0)).unwrap();
        let got = store.query_window(&"m7".into(), 0.0, f64::INFINITY).unwrap();
        assert_eq!(got, vec![latency(700.0, 120.0)]);
    }

    #[test]
    fn out_of_order_rejected() {
        let mut store = TelemetryStore::default();
        store.ingest(latency(700.0, 120.0)).unwrap();
        let err = store.ingest(latency(699.0, 120.0)).unwrap_err();
        assert!(matches!(err, Error::Monotonicity { .. }));
        // equal timestamps are allowed
        store.ingest(latency(700.0, 121.0)).unwrap();
    }

    #[test]
    fn three_services_three_samples() {
        let mut store = TelemetryStore::default();
        for (i, svc) in ["a", "b", "c"].iter().enumerate() {
            store
                .ingest(TelemetrySample::new(*svc, "cpu", 1.0, i as f64, Tier::Node))
                .unwrap();
        }
        assert_eq!(store.query_all(0.0, f64::INFINITY).unwrap().len(), 3);
    }

    #[test]
    fn window_bounds_are_inclusive() {
        let mut store = TelemetryStore::default();
        for t in [1.0, 2.0, 3.0, 5.0] {
            store.ingest(latency(t, 1.0)).unwrap();
        }
        let ts: Vec<f64> = store
            .query_window(&"m7".into(), 2.0, 3.0)
            .unwrap()
            .iter()
            .map(|s| s.timestamp)
            .collect();
        assert_eq!(ts, vec![2.0, 3.0]);
        assert_eq!(store.query_window(&"m7".into(), 5.0, 5.0).unwrap().len(), 1);
        assert!(store.query_window(&"m7".into(), 3.0, 2.0).is_err());
    }

    #[test]
    fn empty_store_and_unknown_service() {
        let store = TelemetryStore::default();
        assert!(store.query_window(&"nope".into(), 0.0, 10.0).unwrap().is_empty());
        assert!(store.assess_degradation(10.0, &baselines(), 5.0).unwrap().is_empty());
    }

    #[test]
    fn normalize_ratio() {
        let b = SiteBaseline::new("latency", 100.0, 1.5).unwrap();
        assert_eq!(normalize(&latency(0.0, 200.0), &b).unwrap(), 2.0);
        assert_eq!(normalize(&latency(0.0, 100.0), &b).unwrap(), 1.0);
        assert_eq!(normalize(&latency(0.0, 0.0), &b).unwrap(), 0.0);
        let cpu = TelemetrySample::new("m7", "cpu", 1.0, 0.0, Tier::Node);
        assert!(matches!(normalize(&cpu, &b), Err(Error::Config(_))));
    }

    #[test]
    fn baseline_must_be_positive() {
        assert!(SiteBaseline::new("x", 0.0, 1.5).is_err());
        assert!(SiteBaseline::new("x", 1.0, 0.0).is_err());
    }

    #[test]
    fn degradation_threshold_is_strict() {
        let b = baselines();
        let mut store = TelemetryStore::default();
        store.ingest(latency(10.0, 200.0)).unwrap();
        let r = store.assess_degradation(10.0, &b, 5.0).unwrap();
        assert_eq!(r.degraded_services.iter().map(|s| s.as_str()).collect::<Vec<_>>(), ["m7"]);
        assert_eq!(r.evidence[&"m7".into()][0].normalized, 2.0);

        let mut store = TelemetryStore::default();
        store.ingest(latency(10.0, 150.0)).unwrap();
        assert!(store.assess_degradation(10.0, &b, 5.0).unwrap().is_empty());

        let mut store = TelemetryStore::default();
        store.ingest(latency(10.0, 140.0)).unwrap();
        assert!(store.assess_degradation(10.0, &b, 5.0).unwrap().is_empty());
    }

    #[test]
    fn degradation_ignores_samples_outside_window() {
        let b = baselines();
        let mut store = TelemetryStore::default();
        store.ingest(latency(1.0, 300.0)).unwrap();
        store.ingest(latency(10.0, 100.0)).unwrap();
        assert!(store.assess_degradation(10.0, &b, 5.0).unwrap().is_empty());
        assert!(!store.assess_degradation(5.0, &b, 5.0).unwrap().is_empty());
    }

    #[test]
    fn retention_horizon_evicts_old_samples() {
        let mut store = TelemetryStore::new(10.0);
        store.ingest(latency(0.0, 1.0)).unwrap();
        store.ingest(latency(5.0, 1.0)).unwrap();
        store.ingest(latency(20.0, 1.0)).unwrap();
        assert_eq!(store.len(), 1);
    }

    #[test]
    fn log_line_format() {
        use std::sync::{Arc, Mutex};

        #[derive(Clone, Default)]
        struct Shared(Arc<Mutex<Vec<u8>>>);
        impl Write for Shared {
            fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
                self.0.lock().unwrap().extend_from_slice(buf);
                Ok(buf.len())
            }
            fn flush(&mut self) -> std::io::Result<()> {
                Ok(())
            }
        }

        let sink = Shared::default();
        let mut store = TelemetryStore::default().with_log(Box::new(sink.clone()));
        store.ingest(latency(700.0, 120.0)).unwrap();
        let text = String::from_utf8(sink.0.lock().unwrap().clone()).unwrap();
        assert_eq!(
            text,
            "{\"service\":\"m7\",\"metric\":\"latency\",\"value\":120.0,\"t\":700.0,\"tier\":\"application\"}\n"
        );
    }

    #[test]
    fn rejects_negative_timestamp() {
        let mut store = TelemetryStore::default();
        assert!(matches!(store.ingest(latency(-1.0, 1.0)), Err(Error::InvalidSample(_))));
    }
}
