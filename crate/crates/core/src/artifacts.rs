//! JSONL and CSV writers for run output, and readers for what `report` needs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::simulator::{ScenarioRun, Strategy};
use crate::Result;

pub const METRICS_HEADER: &str = "strategy,event,detection_s,execution_s,total_s,improvement_pct";
pub const POSTERIOR_HEADER: &str = "t,target,p_eff,posterior,contributors";

pub fn to_jsonl<T: Serialize>(items: impl IntoIterator<Item = T>) -> Result<String> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(&item)?);
        out.push('\n');
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub strategy: Strategy,
    pub event: String,
    pub detection_s: Option<f64>,
    pub execution_s: Option<f64>,
    pub total_s: Option<f64>,
    pub improvement_pct: Option<f64>,
}

impl MetricsRow {
    pub fn from_run(run: &ScenarioRun) -> Self {
        let m = &run.metrics;
        Self {
            strategy: run.strategy,
            event: run.scenario.clone(),
            detection_s: m.detection_time,
            execution_s: m.detected.then_some(m.execution_time),
            total_s: m.total_so,
            improvement_pct: m.improvement_pct,
        }
    }
}

pub fn metrics_csv(rows: &[MetricsRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(METRICS_HEADER.split(','))?;
    }
    finish(w)
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// `m7:0.5212;m5:0.05`
pub fn format_contributors(c: &[(crate::ServiceId, f64)]) -> String {
    c.iter()
        .map(|(s, p)| format!("{s}:{p}"))
        .collect::<Vec<_>>()
        .join(";")
}

pub fn posterior_csv(run: &ScenarioRun) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(POSTERIOR_HEADER.split(','))?;
    for r in &run.posteriors {
        w.write_record([
            r.t.to_string(),
            r.target.to_string(),
            r.p_eff.to_string(),
            r.posterior.to_string(),
            format_contributors(&r.contributors),
        ])?;
    }
    finish(w)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| crate::Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Paths written for one run, relative to the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunFiles {
    pub timeline: PathBuf,
    pub decisions: PathBuf,
    pub cascades: PathBuf,
    pub posterior: PathBuf,
}

impl RunFiles {
    pub fn new(dir: &Path, scenario: &str, strategy: Strategy) -> Self {
        let stem = format!("{scenario}_{strategy}");
        Self {
            timeline: dir.join(format!("{stem}_timeline.jsonl")),
            decisions: dir.join(format!("{stem}_decisions.jsonl")),
            cascades: dir.join(format!("{stem}_cascades.jsonl")),
            posterior: dir.join(format!("{stem}_posterior.csv")),
        }
    }
}

pub fn write_run(dir: &Path, run: &ScenarioRun) -> Result<RunFiles> {
    let files = RunFiles::new(dir, &run.scenario, run.strategy);
    fs::write(&files.timeline, to_jsonl(run.timeline.entries())?)?;
    fs::write(&files.decisions, to_jsonl(&run.decisions)?)?;
    fs::write(&files.cascades, to_jsonl(&run.cascades)?)?;
    fs::write(&files.posterior, posterior_csv(run)?)?;
    Ok(files)
}

pub fn metrics_path(dir: &Path, strategy: Strategy) -> PathBuf {
    dir.join(format!("metrics_{strategy}.csv"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_csv_shape() {
        let rows = vec![MetricsRow {
            strategy: Strategy::Adaptive,
            event: "event3".into(),
            detection_s: Some(-20.0),
            execution_s: Some(30.0),
            total_s: Some(10.0),
            improvement_pct: Some(77.8),
        }];
        let text = metrics_csv(&rows).unwrap();
        assert_eq!(text, format!("{METRICS_HEADER}\nadaptive,event3,-20.0,30.0,10.0,77.8\n"));
        assert_eq!(parse_metrics_csv(&text).unwrap(), rows);
        assert_eq!(metrics_csv(&[]).unwrap(), format!("{METRICS_HEADER}\n"));
    }

    #[test]
    fn undetected_row_has_blank_cells() {
        let rows = vec![MetricsRow {
            strategy: Strategy::Static,
            event: "false_alarm".into(),
            detection_s: None,
            execution_s: None,
            total_s: None,
            improvement_pct: None,
        }];
        let text = metrics_csv(&rows).unwrap();
        assert!(text.ends_with("static,false_alarm,,,,\n"));
        assert_eq!(parse_metrics_csv(&text).unwrap(), rows);
    }
}
