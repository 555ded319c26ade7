//! On-disk configuration and snapshot formats.
//!
//! * baselines: `{"latency": {"baseline_value": 100.0, "degrade_threshold": 1.5}}`
//! * priors: `{"critical_services": ["m11"], "priors": {"SO": {"m7": 0.05}}}`
//! * persona registry: a list of persona entries pointing at the files above
//! * CPT snapshot: `{"SO": {"m7": {"p": 0.51, "n_obs": 3}}}`, with cascade
//!   counters kept in a sibling `*.counts.json` file

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cascade::CascadeCounts;
use crate::learner::{CptStore, PriorMap};
use crate::telemetry::{Baselines, SiteBaseline};
use crate::{Error, Result, ServiceId, Target};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct BaselineRow {
    baseline_value: f64,
    degrade_threshold: f64,
}

pub fn parse_baselines(text: &str) -> Result<Baselines> {
    let rows: BTreeMap<String, BaselineRow> = serde_json::from_str(text)?;
    rows.into_iter()
        .map(|(metric, row)| {
            let b = SiteBaseline::new(metric.clone(), row.baseline_value, row.degrade_threshold)?;
            Ok((metric, b))
        })
        .collect()
}

pub fn baselines_to_json(baselines: &Baselines) -> Result<String> {
    let rows: BTreeMap<&String, BaselineRow> = baselines
        .iter()
        .map(|(m, b)| {
            (
                m,
                BaselineRow {
                    baseline_value: b.baseline_value,
                    degrade_threshold: b.degrade_threshold,
                },
            )
        })
        .collect();
    Ok(serde_json::to_string_pretty(&rows)?)
}

pub fn load_baselines(path: &Path) -> Result<Baselines> {
    parse_baselines(&read(path)?)
}

/// Expert priors plus the critical service group whose failures confirm a
/// switchover was necessary.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PriorsFile {
    #[serde(default)]
    pub critical_services: BTreeSet<ServiceId>,
    #[serde(default)]
    pub priors: PriorMap,
}

impl PriorsFile {
    pub fn parse(text: &str) -> Result<Self> {
        let file: Self = serde_json::from_str(text)?;
        if file
            .critical_services
            .iter()
            .any(|s| s.as_str() == Target::SWITCHOVER_KEY)
        {
            return Err(Error::Config(format!(
                "`{}` is reserved for the switchover node",
                Target::SWITCHOVER_KEY
            )));
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaEntry {
    pub persona_id: String,
    #[serde(default = "default_quota")]
    pub quota: usize,
    pub baselines: PathBuf,
    pub priors: PathBuf,
    #[serde(default)]
    pub cpt_snapshot: Option<PathBuf>,
}

pub const DEFAULT_QUOTA: usize = 64;

fn default_quota() -> usize {
    DEFAULT_QUOTA
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PersonaRegistry {
    pub personas: Vec<PersonaEntry>,
}

impl PersonaRegistry {
    /// Relative paths inside the registry resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut reg: Self = serde_json::from_str(&read(path)?)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        for p in &mut reg.personas {
            p.baselines = dir.join(&p.baselines);
            p.priors = dir.join(&p.priors);
            p.cpt_snapshot = p.cpt_snapshot.as_ref().map(|s| dir.join(s));
        }
        let mut seen = BTreeSet::new();
        for p in &reg.personas {
            if !seen.insert(&p.persona_id) {
                return Err(Error::Config(format!("duplicate persona id {}", p.persona_id)));
            }
        }
        Ok(reg)
    }

    pub fn get(&self, id: &str) -> Option<&PersonaEntry> {
        self.personas.iter().find(|p| p.persona_id == id)
    }
}

/// Path of the cascade-counter file kept next to a CPT snapshot.
pub fn counts_path(snapshot: &Path) -> PathBuf {
    let stem = snapshot
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "cpt".into());
    snapshot.with_file_name(format!("{stem}.counts.json"))
}

/// Load a CPT snapshot and, when present, its cascade counters.
pub fn load_snapshot(path: &Path) -> Result<(CptStore, Option<CascadeCounts>)> {
    let store = CptStore::from_json(&read(path)?)?;
    let cp = counts_path(path);
    let counts = if cp.exists() {
        Some(serde_json::from_str(&read(&cp)?)?)
    } else {
        None
    };
    Ok((store, counts))
}

pub fn save_snapshot(path: &Path, store: &CptStore, counts: &CascadeCounts) -> Result<()> {
    fs::write(path, store.to_json()? + "\n")?;
    fs::write(counts_path(path), serde_json::to_string_pretty(counts)? + "\n")?;
    Ok(())
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}
