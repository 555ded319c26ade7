//! Dual-threshold hysteresis decision with cost-derived activation threshold.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Decision {
    Switchover,
    Standby,
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decision::Switchover => "SWITCHOVER",
            Decision::Standby => "STANDBY",
        })
    }
}

/// `c_fp / (c_fp + c_fn)`: switching over is the cheaper bet exactly when
/// `p * c_fn > (1 - p) * c_fp`.
pub fn threshold_from_costs(c_fp: f64, c_fn: f64) -> Result<f64> {
    if !(c_fp > 0.0 && c_fp.is_finite() && c_fn > 0.0 && c_fn.is_finite()) {
        return Err(Error::Config(format!("costs must be positive, got c_fp={c_fp}, c_fn={c_fn}")));
    }
    Ok(c_fp / (c_fp + c_fn))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub tau_active: f64,
    pub delta: f64,
    pub c_fp: f64,
    pub c_fn: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self::from_costs(3.0, 7.0, 0.05).expect("default thresholds are valid")
    }
}

impl Thresholds {
    pub fn from_costs(c_fp: f64, c_fn: f64, delta: f64) -> Result<Self> {
        let th = Self {
            tau_active: threshold_from_costs(c_fp, c_fn)?,
            delta,
            c_fp,
            c_fn,
        };
        th.validate()?;
        Ok(th)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta >= 0.0) {
            return Err(Error::Config(format!("hysteresis delta must be non-negative, got {}", self.delta)));
        }
        if !(self.lower() > 0.0 && self.upper() < 1.0) {
            return Err(Error::Config(format!(
                "hysteresis band [{}, {}] must lie strictly inside (0, 1)",
                self.lower(),
                self.upper()
            )));
        }
        Ok(())
    }

    pub fn upper(&self) -> f64 {
        self.tau_active + self.delta
    }

    pub fn lower(&self) -> f64 {
        self.tau_active - self.delta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionState {
    pub decision: Decision,
    pub previous: Decision,
    /// Time of the last transition.
    pub since: f64,
}

impl DecisionState {
    pub fn standby(since: f64) -> Self {
        Self {
            decision: Decision::Standby,
            previous: Decision::Standby,
            since,
        }
    }

    pub fn transitioned(&self) -> bool {
        self.decision != self.previous
    }
}

impl Default for DecisionState {
    fn default() -> Self {
        Self::standby(0.0)
    }
}

pub fn decide(posterior: f64, state: &DecisionState, th: &Thresholds, now: f64) -> DecisionState {
    let decision = if posterior > th.upper() {
        Decision::Switchover
    } else if posterior < th.lower() {
        Decision::Standby
    } else {
        state.decision
    };
    DecisionState {
        decision,
        previous: state.decision,
        since: if decision != state.decision { now } else { state.since },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub t: f64,
    pub posterior: f64,
    pub decision: Decision,
}
