//! Predictive arbitration engine for geographically redundant (Geo-HA) clusters.
//!
//! Each arbiter persona runs a telemetry → cascade → learner → inference → policy
//! chain. Service failures that follow each other inside a short window are
//! recorded as cascades and folded into conditional probability tables, which
//! a Noisy-OR model combines into the probability that a switchover is needed.
//! A dual-threshold hysteresis rule turns that probability into a decision.
//!
//! The [`simulator`] drives personas through scripted fault-injection scenarios
//! and measures detection lead and switchover downtime against heartbeat-based
//! reactive arbitration.

pub mod artifacts;
pub mod bundled;
pub mod cascade;
pub mod config;
mod error;
mod ids;
pub mod inference;
pub mod learner;
pub mod pipeline;
pub mod policy;
pub mod quorum;
pub mod simulator;
pub mod telemetry;
pub mod verify;

pub use error::{Error, Result};
pub use ids::{ServiceId, Target};
