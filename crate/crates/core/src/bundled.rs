//! Fixtures compiled into the library: three incident replays, a false alarm,
//! an operator switchover, and the baselines and priors they were tuned with.

use crate::config::{self, PriorsFile};
use crate::pipeline::{Pipeline, PipelineConfig};
use crate::quorum::Persona;
use crate::simulator::Scenario;
use crate::telemetry::Baselines;
use crate::{Error, Result};

pub const EVENT1: &str = include_str!("../fixtures/event1.json");
pub const EVENT2: &str = include_str!("../fixtures/event2.json");
pub const EVENT3: &str = include_str!("../fixtures/event3.json");
pub const FALSE_ALARM: &str = include_str!("../fixtures/false_alarm.json");
pub const USER_SO: &str = include_str!("../fixtures/user_so.json");
pub const BASELINES: &str = include_str!("../fixtures/baselines.json");
pub const PRIORS: &str = include_str!("../fixtures/priors.json");

pub const SCENARIO_NAMES: [&str; 5] = ["event1", "event2", "event3", "false_alarm", "user_so"];

pub fn scenario(name: &str) -> Result<Scenario> {
    let text = match name {
        "event1" => EVENT1,
        "event2" => EVENT2,
        "event3" => EVENT3,
        "false_alarm" => FALSE_ALARM,
        "user_so" => USER_SO,
        other => return Err(Error::Config(format!("no bundled scenario `{other}`"))),
    };
    Scenario::parse(text)
}

/// Events 1 to 3 in replay order.
pub fn event_sequence() -> Result<Vec<Scenario>> {
    ["event1", "event2", "event3"].into_iter().map(scenario).collect()
}

pub fn baselines() -> Result<Baselines> {
    config::parse_baselines(BASELINES)
}

pub fn priors() -> Result<PriorsFile> {
    PriorsFile::parse(PRIORS)
}

/// A fresh persona seeded with the bundled baselines and priors.
pub fn persona(id: &str, cfg: PipelineConfig) -> Result<Persona> {
    let pipeline = Pipeline::new(cfg, baselines()?, &priors()?)?;
    Persona::new(id, pipeline, config::DEFAULT_QUOTA)
}
