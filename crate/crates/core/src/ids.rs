use std::fmt;

use serde::{Deserialize, Serialize};

/// Opaque service identifier, e.g. `m7`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ServiceId(String);

impl ServiceId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for ServiceId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

impl fmt::Display for ServiceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(&self.0)
    }
}

/// The node a conditional probability points at: either the distinguished
/// switchover node or another service.
///
/// Serialized as the bare string `"SO"` or the service id.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum Target {
    Switchover,
    Service(ServiceId),
}

impl Target {
    pub const SWITCHOVER_KEY: &'static str = "SO";

    pub fn service(id: impl Into<String>) -> Self {
        Target::Service(ServiceId::new(id))
    }

    pub fn as_key(&self) -> &str {
        match self {
            Target::Switchover => Self::SWITCHOVER_KEY,
            Target::Service(id) => id.as_str(),
        }
    }
}

impl From<String> for Target {
    fn from(s: String) -> Self {
        if s == Self::SWITCHOVER_KEY {
            Target::Switchover
        } else {
            Target::Service(ServiceId(s))
        }
    }
}

impl From<Target> for String {
    fn from(t: Target) -> Self {
        match t {
            Target::Switchover => Target::SWITCHOVER_KEY.to_owned(),
            Target::Service(id) => id.0,
        }
    }
}

impl From<ServiceId> for Target {
    fn from(id: ServiceId) -> Self {
        Target::Service(id)
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_key())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn target_string_form() {
        assert_eq!(Target::from("SO".to_owned()), Target::Switchover);
        assert_eq!(Target::from("m11".to_owned()), Target::service("m11"));
        assert_eq!(serde_json::to_string(&Target::Switchover).unwrap(), "\"SO\"");
    }

    #[test]
    fn switchover_sorts_first() {
        assert!(Target::Switchover < Target::service("a"));
    }
}
