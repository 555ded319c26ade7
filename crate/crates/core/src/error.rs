use thiserror::Error;

use crate::ids::ServiceId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("out-of-order sample for {service}/{metric}: t={t} precedes t={last}")]
    Monotonicity {
        service: ServiceId,
        metric: String,
        t: f64,
        last: f64,
    },

    #[error("out-of-order failure event: t={t} precedes t={last}")]
    Ordering { t: f64, last: f64 },

    #[error("cascade ratio undefined: no failures recorded for {0}")]
    UndefinedRatio(ServiceId),

    #[error("quorum lost: only {alive} member(s) alive")]
    QuorumLost { alive: usize },

    #[error("invalid telemetry sample: {0}")]
    InvalidSample(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
