//! Discrete-event network emulation: virtual clock, stochastic link models,
//! deployment processing profiles and the production-setup topologies.

pub mod clock;
pub mod config;
pub mod deployment;
pub mod dist;
pub mod link;
pub mod profiles;
pub mod seed;
pub mod topology;
pub mod trace;

pub use clock::{ms_to_us, us_to_ms, EventId, Fired, Micros, ScheduleError, Scheduler, SimClock};
pub use config::NetConfig;
pub use deployment::{sample_processing, DeploymentKind, DeploymentProfile};
pub use dist::{DelayFamily, DelaySpec, ProcessingSpec};
pub use link::{sample_delay, transmit, DeliveryOutcome, DeliveryStatus, Fate, LinkChannel, LinkProfile};
pub use topology::{build_topology, build_topology_with, LinkId, LinkMedium, NodeId, NodeRole, SetupId, Topology};
pub use trace::TraceRecord;

#[derive(Debug, thiserror::Error)]
pub enum NetemuError {
    #[error("unknown topology preset `{0}`")]
    UnknownPreset(String),
    #[error("unknown link profile `{0}`")]
    UnknownProfile(String),
    #[error("unknown deployment `{0}`")]
    UnknownDeployment(String),
    #[error("invalid link profile `{name}`: {reason}")]
    InvalidProfile { name: String, reason: String },
    #[error("invalid deployment `{name}`: {reason}")]
    InvalidDeployment { name: String, reason: String },
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}
