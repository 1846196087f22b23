//! Offshore robot teleoperation and telemetry link emulator.

pub mod aggregation;
pub mod jumphost;
pub mod metrics;
pub mod netemu;
pub mod protocol;
pub mod robot;
pub mod scenario;
pub mod sweep;
