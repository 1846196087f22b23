//! End-to-end scenarios wiring robot, jump host, aggregation and twin onto
//! one simulated network.

pub mod ops;
pub mod replay;
pub mod teleop;

pub use teleop::{run_teleop, OpsEvent, ScenarioError, TeleopConfig, TeleopReport, TeleopSim};
pub use ops::{ops_schema, OpsGateway, OpsRequest};
pub use replay::{execute, read_trace_file, replay, write_trace_file, ReplayVerdict, RunConfig, TraceHeader};
