//! Evaluation metrics, box-plot summaries and the experiment runner.

pub mod experiment;
pub mod packet;
pub mod report;
pub mod stats;

pub use experiment::{ExperimentSpec, MetricKind, MetricSample, PayloadModel};
pub use report::{compare, run_experiment, Comparison, IncompatibleReports, Report};
pub use packet::{compute_pdr, compute_per, EmptyRun, PacketAccounting};
pub use stats::{summarize, BoxStats, StatsError};
