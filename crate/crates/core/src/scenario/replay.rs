//! Self-describing trace files.
//!
//! The first line is a header with everything needed to re-run the
//! scenario and the SHA-256 of its canonical report; the rest is the
//! JSON-lines trace. Replay re-executes the header and compares both.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::teleop::{run_teleop, ScenarioError, TeleopConfig};
use crate::metrics::experiment::ExperimentSpec;
use crate::metrics::report::run_experiment;
use crate::netemu::config::{NetConfig, NetConfigFile};
use crate::netemu::trace::{self, TraceRecord};

pub const TRACE_FORMAT: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RunConfig {
    Experiment {
        spec: ExperimentSpec,
        #[serde(default)]
        net: NetConfigFile,
    },
    Teleop {
        config: Box<TeleopConfig>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceHeader {
    pub ptxlink_trace: u32,
    #[serde(flatten)]
    pub run: RunConfig,
    pub records: usize,
    pub report_sha256: String,
}

/// Output of one execution of a [`RunConfig`].
#[derive(Debug, Clone)]
pub struct Execution {
    /// Canonical report JSON (no wall-clock fields).
    pub report_json: String,
    pub trace: Vec<TraceRecord>,
}

impl Execution {
    pub fn report_sha256(&self) -> String {
        hex::encode(Sha256::digest(self.report_json.as_bytes()))
    }

    pub fn header(&self, run: RunConfig) -> TraceHeader {
        TraceHeader {
            ptxlink_trace: TRACE_FORMAT,
            run,
            records: self.trace.len(),
            report_sha256: self.report_sha256(),
        }
    }
}

pub fn execute(run: &RunConfig) -> Result<Execution, ScenarioError> {
    match run {
        RunConfig::Experiment { spec, net } => {
            let cfg = NetConfig::from_file(net.clone())?;
            let (report, data) = run_experiment(spec, &cfg).map_err(|e| ScenarioError::Config(e.to_string()))?;
            Ok(Execution {
                report_json: report.canonical_json(),
                trace: data.trace,
            })
        }
        RunConfig::Teleop { config } => {
            let (report, sim) = run_teleop((**config).clone())?;
            Ok(Execution {
                report_json: serde_json::to_string_pretty(&report).expect("report serializes"),
                trace: sim.trace().to_vec(),
            })
        }
    }
}

pub fn write_trace_file<W: Write>(mut w: W, header: &TraceHeader, records: &[TraceRecord]) -> std::io::Result<()> {
    serde_json::to_writer(&mut w, header)?;
    w.write_all(b"\n")?;
    trace::write_jsonl(&mut w, records)?;
    w.flush()
}

#[derive(Debug, thiserror::Error)]
pub enum TraceFileError {
    #[error("trace file is empty")]
    Empty,
    #[error("bad trace header: {0}")]
    Header(String),
    #[error("unsupported trace format {0}")]
    Format(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn read_trace_file<R: BufRead>(mut r: R) -> Result<(TraceHeader, Vec<TraceRecord>), TraceFileError> {
    let mut first = String::new();
    if r.read_line(&mut first)? == 0 {
        return Err(TraceFileError::Empty);
    }
    let header: TraceHeader = serde_json::from_str(&first).map_err(|e| TraceFileError::Header(e.to_string()))?;
    if header.ptxlink_trace != TRACE_FORMAT {
        return Err(TraceFileError::Format(header.ptxlink_trace));
    }
    Ok((header, trace::read_jsonl(r)?))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum ReplayVerdict {
    Identical { records: usize },
    /// First record (0-based) where the recorded and re-run traces differ.
    TraceDiverges { record: usize },
    ReportDiffers { recorded: String, replayed: String },
}

/// Re-run the header's scenario and compare against the recorded data.
pub fn replay(header: &TraceHeader, recorded: &[TraceRecord]) -> Result<ReplayVerdict, ScenarioError> {
    let ex = execute(&header.run)?;
    if recorded.len() != header.records {
        return Ok(ReplayVerdict::TraceDiverges {
            record: recorded.len().min(header.records),
        });
    }
    if let Some(i) = (0..ex.trace.len().max(recorded.len())).find(|&i| ex.trace.get(i) != recorded.get(i)) {
        return Ok(ReplayVerdict::TraceDiverges { record: i });
    }
    let sha = ex.report_sha256();
    if sha != header.report_sha256 {
        return Ok(ReplayVerdict::ReportDiffers {
            recorded: header.report_sha256.clone(),
            replayed: sha,
        });
    }
    Ok(ReplayVerdict::Identical { records: recorded.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netemu::deployment::DeploymentKind;

    fn small() -> RunConfig {
        RunConfig::Experiment {
            spec: ExperimentSpec::new("5g_sa", DeploymentKind::Orchestrated, 5, 3),
            net: NetConfigFile::default(),
        }
    }

    fn file(run: RunConfig) -> Vec<u8> {
        let ex = execute(&run).unwrap();
        let mut buf = Vec::new();
        write_trace_file(&mut buf, &ex.header(run), &ex.trace).unwrap();
        buf
    }

    #[test]
    fn round_trip_replays_identical() {
        let buf = file(small());
        let (h, recs) = read_trace_file(&buf[..]).unwrap();
        assert!(matches!(replay(&h, &recs).unwrap(), ReplayVerdict::Identical { .. }));
    }

    #[test]
    fn edited_record_detected() {
        let buf = file(small());
        let (h, mut recs) = read_trace_file(&buf[..]).unwrap();
        recs[4].bytes += 1;
        assert_eq!(replay(&h, &recs).unwrap(), ReplayVerdict::TraceDiverges { record: 4 });
    }

    #[test]
    fn wrong_report_hash_detected() {
        let buf = file(small());
        let (mut h, recs) = read_trace_file(&buf[..]).unwrap();
        h.report_sha256 = "00".repeat(32);
        assert!(matches!(replay(&h, &recs).unwrap(), ReplayVerdict::ReportDiffers { .. }));
    }

    #[test]
    fn teleop_header_round_trips() {
        let run = RunConfig::Teleop {
            config: Box::new(TeleopConfig {
                duration_s: 1.0,
                ..TeleopConfig::default()
            }),
        };
        let buf = file(run);
        let (h, recs) = read_trace_file(&buf[..]).unwrap();
        assert!(matches!(h.run, RunConfig::Teleop { .. }));
        assert!(matches!(replay(&h, &recs).unwrap(), ReplayVerdict::Identical { .. }));
    }

    #[test]
    fn bad_files() {
        assert!(matches!(read_trace_file(&b""[..]), Err(TraceFileError::Empty)));
        assert!(matches!(read_trace_file(&b"{}\n"[..]), Err(TraceFileError::Header(_))));
    }
}
