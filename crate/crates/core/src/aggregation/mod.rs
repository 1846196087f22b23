//! Platform-side telemetry store: append-only log, time-range queries,
//! anomaly rules and store-and-forward to the shore twin.

pub mod forward;
pub mod rules;

use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::netemu::clock::{us_to_ms, Micros};
use crate::robot::{TelemetryKind, TelemetryRecord};

pub use forward::{ForwardConfig, ForwardReport, Forwarder, TwinStore};
pub use rules::{Alarm, AnomalyRule, RuleEngine, RuleOp};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AggError {
    #[error("log is full ({0} records)")]
    StorageFull(usize),
    #[error("invalid range: t0 {0} > t1 {1}")]
    InvalidRange(Micros, Micros),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryFilter {
    pub source: Option<String>,
    pub kind: Option<TelemetryKind>,
}

impl QueryFilter {
    pub fn matches(&self, r: &TelemetryRecord) -> bool {
        self.source.as_ref().is_none_or(|s| *s == r.source) && self.kind.is_none_or(|k| k == r.kind)
    }
}

/// Append-only record log. Offsets are dense from 0; records never change
/// once appended. Identical records are stored twice.
#[derive(Debug, Clone, Default)]
pub struct AppendLog {
    records: Vec<TelemetryRecord>,
    by_time: BTreeSet<(Micros, u64)>,
    capacity: Option<usize>,
}

impl AppendLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bounded(capacity: usize) -> Self {
        Self {
            capacity: Some(capacity),
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, offset: u64) -> Option<&TelemetryRecord> {
        self.records.get(offset as usize)
    }

    pub fn records(&self) -> &[TelemetryRecord] {
        &self.records
    }

    pub fn append(&mut self, record: TelemetryRecord) -> Result<u64, AggError> {
        if let Some(cap) = self.capacity {
            if self.records.len() >= cap {
                return Err(AggError::StorageFull(cap));
            }
        }
        let offset = self.records.len() as u64;
        self.by_time.insert((record.timestamp_us, offset));
        self.records.push(record);
        Ok(offset)
    }

    /// Records with `t0 <= timestamp <= t1` matching `filter`, by timestamp
    /// then offset.
    pub fn query(&self, t0: Micros, t1: Micros, filter: &QueryFilter) -> Result<Vec<(u64, &TelemetryRecord)>, AggError> {
        if t0 > t1 {
            return Err(AggError::InvalidRange(t0, t1));
        }
        Ok(self
            .by_time
            .range((t0, 0)..=(t1, u64::MAX))
            .map(|&(_, off)| (off, &self.records[off as usize]))
            .filter(|(_, r)| filter.matches(r))
            .collect())
    }

    pub fn write_snapshot(&self, path: &Path) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    /// Rebuild a log from a JSON-lines snapshot; offsets follow line order.
    pub fn read_snapshot(path: &Path) -> std::io::Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut log = Self::new();
        for line in f.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let r: TelemetryRecord = serde_json::from_str(&line)?;
            log.append(r).expect("unbounded");
        }
        Ok(log)
    }
}

/// Ingestion point at the platform: log, rule evaluation, ingest latency.
#[derive(Debug, Clone, Default)]
pub struct AggregationServer {
    pub log: AppendLog,
    pub rules: RuleEngine,
    pub alarms: Vec<Alarm>,
    /// Record timestamp to ingestion, ms.
    pub ingest_latency_ms: Vec<f64>,
}

impl AggregationServer {
    pub fn new(log: AppendLog, rules: RuleEngine) -> Self {
        Self {
            log,
            rules,
            ..Self::default()
        }
    }

    pub fn ingest(&mut self, record: TelemetryRecord, now: Micros) -> Result<(u64, Vec<Alarm>), AggError> {
        let alarms = self.rules.evaluate(&record);
        let lag = now.saturating_sub(record.timestamp_us);
        let off = self.log.append(record)?;
        self.ingest_latency_ms.push(us_to_ms(lag));
        self.alarms.extend(alarms.iter().cloned());
        Ok((off, alarms))
    }
}
