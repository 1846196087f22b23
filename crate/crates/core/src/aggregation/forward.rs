//! Store-and-forward of telemetry batches to the shore twin.
//!
//! A forwarder keeps one batch in flight at a time and resends it until the
//! twin's end-to-end ACK arrives, so a hop failure or outage only delays
//! data. The twin drops batches it has already applied and acks them again.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::netemu::clock::Micros;
use crate::netemu::topology::NodeId;
use crate::protocol::frame::MsgType;
use crate::protocol::net::{AppEvent, MsgId, NetError, Network};
use crate::robot::TelemetryRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForwardConfig {
    pub batch_records: usize,
    pub batch_interval_us: Micros,
    pub max_batch_bytes: usize,
    /// Wait after a failed attempt before resending.
    pub retry_after_us: Micros,
    /// Resend if the twin has not acked by then.
    pub ack_timeout_us: Micros,
}

impl Default for ForwardConfig {
    fn default() -> Self {
        Self {
            batch_records: 100,
            batch_interval_us: 5_000_000,
            max_batch_bytes: 4 << 20,
            retry_after_us: 5_000_000,
            ack_timeout_us: 60_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BatchError {
    #[error("batch truncated")]
    Truncated,
    #[error("bad record in batch: {0}")]
    Record(#[from] crate::robot::telemetry::RecordError),
}

/// Wire form: stream name (u16 length), batch id u64, count u32, then
/// records each prefixed with a u32 length.
pub fn encode_batch(stream: &str, id: u64, records: &[TelemetryRecord]) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend_from_slice(&(stream.len() as u16).to_be_bytes());
    b.extend_from_slice(stream.as_bytes());
    b.extend_from_slice(&id.to_be_bytes());
    b.extend_from_slice(&(records.len() as u32).to_be_bytes());
    for r in records {
        let e = r.encode();
        b.extend_from_slice(&(e.len() as u32).to_be_bytes());
        b.extend_from_slice(&e);
    }
    b
}

pub fn decode_batch(b: &[u8]) -> Result<(String, u64, Vec<TelemetryRecord>), BatchError> {
    let mut at = 0usize;
    let mut take = |n: usize| -> Result<&[u8], BatchError> {
        let s = b.get(at..at + n).ok_or(BatchError::Truncated)?;
        at += n;
        Ok(s)
    };
    let n = u16::from_be_bytes(take(2)?.try_into().expect("2")) as usize;
    let stream = String::from_utf8_lossy(take(n)?).into_owned();
    let id = u64::from_be_bytes(take(8)?.try_into().expect("8"));
    let count = u32::from_be_bytes(take(4)?.try_into().expect("4"));
    let mut records = Vec::new();
    for _ in 0..count {
        let len = u32::from_be_bytes(take(4)?.try_into().expect("4")) as usize;
        records.push(TelemetryRecord::decode(take(len)?)?);
    }
    Ok((stream, id, records))
}

fn encode_ack(stream: &str, id: u64) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend_from_slice(&(stream.len() as u16).to_be_bytes());
    b.extend_from_slice(stream.as_bytes());
    b.extend_from_slice(&id.to_be_bytes());
    b
}

fn decode_ack(b: &[u8]) -> Option<(String, u64)> {
    let n = u16::from_be_bytes(b.get(..2)?.try_into().ok()?) as usize;
    let stream = std::str::from_utf8(b.get(2..2 + n)?).ok()?.to_owned();
    let id = u64::from_be_bytes(b.get(2 + n..10 + n)?.try_into().ok()?);
    (b.len() == 10 + n).then_some((stream, id))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TimerPurpose {
    Flush,
    Resend { batch: u64, attempt: u32 },
}

#[derive(Debug, Clone)]
struct InFlight {
    id: u64,
    payload: Vec<u8>,
    records: usize,
    msg: MsgId,
    attempt: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForwardReport {
    pub batches_acked: u64,
    pub records_acked: u64,
    pub attempts: u64,
    pub failed_attempts: u64,
    pub peak_retained: usize,
}

/// Platform-side sender for one stream.
#[derive(Debug, Clone)]
pub struct Forwarder {
    pub stream: String,
    pub from: NodeId,
    pub to: NodeId,
    cfg: ForwardConfig,
    pending: VecDeque<TelemetryRecord>,
    in_flight: Option<InFlight>,
    next_batch: u64,
    token_base: u64,
    next_token: u64,
    timers: BTreeMap<u64, TimerPurpose>,
    flush_armed: bool,
    pub report: ForwardReport,
}

impl Forwarder {
    /// `token_base` reserves timer tokens `token_base..token_base + 2^32`.
    pub fn new(stream: &str, from: NodeId, to: NodeId, cfg: ForwardConfig, token_base: u64) -> Self {
        Self {
            stream: stream.into(),
            from,
            to,
            cfg,
            pending: VecDeque::new(),
            in_flight: None,
            next_batch: 0,
            token_base,
            next_token: 0,
            timers: BTreeMap::new(),
            flush_armed: false,
            report: ForwardReport::default(),
        }
    }

    /// Records not yet acked by the twin.
    pub fn retained(&self) -> usize {
        self.pending.len() + self.in_flight.as_ref().map_or(0, |f| f.records)
    }

    pub fn is_drained(&self) -> bool {
        self.retained() == 0
    }

    fn timer(&mut self, net: &mut Network, delay: Micros, p: TimerPurpose) {
        let token = self.token_base + self.next_token;
        self.next_token += 1;
        self.timers.insert(token, p);
        net.set_timer_in(delay, token);
    }

    pub fn push(&mut self, net: &mut Network, record: TelemetryRecord) -> Result<(), NetError> {
        self.pending.push_back(record);
        self.report.peak_retained = self.report.peak_retained.max(self.retained());
        if self.pending.len() >= self.cfg.batch_records {
            self.try_send(net)?;
        } else if !self.flush_armed {
            self.flush_armed = true;
            self.timer(net, self.cfg.batch_interval_us, TimerPurpose::Flush);
        }
        Ok(())
    }

    /// Ship whatever is pending now.
    pub fn flush(&mut self, net: &mut Network) -> Result<(), NetError> {
        self.try_send(net)
    }

    fn try_send(&mut self, net: &mut Network) -> Result<(), NetError> {
        if self.in_flight.is_some() || self.pending.is_empty() {
            return Ok(());
        }
        let mut take = 0;
        let mut bytes = 0;
        for r in self.pending.iter().take(self.cfg.batch_records) {
            let sz = r.encode().len() + 4;
            if take > 0 && bytes + sz > self.cfg.max_batch_bytes {
                break;
            }
            bytes += sz;
            take += 1;
        }
        let batch: Vec<_> = self.pending.drain(..take).collect();
        let id = self.next_batch;
        self.next_batch += 1;
        let payload = encode_batch(&self.stream, id, &batch);
        let msg = net.send(self.from, self.to, MsgType::Telemetry, &payload)?;
        self.report.attempts += 1;
        self.in_flight = Some(InFlight {
            id,
            payload,
            records: batch.len(),
            msg,
            attempt: 0,
        });
        self.timer(net, self.cfg.ack_timeout_us, TimerPurpose::Resend { batch: id, attempt: 0 });
        Ok(())
    }

    fn resend(&mut self, net: &mut Network) -> Result<(), NetError> {
        let Some(f) = &mut self.in_flight else { return Ok(()) };
        f.attempt += 1;
        f.msg = net.send(self.from, self.to, MsgType::Telemetry, &f.payload)?;
        let (id, attempt) = (f.id, f.attempt);
        self.report.attempts += 1;
        self.timer(net, self.cfg.ack_timeout_us, TimerPurpose::Resend { batch: id, attempt });
        Ok(())
    }

    /// Handle `ev` if it belongs to this forwarder.
    pub fn on_event(&mut self, net: &mut Network, ev: &AppEvent) -> Result<bool, NetError> {
        match ev {
            AppEvent::Timer { token, .. } => {
                let Some(p) = self.timers.remove(token) else { return Ok(false) };
                match p {
                    TimerPurpose::Flush => {
                        self.flush_armed = false;
                        self.try_send(net)?;
                        if !self.pending.is_empty() {
                            self.flush_armed = true;
                            self.timer(net, self.cfg.batch_interval_us, TimerPurpose::Flush);
                        }
                    }
                    TimerPurpose::Resend { batch, attempt } => {
                        if self.in_flight.as_ref().is_some_and(|f| f.id == batch && f.attempt == attempt) {
                            self.resend(net)?;
                        }
                    }
                }
                Ok(true)
            }
            AppEvent::Failed { msg, .. } => {
                let Some(f) = &self.in_flight else { return Ok(false) };
                if f.msg != *msg {
                    return Ok(false);
                }
                self.report.failed_attempts += 1;
                let (batch, attempt) = (f.id, f.attempt);
                // Earlier than the ack timeout; the timer for this attempt
                // then finds a newer attempt and does nothing.
                self.timer(net, self.cfg.retry_after_us, TimerPurpose::Resend { batch, attempt });
                Ok(true)
            }
            AppEvent::Delivered {
                dest, msg_type: MsgType::Ack, payload, ..
            } if *dest == self.from => {
                let Some((stream, id)) = decode_ack(payload) else { return Ok(false) };
                if stream != self.stream {
                    return Ok(false);
                }
                if self.in_flight.as_ref().is_some_and(|f| f.id == id) {
                    let f = self.in_flight.take().expect("checked");
                    self.report.batches_acked += 1;
                    self.report.records_acked += f.records as u64;
                    if self.pending.len() >= self.cfg.batch_records {
                        self.try_send(net)?;
                    }
                }
                Ok(true)
            }
            AppEvent::Acked { msg, .. } => Ok(self.in_flight.as_ref().is_some_and(|f| f.msg == *msg)),
            _ => Ok(false),
        }
    }
}

/// Shore-side twin endpoint: applies each stream's batches once, in order.
#[derive(Debug, Clone, Default)]
pub struct TwinStore {
    pub node: Option<NodeId>,
    streams: BTreeMap<String, Vec<TelemetryRecord>>,
    expected: BTreeMap<String, u64>,
    pub duplicates: u64,
    pub malformed: u64,
}

impl TwinStore {
    pub fn new(node: NodeId) -> Self {
        Self {
            node: Some(node),
            ..Self::default()
        }
    }

    pub fn stream(&self, name: &str) -> &[TelemetryRecord] {
        self.streams.get(name).map_or(&[], Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.streams.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All streams merged by timestamp; ties keep stream name order, then
    /// arrival order.
    pub fn merged(&self) -> Vec<TelemetryRecord> {
        let mut v: Vec<(Micros, &str, usize, &TelemetryRecord)> = self
            .streams
            .iter()
            .flat_map(|(s, rs)| rs.iter().enumerate().map(move |(i, r)| (r.timestamp_us, s.as_str(), i, r)))
            .collect();
        v.sort_by(|a, b| (a.0, a.1, a.2).cmp(&(b.0, b.1, b.2)));
        v.into_iter().map(|(.., r)| r.clone()).collect()
    }

    pub fn on_event(&mut self, net: &mut Network, ev: &AppEvent) -> Result<bool, NetError> {
        let AppEvent::Delivered {
            origin,
            dest,
            msg_type: MsgType::Telemetry,
            payload,
            ..
        } = ev
        else {
            return Ok(false);
        };
        if Some(*dest) != self.node {
            return Ok(false);
        }
        let Ok((stream, id, records)) = decode_batch(payload) else {
            self.malformed += 1;
            return Ok(true);
        };
        let next = self.expected.entry(stream.clone()).or_insert(0);
        if id > *next {
            // Cannot happen with one batch in flight; leave it unacked.
            return Ok(true);
        }
        if id == *next {
            *next += 1;
            self.streams.entry(stream.clone()).or_default().extend(records);
        } else {
            self.duplicates += 1;
        }
        net.send(*dest, *origin, MsgType::Ack, &encode_ack(&stream, id))?;
        Ok(true)
    }
}
