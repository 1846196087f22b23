//! Sans-IO ARQ endpoints: a sender with a sliding window (stop-and-wait at
//! window 1) and a selective-repeat receiver that hands complete messages to
//! the application exactly once and in sequence order.
//!
//! Messages longer than one MTU are split into segments; the last carries
//! `END_OF_MESSAGE`. When a segment exhausts its retries the sender fails
//! that message (and anything else in flight, whose fate is now unknown),
//! abandons those sequence numbers and marks the next frame with `SYNC` so
//! the receiver skips the gap instead of waiting for it forever.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::frame::{encode_frame, Decoded, Flags, Frame, FrameError, MsgType, FRAME_OVERHEAD};
use crate::netemu::clock::Micros;
use crate::netemu::link::LinkProfile;

/// Set on the first frame after the sender abandoned earlier sequence numbers.
pub const SYNC: u16 = 1 << 3;

pub const EWMA_ALPHA: f64 = 0.125;
pub const RTO_MULTIPLIER: f64 = 3.0;
pub const MIN_RTO_US: Micros = 1_000;
pub const MAX_RTO_US: Micros = 60_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RtoPolicy {
    /// Constant timeout, no backoff.
    Fixed(Micros),
    /// 3 × smoothed RTT, doubled on every retransmission of a segment.
    Adaptive { initial_srtt_us: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArqConfig {
    pub window: u16,
    pub rto: RtoPolicy,
    pub max_retries: u8,
    pub mtu: usize,
}

impl Default for ArqConfig {
    fn default() -> Self {
        Self {
            window: 1,
            rto: RtoPolicy::Adaptive {
                initial_srtt_us: 100_000.0,
            },
            max_retries: 5,
            mtu: crate::netemu::profiles::DEFAULT_MTU,
        }
    }
}

impl ArqConfig {
    pub fn fixed(timeout: Micros, max_retries: u8) -> Self {
        Self {
            rto: RtoPolicy::Fixed(timeout),
            max_retries,
            ..Self::default()
        }
    }

    /// Defaults for a channel over `link`: the initial RTT estimate is two
    /// median one-way delays of a full frame.
    pub fn for_link(link: &LinkProfile, mtu: usize) -> Self {
        Self {
            rto: RtoPolicy::Adaptive {
                initial_srtt_us: 2.0 * link.median_delay_us(mtu),
            },
            mtu,
            ..Self::default()
        }
    }

    pub fn with_window(mut self, window: u16) -> Self {
        self.window = window;
        self
    }

    pub fn segment_payload(&self) -> usize {
        self.mtu.saturating_sub(FRAME_OVERHEAD).max(1)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.window == 0 {
            return Err("window must be at least 1".into());
        }
        if self.mtu <= FRAME_OVERHEAD {
            return Err(format!("mtu {} leaves no room for payload", self.mtu));
        }
        match self.rto {
            RtoPolicy::Fixed(0) => Err("timeout must be positive".into()),
            RtoPolicy::Adaptive { initial_srtt_us } if !(initial_srtt_us > 0.0) => {
                Err("initial RTT estimate must be positive".into())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttemptStatus {
    InFlight,
    Acked,
    Lost,
    Corrupted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxAttempt {
    pub seq: u32,
    pub attempt: u8,
    pub sent_at: Micros,
    pub status: AttemptStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailReason {
    RetriesExhausted,
    /// In flight when another message exhausted its retries.
    Reset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SenderEvent {
    Acked { tag: u64, at: Micros },
    Failed { tag: u64, reason: FailReason, attempts: u8, at: Micros },
}

/// A frame the sender wants on the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outgoing {
    pub seq: u32,
    pub attempt: u8,
    pub msg_type: MsgType,
    pub retransmission: bool,
    pub bytes: Vec<u8>,
    /// Index into the sender's tx log, for recording the link's verdict.
    pub log_index: usize,
    /// Retransmission timeout measured from when the frame leaves.
    pub rto: Micros,
}

#[derive(Debug, Clone)]
struct Segment {
    tag: u64,
    seq: u32,
    msg_type: MsgType,
    flags: Flags,
    payload: Vec<u8>,
}

#[derive(Debug, Clone)]
struct Pending {
    seg: Segment,
    attempts: u8,
    log: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct ArqSender {
    cfg: ArqConfig,
    next_seq: u32,
    queue: VecDeque<Segment>,
    inflight: BTreeMap<u32, Pending>,
    remaining: BTreeMap<u64, usize>,
    srtt_us: f64,
    sync_next: bool,
    tx_log: Vec<TxAttempt>,
}

impl ArqSender {
    pub fn new(cfg: ArqConfig) -> Self {
        let srtt_us = match cfg.rto {
            RtoPolicy::Adaptive { initial_srtt_us } => initial_srtt_us,
            RtoPolicy::Fixed(t) => t as f64 / RTO_MULTIPLIER,
        };
        Self {
            cfg,
            next_seq: 0,
            queue: VecDeque::new(),
            inflight: BTreeMap::new(),
            remaining: BTreeMap::new(),
            srtt_us,
            sync_next: false,
            tx_log: Vec::new(),
        }
    }

    pub fn config(&self) -> &ArqConfig {
        &self.cfg
    }

    pub fn tx_log(&self) -> &[TxAttempt] {
        &self.tx_log
    }

    pub fn srtt_us(&self) -> f64 {
        self.srtt_us
    }

    pub fn is_idle(&self) -> bool {
        self.queue.is_empty() && self.inflight.is_empty()
    }

    /// Queue a message under caller-chosen `tag`. Returns the first and last
    /// sequence numbers assigned to its segments.
    pub fn enqueue(&mut self, tag: u64, msg_type: MsgType, payload: &[u8]) -> Result<(u32, u32), FrameError> {
        if payload.len() > super::frame::MAX_PAYLOAD {
            return Err(FrameError::PayloadTooLarge(payload.len()));
        }
        let chunk = self.cfg.segment_payload();
        let pieces: Vec<&[u8]> = if payload.is_empty() {
            vec![&[][..]]
        } else {
            payload.chunks(chunk).collect()
        };
        let first = self.next_seq;
        let n = pieces.len();
        for (i, piece) in pieces.into_iter().enumerate() {
            let mut flags = Flags::default();
            if i + 1 == n {
                flags = flags.with(Flags::END_OF_MESSAGE);
            }
            if i == 0 && self.sync_next {
                flags = flags.with(SYNC);
                self.sync_next = false;
            }
            self.queue.push_back(Segment {
                tag,
                seq: self.next_seq,
                msg_type,
                flags,
                payload: piece.to_vec(),
            });
            self.next_seq = self.next_seq.wrapping_add(1);
        }
        *self.remaining.entry(tag).or_default() += n;
        Ok((first, self.next_seq.wrapping_sub(1)))
    }

    fn rto(&self, attempt: u8) -> Micros {
        match self.cfg.rto {
            RtoPolicy::Fixed(t) => t,
            RtoPolicy::Adaptive { .. } => {
                let base = (RTO_MULTIPLIER * self.srtt_us).round() as Micros;
                let backoff = 1u64 << (attempt.saturating_sub(1)).min(16);
                base.max(MIN_RTO_US).saturating_mul(backoff).min(MAX_RTO_US)
            }
        }
    }

    fn emit(&mut self, seq: u32, now: Micros) -> Outgoing {
        let p = self.inflight.get_mut(&seq).expect("segment in flight");
        p.attempts += 1;
        let retransmission = p.attempts > 1;
        let mut flags = p.seg.flags;
        if retransmission {
            flags = flags.with(Flags::RETRANSMISSION);
        }
        let bytes = encode_frame(p.seg.msg_type, flags, seq, now, &p.seg.payload)
            .expect("payload size checked at enqueue");
        let log_index = self.tx_log.len();
        p.log.push(log_index);
        let (attempt, msg_type) = (p.attempts, p.seg.msg_type);
        self.tx_log.push(TxAttempt {
            seq,
            attempt,
            sent_at: now,
            status: AttemptStatus::InFlight,
        });
        Outgoing {
            seq,
            attempt,
            msg_type,
            retransmission,
            bytes,
            log_index,
            rto: self.rto(attempt),
        }
    }

    /// New frames allowed by the window.
    pub fn poll_transmit(&mut self, now: Micros) -> Vec<Outgoing> {
        let mut out = Vec::new();
        while self.inflight.len() < self.cfg.window as usize {
            let Some(seg) = self.queue.pop_front() else { break };
            let seq = seg.seq;
            self.inflight.insert(
                seq,
                Pending {
                    seg,
                    attempts: 0,
                    log: Vec::new(),
                },
            );
            out.push(self.emit(seq, now));
        }
        out
    }

    /// Record what the link did to an attempt (lost or corrupted).
    pub fn record_fate(&mut self, log_index: usize, status: AttemptStatus) {
        if let Some(a) = self.tx_log.get_mut(log_index) {
            if a.status == AttemptStatus::InFlight {
                a.status = status;
            }
        }
    }

    /// An intact ACK for `seq` echoing the acked frame's timestamp.
    pub fn on_ack(&mut self, seq: u32, echo_ts: Micros, now: Micros) -> Option<SenderEvent> {
        let p = self.inflight.remove(&seq)?;
        let idx = p
            .log
            .iter()
            .copied()
            .find(|&i| self.tx_log[i].sent_at == echo_ts)
            .unwrap_or(*p.log.last().expect("emitted at least once"));
        self.tx_log[idx].status = AttemptStatus::Acked;
        if echo_ts <= now {
            let sample = (now - echo_ts) as f64;
            self.srtt_us = (1.0 - EWMA_ALPHA) * self.srtt_us + EWMA_ALPHA * sample;
        }
        let left = self.remaining.get_mut(&p.seg.tag).expect("tag tracked");
        *left -= 1;
        if *left == 0 {
            self.remaining.remove(&p.seg.tag);
            Some(SenderEvent::Acked { tag: p.seg.tag, at: now })
        } else {
            None
        }
    }

    /// Timer for attempt `attempt` of `seq` fired.
    pub fn on_timeout(&mut self, seq: u32, attempt: u8, now: Micros) -> TimeoutAction {
        let Some(p) = self.inflight.get(&seq) else {
            return TimeoutAction::Stale;
        };
        if p.attempts != attempt {
            return TimeoutAction::Stale;
        }
        if p.attempts <= self.cfg.max_retries {
            return TimeoutAction::Retransmit(self.emit(seq, now));
        }
        let failed_tag = p.seg.tag;
        let mut events = vec![SenderEvent::Failed {
            tag: failed_tag,
            reason: FailReason::RetriesExhausted,
            attempts: p.attempts,
            at: now,
        }];
        let mut dead = vec![failed_tag];
        for q in self.inflight.values() {
            if !dead.contains(&q.seg.tag) {
                dead.push(q.seg.tag);
                events.push(SenderEvent::Failed {
                    tag: q.seg.tag,
                    reason: FailReason::Reset,
                    attempts: q.attempts,
                    at: now,
                });
            }
        }
        self.inflight.clear();
        self.queue.retain(|s| !dead.contains(&s.tag));
        for t in &dead {
            self.remaining.remove(t);
        }
        match self.queue.front_mut() {
            Some(s) => s.flags = s.flags.with(SYNC),
            None => self.sync_next = true,
        }
        TimeoutAction::Failed(events)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TimeoutAction {
    Stale,
    Retransmit(Outgoing),
    Failed(Vec<SenderEvent>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RxStatus {
    Corrupted,
    Accepted,
    Buffered,
    Duplicate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RxEntry {
    pub seq: u32,
    pub at: Micros,
    pub status: RxStatus,
}

/// A reassembled application message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub msg_type: MsgType,
    pub first_seq: u32,
    pub last_seq: u32,
    pub payload: Vec<u8>,
    pub at: Micros,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RxOutcome {
    pub ack: Option<Frame>,
    pub delivered: Vec<Message>,
}

#[derive(Debug, Clone)]
struct Partial {
    msg_type: MsgType,
    first_seq: u32,
    data: Vec<u8>,
}

#[derive(Debug, Clone, Default)]
pub struct ArqReceiver {
    expected: u32,
    buffer: BTreeMap<u32, Frame>,
    partial: Option<Partial>,
    rx_log: Vec<RxEntry>,
}

/// The ACK for `frame`: same seq, payload echoes the frame's timestamp.
pub fn ack_for(frame: &Frame, now: Micros) -> Frame {
    Frame {
        msg_type: MsgType::Ack,
        flags: Flags(Flags::REPLY),
        seq: frame.seq,
        timestamp_us: now,
        payload: frame.timestamp_us.to_be_bytes().to_vec(),
    }
}

/// Timestamp echoed by an ACK, if it carries one.
pub fn ack_echo(ack: &Frame) -> Option<Micros> {
    Some(u64::from_be_bytes(ack.payload.as_slice().try_into().ok()?))
}

impl ArqReceiver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rx_log(&self) -> &[RxEntry] {
        &self.rx_log
    }

    pub fn expected(&self) -> u32 {
        self.expected
    }

    fn log(&mut self, seq: u32, at: Micros, status: RxStatus) {
        self.rx_log.push(RxEntry { seq, at, status });
    }

    pub fn on_frame(&mut self, d: &Decoded, now: Micros) -> RxOutcome {
        let f = &d.frame;
        if d.crc_failed {
            self.log(f.seq, now, RxStatus::Corrupted);
            return RxOutcome::default();
        }
        let ack = Some(ack_for(f, now));
        // Sequence numbers never wrap within a run (2^32 segments).
        if f.flags.has(SYNC) && f.seq >= self.expected {
            self.buffer = self.buffer.split_off(&f.seq);
            self.partial = None;
            self.expected = f.seq;
        }
        if f.seq < self.expected || self.buffer.contains_key(&f.seq) {
            self.log(f.seq, now, RxStatus::Duplicate);
            return RxOutcome {
                ack,
                delivered: Vec::new(),
            };
        }
        if f.seq > self.expected {
            self.log(f.seq, now, RxStatus::Buffered);
            self.buffer.insert(f.seq, f.clone());
            return RxOutcome {
                ack,
                delivered: Vec::new(),
            };
        }
        self.log(f.seq, now, RxStatus::Accepted);
        let mut delivered = Vec::new();
        let mut next = Some(f.clone());
        while let Some(frame) = next {
            self.expected = frame.seq + 1;
            let p = self.partial.get_or_insert_with(|| Partial {
                msg_type: frame.msg_type,
                first_seq: frame.seq,
                data: Vec::new(),
            });
            p.data.extend_from_slice(&frame.payload);
            if frame.flags.has(Flags::END_OF_MESSAGE) {
                let p = self.partial.take().expect("just inserted");
                delivered.push(Message {
                    msg_type: p.msg_type,
                    first_seq: p.first_seq,
                    last_seq: frame.seq,
                    payload: p.data,
                    at: now,
                });
            }
            next = self.buffer.remove(&self.expected);
        }
        RxOutcome { ack, delivered }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::frame::decode_frame;

    fn dec(b: &[u8]) -> Decoded {
        decode_frame(b).unwrap()
    }

    #[test]
    fn segmentation_and_flags() {
        let mut s = ArqSender::new(ArqConfig {
            mtu: 28 + 10,
            window: 8,
            ..ArqConfig::default()
        });
        assert_eq!(s.enqueue(1, MsgType::Telemetry, &[0u8; 25]).unwrap(), (0, 2));
        let out = s.poll_transmit(0);
        assert_eq!(out.len(), 3);
        let flags: Vec<bool> = out
            .iter()
            .map(|o| dec(&o.bytes).frame.flags.has(Flags::END_OF_MESSAGE))
            .collect();
        assert_eq!(flags, vec![false, false, true]);
        assert_eq!(s.enqueue(2, MsgType::Ack, &[]).unwrap(), (3, 3));
    }

    #[test]
    fn window_one_waits_for_ack() {
        let mut s = ArqSender::new(ArqConfig::fixed(1_000, 2));
        s.enqueue(7, MsgType::Command, b"a").unwrap();
        s.enqueue(8, MsgType::Command, b"b").unwrap();
        let first = s.poll_transmit(0);
        assert_eq!(first.len(), 1);
        assert!(s.poll_transmit(0).is_empty());
        assert_eq!(s.on_ack(0, 0, 50), Some(SenderEvent::Acked { tag: 7, at: 50 }));
        assert_eq!(s.poll_transmit(50)[0].seq, 1);
    }

    #[test]
    fn timeout_retransmits_then_fails() {
        let mut s = ArqSender::new(ArqConfig::fixed(1_000, 3));
        s.enqueue(1, MsgType::Command, b"x").unwrap();
        let o = s.poll_transmit(0).remove(0);
        assert_eq!(o.rto, 1_000);
        let mut attempt = o.attempt;
        for k in 1..=3 {
            match s.on_timeout(0, attempt, k * 1_000) {
                TimeoutAction::Retransmit(o) => {
                    assert!(o.retransmission);
                    assert!(dec(&o.bytes).frame.flags.has(Flags::RETRANSMISSION));
                    attempt = o.attempt;
                }
                other => panic!("unexpected {other:?}"),
            }
        }
        assert_eq!(s.on_timeout(0, attempt - 1, 4_000), TimeoutAction::Stale);
        match s.on_timeout(0, attempt, 4_000) {
            TimeoutAction::Failed(ev) => assert_eq!(
                ev,
                vec![SenderEvent::Failed {
                    tag: 1,
                    reason: FailReason::RetriesExhausted,
                    attempts: 4,
                    at: 4_000
                }]
            ),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(s.tx_log().len(), 4);
        // Next message is flagged so the receiver skips the abandoned seq.
        s.enqueue(2, MsgType::Command, b"y").unwrap();
        let o = s.poll_transmit(5_000).remove(0);
        assert!(dec(&o.bytes).frame.flags.has(SYNC));
    }

    #[test]
    fn adaptive_rto_tracks_rtt_and_backs_off() {
        let mut s = ArqSender::new(ArqConfig {
            rto: RtoPolicy::Adaptive {
                initial_srtt_us: 10_000.0,
            },
            ..ArqConfig::default()
        });
        s.enqueue(1, MsgType::Metric, b"m").unwrap();
        let o = s.poll_transmit(0).remove(0);
        assert_eq!(o.rto, 30_000);
        let TimeoutAction::Retransmit(r) = s.on_timeout(0, 1, 30_000) else { panic!() };
        assert_eq!(r.rto, 60_000);
        // Echo identifies the second attempt: sample 2 ms.
        s.on_ack(0, 30_000, 32_000).unwrap();
        assert_eq!(s.srtt_us(), 0.875 * 10_000.0 + 0.125 * 2_000.0);
        assert_eq!(s.tx_log()[0].status, AttemptStatus::InFlight);
        assert_eq!(s.tx_log()[1].status, AttemptStatus::Acked);
    }

    #[test]
    fn receiver_reorders_and_dedups() {
        let mut tx = ArqSender::new(ArqConfig {
            mtu: 30,
            window: 16,
            ..ArqConfig::default()
        });
        tx.enqueue(1, MsgType::Telemetry, b"abcd").unwrap();
        tx.enqueue(2, MsgType::Telemetry, b"ef").unwrap();
        let frames = tx.poll_transmit(0);
        assert_eq!(frames.len(), 3);
        let mut rx = ArqReceiver::new();
        let r = rx.on_frame(&dec(&frames[1].bytes), 1);
        assert!(r.delivered.is_empty() && r.ack.is_some());
        let r = rx.on_frame(&dec(&frames[2].bytes), 2);
        assert!(r.delivered.is_empty());
        let r = rx.on_frame(&dec(&frames[0].bytes), 3);
        let got: Vec<_> = r.delivered.iter().map(|m| m.payload.clone()).collect();
        assert_eq!(got, vec![b"abcd".to_vec(), b"ef".to_vec()]);
        let r = rx.on_frame(&dec(&frames[0].bytes), 4);
        assert!(r.delivered.is_empty());
        assert_eq!(r.ack.unwrap().seq, 0);
        assert_eq!(rx.rx_log().last().unwrap().status, RxStatus::Duplicate);
    }

    #[test]
    fn corrupted_frame_not_acked() {
        let mut b = encode_frame(MsgType::Telemetry, Flags(Flags::END_OF_MESSAGE), 0, 0, b"zz").unwrap();
        b[24] ^= 4;
        let mut rx = ArqReceiver::new();
        assert_eq!(rx.on_frame(&dec(&b), 1), RxOutcome::default());
    }

    #[test]
    fn sync_skips_abandoned_gap() {
        let mut rx = ArqReceiver::new();
        let f = |seq, flags| encode_frame(MsgType::Command, Flags(flags), seq, 0, b"q").unwrap();
        // seq 0 was abandoned after a partial delivery of nothing; seq 1 syncs.
        let r = rx.on_frame(&dec(&f(1, Flags::END_OF_MESSAGE | SYNC)), 5);
        assert_eq!(r.delivered.len(), 1);
        assert_eq!(rx.expected(), 2);
        // A late copy of the abandoned frame is only acked.
        let r = rx.on_frame(&dec(&f(0, Flags::END_OF_MESSAGE)), 6);
        assert!(r.delivered.is_empty() && r.ack.is_some());
    }

    #[test]
    fn ack_echo_round_trip() {
        let f = Frame::new(MsgType::Command, 3, 12_345, vec![]);
        let a = ack_for(&f, 20_000);
        assert_eq!(ack_echo(&a), Some(12_345));
        assert_eq!(a.wire_len(), 36);
    }
}
