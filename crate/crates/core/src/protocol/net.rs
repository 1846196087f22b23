//! Simulated transport: ARQ channels between adjacent nodes running over the
//! topology's link channels on one virtual clock.
//!
//! Applications drive the engine by calling [`Network::send`] and
//! [`Network::set_timer`] and pulling [`AppEvent`]s with
//! [`Network::next_event`]. Messages to non-adjacent nodes are relayed hop by
//! hop along the lowest-latency route; intermediate hops add no processing.

use std::collections::{BTreeMap, VecDeque};

use super::arq::{
    ack_echo, AttemptStatus, ArqConfig, ArqReceiver, ArqSender, FailReason, Outgoing, RxEntry, SenderEvent,
    TimeoutAction, TxAttempt,
};
use super::frame::{decode_frame, Flags, FrameError, MsgType};
use crate::metrics::packet::PacketAccounting;
use crate::netemu::clock::{Micros, ScheduleError, Scheduler};
use crate::netemu::link::{DeliveryStatus, Fate, LinkChannel};
use crate::netemu::seed::stream;
use crate::netemu::topology::{LinkId, NodeId, Topology};
use crate::netemu::trace::TraceRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MsgId(pub u64);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AppEvent {
    /// A message reached its final destination.
    Delivered {
        msg: MsgId,
        origin: NodeId,
        dest: NodeId,
        msg_type: MsgType,
        payload: Vec<u8>,
        sent_at: Micros,
        at: Micros,
    },
    /// The first hop acknowledged every segment of the message.
    Acked { msg: MsgId, at: Micros },
    /// Some hop gave up on the message. A message reset while frames were
    /// in flight can still be delivered afterwards.
    Failed {
        msg: MsgId,
        reason: FailReason,
        attempts: u8,
        at: Micros,
    },
    Timer { token: u64, at: Micros },
}

#[derive(Debug, thiserror::Error)]
pub enum NetError {
    #[error("no route from node {0} to node {1}")]
    NoRoute(u16, u16),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("invalid ARQ config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ArqError {
    #[error("delivery failed after {attempts} attempts")]
    DeliveryFailed { attempts: u8 },
}

#[derive(Debug, Clone)]
enum Ev {
    Arrive {
        link: LinkId,
        from: NodeId,
        to: NodeId,
        bytes: Vec<u8>,
    },
    Rto {
        from: NodeId,
        to: NodeId,
        seq: u32,
        attempt: u8,
    },
    Timer(u64),
}

#[derive(Debug, Clone)]
struct MsgInfo {
    origin: NodeId,
    dest: NodeId,
    path: Vec<NodeId>,
    msg_type: MsgType,
    sent_at: Micros,
}

/// Knobs shared by every channel the engine creates.
#[derive(Debug, Clone)]
pub struct NetOptions {
    pub mtu: usize,
    pub window: u16,
    pub max_retries: u8,
    /// Fixed timeout for every channel; adaptive per link when `None`.
    pub fixed_timeout: Option<Micros>,
}

impl Default for NetOptions {
    fn default() -> Self {
        let d = ArqConfig::default();
        Self {
            mtu: d.mtu,
            window: d.window,
            max_retries: d.max_retries,
            fixed_timeout: None,
        }
    }
}

pub struct Network {
    topo: Topology,
    opts: NetOptions,
    sched: Scheduler<Ev>,
    links: BTreeMap<(LinkId, NodeId), LinkChannel>,
    pinned: BTreeMap<(NodeId, NodeId), LinkId>,
    arq_overrides: BTreeMap<(NodeId, NodeId), ArqConfig>,
    senders: BTreeMap<(NodeId, NodeId), ArqSender>,
    receivers: BTreeMap<(NodeId, NodeId), ArqReceiver>,
    seq_to_msg: BTreeMap<(NodeId, NodeId, u32), MsgId>,
    msgs: BTreeMap<MsgId, MsgInfo>,
    first_hop: BTreeMap<MsgId, (NodeId, NodeId)>,
    next_msg: u64,
    app: VecDeque<AppEvent>,
    trace: Vec<TraceRecord>,
    acct: PacketAccounting,
}

impl Network {
    pub fn new(topo: Topology, seed: u64) -> Self {
        Self::with_options(topo, seed, NetOptions::default())
    }

    pub fn with_options(topo: Topology, seed: u64, opts: NetOptions) -> Self {
        let mut links = BTreeMap::new();
        for l in &topo.links {
            for (from, to) in [(l.a, l.b), (l.b, l.a)] {
                let domain = format!("link/{}/{}>{}/{}", l.id.0, from.0, to.0, l.profile.jitter_seed_domain);
                links.insert((l.id, from), LinkChannel::new(l.profile.clone(), stream(seed, &domain)));
            }
        }
        Self {
            topo,
            opts,
            sched: Scheduler::new(),
            links,
            pinned: BTreeMap::new(),
            arq_overrides: BTreeMap::new(),
            senders: BTreeMap::new(),
            receivers: BTreeMap::new(),
            seq_to_msg: BTreeMap::new(),
            msgs: BTreeMap::new(),
            first_hop: BTreeMap::new(),
            next_msg: 0,
            app: VecDeque::new(),
            trace: Vec::new(),
            acct: PacketAccounting::default(),
        }
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn now(&self) -> Micros {
        self.sched.now()
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    /// Running counts; `missing` is only filled in by [`Network::close`].
    pub fn accounting(&self) -> PacketAccounting {
        self.acct
    }

    /// Close the run: frames still travelling count as missing.
    pub fn close(&mut self) -> PacketAccounting {
        let mut a = self.acct;
        a.close();
        a
    }

    /// Route traffic between two adjacent nodes over a specific link.
    pub fn pin_link(&mut self, x: NodeId, y: NodeId, link: LinkId) {
        self.pinned.insert((x, y), link);
        self.pinned.insert((y, x), link);
    }

    /// ARQ settings for the `from → to` channel; must precede its first use.
    pub fn set_arq(&mut self, from: NodeId, to: NodeId, cfg: ArqConfig) -> Result<(), NetError> {
        cfg.validate().map_err(NetError::Config)?;
        self.arq_overrides.insert((from, to), cfg);
        Ok(())
    }

    pub fn script(&mut self, link: LinkId, from: NodeId, fates: impl IntoIterator<Item = Fate>) {
        if let Some(ch) = self.links.get_mut(&(link, from)) {
            ch.script(fates);
        }
    }

    /// Both directions of `link` drop everything handed over in `[from, to)`.
    pub fn add_outage(&mut self, link: LinkId, from: Micros, to: Micros) {
        for ((l, _), ch) in self.links.iter_mut() {
            if *l == link {
                ch.add_outage(from, to);
            }
        }
    }

    pub fn tx_log(&self, from: NodeId, to: NodeId) -> &[TxAttempt] {
        self.senders.get(&(from, to)).map(|s| s.tx_log()).unwrap_or(&[])
    }

    pub fn rx_log(&self, at: NodeId, peer: NodeId) -> &[RxEntry] {
        self.receivers.get(&(at, peer)).map(|r| r.rx_log()).unwrap_or(&[])
    }

    pub fn set_timer(&mut self, at: Micros, token: u64) -> Result<(), NetError> {
        self.sched.schedule(Ev::Timer(token), at)?;
        Ok(())
    }

    pub fn set_timer_in(&mut self, delay: Micros, token: u64) {
        self.sched.schedule_in(Ev::Timer(token), delay);
    }

    fn link_for(&self, x: NodeId, y: NodeId) -> Option<LinkId> {
        self.pinned.get(&(x, y)).copied().or_else(|| self.topo.best_link(x, y))
    }

    fn sender(&mut self, from: NodeId, to: NodeId) -> &mut ArqSender {
        if !self.senders.contains_key(&(from, to)) {
            let cfg = match self.arq_overrides.get(&(from, to)) {
                Some(c) => c.clone(),
                None => {
                    let link = self.link_for(from, to).expect("adjacent nodes");
                    let mut c = ArqConfig::for_link(&self.topo.link(link).profile, self.opts.mtu);
                    c.window = self.opts.window;
                    c.max_retries = self.opts.max_retries;
                    if let Some(t) = self.opts.fixed_timeout {
                        c.rto = super::arq::RtoPolicy::Fixed(t);
                    }
                    c
                }
            };
            self.senders.insert((from, to), ArqSender::new(cfg));
        }
        self.senders.get_mut(&(from, to)).expect("inserted")
    }

    /// Reliable message from `from` to `to`, relayed if not adjacent.
    pub fn send(&mut self, from: NodeId, to: NodeId, msg_type: MsgType, payload: &[u8]) -> Result<MsgId, NetError> {
        let path = if from == to {
            return Err(NetError::NoRoute(from.0, to.0));
        } else if self.link_for(from, to).is_some() {
            vec![from, to]
        } else {
            self.topo.route(from, to).ok_or(NetError::NoRoute(from.0, to.0))?
        };
        let id = MsgId(self.next_msg);
        self.next_msg += 1;
        self.msgs.insert(
            id,
            MsgInfo {
                origin: from,
                dest: to,
                path: path.clone(),
                msg_type,
                sent_at: self.now(),
            },
        );
        self.first_hop.insert(id, (path[0], path[1]));
        self.hop(id, path[0], path[1], msg_type, payload)?;
        Ok(id)
    }

    fn hop(&mut self, id: MsgId, from: NodeId, to: NodeId, msg_type: MsgType, payload: &[u8]) -> Result<(), NetError> {
        let now = self.now();
        let (first, _) = self.sender(from, to).enqueue(id.0, msg_type, payload)?;
        self.seq_to_msg.insert((from, to, first), id);
        let out = self.sender(from, to).poll_transmit(now);
        for o in out {
            self.put_on_link(from, to, o);
        }
        Ok(())
    }

    fn put_on_link(&mut self, from: NodeId, to: NodeId, o: Outgoing) {
        let link = self.link_for(from, to).expect("adjacent");
        let tx = self.raw_send(link, from, to, o.msg_type, o.seq, o.retransmission, &o.bytes);
        match tx.0 {
            DeliveryStatus::Lost => self.sender(from, to).record_fate(o.log_index, AttemptStatus::Lost),
            DeliveryStatus::Corrupted => self.sender(from, to).record_fate(o.log_index, AttemptStatus::Corrupted),
            DeliveryStatus::Delivered => {}
        }
        let deadline = tx.1 + o.rto;
        self.sched
            .schedule(
                Ev::Rto {
                    from,
                    to,
                    seq: o.seq,
                    attempt: o.attempt,
                },
                deadline,
            )
            .expect("deadline after now");
    }

    /// Hand bytes to one link direction; returns the fate and departure time.
    fn raw_send(
        &mut self,
        link: LinkId,
        from: NodeId,
        to: NodeId,
        msg_type: MsgType,
        seq: u32,
        retransmission: bool,
        bytes: &[u8],
    ) -> (DeliveryStatus, Micros) {
        let now = self.now();
        let ch = self.links.get_mut(&(link, from)).expect("link channel");
        let t = ch.send(bytes, now);
        self.acct.on_sent();
        self.trace.push(TraceRecord {
            link: link.0,
            from: from.0,
            to: to.0,
            msg_type,
            seq,
            retransmission,
            bytes: bytes.len() as u32,
            outcome: t.outcome,
        });
        if let (Some(at), Some(b)) = (t.outcome.deliver_time, t.bytes) {
            self.sched
                .schedule(Ev::Arrive { link, from, to, bytes: b }, at)
                .expect("arrival after now");
        }
        (t.outcome.status, t.departure)
    }

    /// Next application-visible event, advancing the clock as needed.
    pub fn next_event(&mut self) -> Option<AppEvent> {
        self.next_event_until(Micros::MAX)
    }

    /// Like [`Network::next_event`] but never runs past `limit`.
    pub fn next_event_until(&mut self, limit: Micros) -> Option<AppEvent> {
        loop {
            if let Some(e) = self.app.pop_front() {
                return Some(e);
            }
            match self.sched.peek_time() {
                Some(t) if t <= limit => {}
                _ => return None,
            }
            let fired = self.sched.pop().expect("peeked");
            self.handle(fired.event);
        }
    }

    /// Push an event back so the next call returns it first.
    pub fn requeue(&mut self, events: impl IntoIterator<Item = AppEvent>) {
        let mut v: Vec<_> = events.into_iter().collect();
        while let Some(e) = v.pop() {
            self.app.push_front(e);
        }
    }

    fn handle(&mut self, ev: Ev) {
        let now = self.now();
        match ev {
            Ev::Timer(token) => self.app.push_back(AppEvent::Timer { token, at: now }),
            Ev::Rto { from, to, seq, attempt } => {
                let action = self.sender(from, to).on_timeout(seq, attempt, now);
                match action {
                    TimeoutAction::Stale => {}
                    TimeoutAction::Retransmit(o) => self.put_on_link(from, to, o),
                    TimeoutAction::Failed(events) => {
                        for e in events {
                            self.sender_event(from, to, e);
                        }
                        let out = self.sender(from, to).poll_transmit(now);
                        for o in out {
                            self.put_on_link(from, to, o);
                        }
                    }
                }
            }
            Ev::Arrive { link, from, to, bytes } => {
                let Ok(d) = decode_frame(&bytes) else {
                    self.acct.on_received(false);
                    return;
                };
                self.acct.on_received(!d.crc_failed);
                if d.frame.msg_type == MsgType::Ack && d.frame.flags.has(Flags::REPLY) {
                    if d.crc_failed {
                        return;
                    }
                    // ACK travelling to → from acknowledges data sent `to → from`.
                    let echo = ack_echo(&d.frame).unwrap_or(0);
                    let ev = self.sender(to, from).on_ack(d.frame.seq, echo, now);
                    if let Some(e) = ev {
                        self.sender_event(to, from, e);
                    }
                    let out = self.sender(to, from).poll_transmit(now);
                    for o in out {
                        self.put_on_link(to, from, o);
                    }
                    return;
                }
                let rx = self.receivers.entry((to, from)).or_default().on_frame(&d, now);
                if let Some(ack) = rx.ack {
                    let bytes = ack.encode().expect("small ack");
                    self.raw_send(link, to, from, MsgType::Ack, ack.seq, false, &bytes);
                }
                for m in rx.delivered {
                    let Some(id) = self.seq_to_msg.remove(&(from, to, m.first_seq)) else {
                        continue;
                    };
                    self.on_hop_delivered(id, to, m.payload, now);
                }
            }
        }
    }

    fn on_hop_delivered(&mut self, id: MsgId, at_node: NodeId, payload: Vec<u8>, now: Micros) {
        let Some(info) = self.msgs.get(&id).cloned() else {
            return;
        };
        if at_node == info.dest {
            self.msgs.remove(&id);
            self.app.push_back(AppEvent::Delivered {
                msg: id,
                origin: info.origin,
                dest: info.dest,
                msg_type: info.msg_type,
                payload,
                sent_at: info.sent_at,
                at: now,
            });
            return;
        }
        let i = info.path.iter().position(|n| *n == at_node).expect("on path");
        let next = info.path[i + 1];
        self.hop(id, at_node, next, info.msg_type, &payload)
            .expect("payload already framed once");
    }

    fn sender_event(&mut self, from: NodeId, to: NodeId, e: SenderEvent) {
        match e {
            SenderEvent::Acked { tag, at } => {
                let id = MsgId(tag);
                if self.first_hop.get(&id) == Some(&(from, to)) {
                    self.first_hop.remove(&id);
                    self.app.push_back(AppEvent::Acked { msg: id, at });
                }
            }
            SenderEvent::Failed {
                tag,
                reason,
                attempts,
                at,
            } => {
                let id = MsgId(tag);
                // Info stays: frames of a reset message may still arrive.
                self.first_hop.remove(&id);
                self.app.push_back(AppEvent::Failed {
                    msg: id,
                    reason,
                    attempts,
                    at,
                });
            }
        }
    }

    /// Send one message and run the engine until it is acked or fails.
    /// Unrelated events seen meanwhile are kept for later `next_event` calls.
    pub fn send_reliable(
        &mut self,
        from: NodeId,
        to: NodeId,
        msg_type: MsgType,
        payload: &[u8],
    ) -> Result<Result<Micros, ArqError>, NetError> {
        let id = self.send(from, to, msg_type, payload)?;
        let mut other = Vec::new();
        let res = loop {
            match self.next_event() {
                Some(AppEvent::Acked { msg, at }) if msg == id => break Ok(at),
                Some(AppEvent::Failed { msg, attempts, .. }) if msg == id => {
                    break Err(ArqError::DeliveryFailed { attempts })
                }
                Some(e) => other.push(e),
                None => unreachable!("an unacked message always has a pending timer"),
            }
        };
        self.requeue(other);
        Ok(res)
    }
}
