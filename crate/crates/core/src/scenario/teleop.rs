//! Live teleoperation on a platform preset: the control room authenticates
//! at the jump host, commands are tunnelled to the robot, the robot streams
//! telemetry to the aggregation server, which forwards it to the shore twin.
//!
//! Everything runs on one virtual clock. Serve mode drives the same
//! [`TeleopSim`] from real sockets.

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::aggregation::{Alarm, AnomalyRule, AggregationServer, AppendLog, ForwardConfig, Forwarder, RuleEngine, TwinStore};
use crate::jumphost::{check_zero_bypass, verify_audit, AuditVerdict, BypassViolation, JumpHost, Registry, RobotGate};
use crate::metrics::experiment::BULK_WINDOW;
use crate::metrics::packet::{compute_pdr, compute_per, PacketAccounting};
use crate::metrics::stats::{summarize, BoxStats};
use crate::netemu::clock::{us_to_ms, Micros};
use crate::netemu::profiles;
use crate::netemu::seed::{stream, SimRng};
use crate::netemu::topology::{build_topology_with, NodeId, NodeRole, PresetOptions, SetupId};
use crate::netemu::trace::TraceRecord;
use crate::protocol::arq::ArqConfig;
use crate::protocol::command::{CommandMessage, CommandReply, Gait};
use crate::protocol::frame::MsgType;
use crate::protocol::net::{AppEvent, MsgId, NetError, Network};
use crate::protocol::session::{AuthMessage, ClientSession, SessionId};
use crate::robot::{
    generate_telemetry, Capture, InspectionRoute, Robot, RobotConfig, RobotEvent, RobotState, RouteEvent, TelemetryConfig,
    TelemetryKind, TelemetryRecord, World, DT_US,
};

const TIMER_NS: u64 = 1 << 56;
const T_TICK: u64 = TIMER_NS | 1;
const T_SCRIPT: u64 = TIMER_NS | 2;
const T_WAKE: u64 = TIMER_NS | 3;
const FORWARD_TOKENS: u64 = 2 << 56;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TeleopConfig {
    pub preset: SetupId,
    /// Profile of the robot to platform radio link.
    pub local_link: String,
    pub seed: u64,
    pub token: String,
    pub robot_secret: String,
    /// Defaults to one operator holding `token`.
    pub registry: Option<Registry>,
    pub command_hz: f64,
    pub command_duration_ms: u32,
    /// Each command leaves up to this much after its 10 Hz slot; the
    /// operator's clock is not synchronised with the robot's control loop.
    pub command_jitter_ms: f64,
    pub duration_s: f64,
    pub pose_hz: f64,
    pub thermal_every_s: f64,
    pub session_ttl_s: f64,
    pub auth_timeout_s: f64,
    pub robot: RobotConfig,
    pub telemetry: TelemetryConfig,
    pub forward: ForwardConfig,
    pub world: World,
    pub route: Option<InspectionRoute>,
    pub rules: Vec<AnomalyRule>,
}

impl Default for TeleopConfig {
    fn default() -> Self {
        Self {
            preset: SetupId::Setup3,
            local_link: profiles::NR_SA.into(),
            seed: 42,
            token: "operator-token".into(),
            robot_secret: "platform-robot-secret".into(),
            registry: None,
            command_hz: 10.0,
            command_duration_ms: 150,
            command_jitter_ms: 50.0,
            duration_s: 60.0,
            pose_hz: 10.0,
            thermal_every_s: 1.0,
            session_ttl_s: 900.0,
            auth_timeout_s: 5.0,
            robot: RobotConfig::default(),
            telemetry: TelemetryConfig::default(),
            forward: ForwardConfig::default(),
            world: World::default(),
            route: None,
            rules: Vec::new(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("authentication rejected: {0}")]
    AuthRejected(String),
    #[error("no AUTH answer within {0} ms")]
    Timeout(f64),
}

impl From<crate::netemu::NetemuError> for ScenarioError {
    fn from(e: crate::netemu::NetemuError) -> Self {
        ScenarioError::Config(e.to_string())
    }
}

/// Messages for the control-room gateway, one per frame type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OpsEvent {
    Auth {
        ok: bool,
        #[serde(skip_serializing_if = "Option::is_none")]
        session: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        issued_at_us: Option<Micros>,
        #[serde(skip_serializing_if = "Option::is_none")]
        expires_at_us: Option<Micros>,
        #[serde(skip_serializing_if = "Option::is_none")]
        reason: Option<String>,
    },
    Cmd {
        command_id: u64,
        accepted: bool,
        #[serde(default, skip_serializing_if = "String::is_empty")]
        reason: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        client_ts: Option<f64>,
    },
    Telemetry {
        source: String,
        kind: TelemetryKind,
        timestamp_us: Micros,
        payload_bytes: usize,
        #[serde(skip_serializing_if = "Option::is_none")]
        data: Option<serde_json::Value>,
    },
    Metric {
        name: String,
        value: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        command_id: Option<u64>,
    },
    Alarm(Alarm),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommandRtt {
    pub command_id: u64,
    pub sent_at: Micros,
    pub answered_at: Micros,
    pub accepted: bool,
}

impl CommandRtt {
    pub fn rtt_ms(&self) -> f64 {
        us_to_ms(self.answered_at - self.sent_at)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Nodes {
    pub control: NodeId,
    pub jump: NodeId,
    pub robot: NodeId,
    pub agg: NodeId,
    pub cloud: NodeId,
}

struct Script {
    next: u64,
    start: Micros,
    end: Micros,
    rng: SimRng,
}

pub struct TeleopSim {
    pub cfg: TeleopConfig,
    pub net: Network,
    pub nodes: Nodes,
    pub host: JumpHost,
    pub gate: RobotGate,
    pub robot: Robot,
    pub agg: AggregationServer,
    pub fwd: Forwarder,
    pub twin: TwinStore,
    client: Option<ClientSession>,
    client_token: Vec<u8>,
    auth_answer: Option<Result<SessionId, String>>,
    sent: BTreeMap<u64, Micros>,
    fwd_map: BTreeMap<u64, (NodeId, u64)>,
    inbox: Vec<(u64, CommandMessage)>,
    tele_rng: SimRng,
    tick: u64,
    robot_running: bool,
    script: Option<Script>,
    telemetry_msgs: BTreeMap<MsgId, usize>,
    pub rtts: Vec<CommandRtt>,
    pub generated: u64,
    pub lost_records: u64,
    out: VecDeque<OpsEvent>,
}

fn node(t: &crate::netemu::topology::Topology, role: NodeRole) -> Result<NodeId, ScenarioError> {
    t.first(role)
        .ok_or_else(|| ScenarioError::Config(format!("topology has no {role:?} node")))
}

fn every(hz_or_s: f64) -> u64 {
    ((hz_or_s * 1e6 / DT_US as f64).round() as u64).max(1)
}

impl TeleopSim {
    pub fn new(cfg: TeleopConfig) -> Result<Self, ScenarioError> {
        let campus = profiles::builtin(&cfg.local_link)
            .ok_or_else(|| ScenarioError::Config(format!("unknown link profile `{}`", cfg.local_link)))?;
        let opts = PresetOptions {
            campus,
            ..PresetOptions::default()
        };
        let topo = build_topology_with(cfg.preset, &opts)?;
        let nodes = Nodes {
            control: node(&topo, NodeRole::ControlRoom)?,
            jump: node(&topo, NodeRole::JumpHost)?,
            robot: node(&topo, NodeRole::Robot)?,
            agg: node(&topo, NodeRole::Aggregation)?,
            cloud: node(&topo, NodeRole::ShoreCloud)?,
        };
        let edge = node(&topo, NodeRole::PlatformEdge)?;
        let mut net = Network::new(topo.clone(), cfg.seed);
        // Images share the robot's uplink with command replies.
        for (a, b) in [(nodes.robot, edge), (edge, nodes.agg)] {
            let link = topo.best_link(a, b).expect("preset link");
            let c = ArqConfig::for_link(&topo.link(link).profile, profiles::DEFAULT_MTU).with_window(BULK_WINDOW);
            net.set_arq(a, b, c)?;
        }
        let registry = cfg
            .registry
            .clone()
            .unwrap_or_else(|| Registry::single("operator", &cfg.token));
        let mut host = JumpHost::new(registry, cfg.robot_secret.as_bytes(), cfg.seed);
        if !(cfg.session_ttl_s > 0.0) {
            return Err(ScenarioError::Config("session_ttl_s must be > 0".into()));
        }
        if !(cfg.command_hz > 0.0 && cfg.pose_hz > 0.0 && cfg.thermal_every_s > 0.0) {
            return Err(ScenarioError::Config("rates must be > 0".into()));
        }
        if !(cfg.command_jitter_ms >= 0.0 && cfg.duration_s >= 0.0) {
            return Err(ScenarioError::Config("command_jitter_ms and duration_s must be >= 0".into()));
        }
        host.ttl_us = (cfg.session_ttl_s * 1e6) as Micros;
        let gate = RobotGate::new(cfg.robot_secret.as_bytes(), cfg.robot.caps);
        let mut robot = Robot::new(RobotState::default(), cfg.robot.clone(), cfg.world.clone());
        if let Some(r) = &cfg.route {
            r.validate().map_err(|e| ScenarioError::Config(e.to_string()))?;
            robot.start_route(r.clone());
        }
        let rules = RuleEngine::new(cfg.rules.clone()).map_err(ScenarioError::Config)?;
        let agg = AggregationServer::new(AppendLog::new(), rules);
        let fwd = Forwarder::new("aggregation", nodes.agg, nodes.cloud, cfg.forward.clone(), FORWARD_TOKENS);
        let twin = TwinStore::new(nodes.cloud);
        let phase = stream(cfg.seed, "robot/phase").random_range(0..DT_US);
        net.set_timer(phase, T_TICK)?;
        Ok(Self {
            tele_rng: stream(cfg.seed, "robot/telemetry"),
            cfg,
            net,
            nodes,
            host,
            gate,
            robot,
            agg,
            fwd,
            twin,
            client: None,
            client_token: Vec::new(),
            auth_answer: None,
            sent: BTreeMap::new(),
            fwd_map: BTreeMap::new(),
            inbox: Vec::new(),
            tick: 0,
            robot_running: true,
            script: None,
            telemetry_msgs: BTreeMap::new(),
            rtts: Vec::new(),
            generated: 0,
            lost_records: 0,
            out: VecDeque::new(),
        })
    }

    pub fn now(&self) -> Micros {
        self.net.now()
    }

    pub fn session(&self) -> Option<SessionId> {
        self.client.as_ref().map(|c| c.id)
    }

    pub fn drain_ops(&mut self) -> Vec<OpsEvent> {
        self.out.drain(..).collect()
    }

    pub fn trace(&self) -> &[TraceRecord] {
        self.net.trace()
    }

    /// Start an AUTH exchange; the answer shows up as an `auth` event.
    pub fn begin_auth(&mut self, token: &[u8]) -> Result<(), ScenarioError> {
        self.client = None;
        self.auth_answer = None;
        self.client_token = token.to_vec();
        let m = AuthMessage::Request { token: token.to_vec() };
        self.net.send(self.nodes.control, self.nodes.jump, MsgType::Auth, &m.encode())?;
        Ok(())
    }

    pub fn open_session(&mut self, token: &[u8]) -> Result<SessionId, ScenarioError> {
        self.begin_auth(token)?;
        let timeout = (self.cfg.auth_timeout_s * 1e6) as Micros;
        let deadline = self.now() + timeout;
        while self.auth_answer.is_none() {
            let Some(ev) = self.net.next_event_until(deadline) else { break };
            self.handle(ev)?;
        }
        match self.auth_answer.clone() {
            Some(Ok(id)) => Ok(id),
            Some(Err(r)) => Err(ScenarioError::AuthRejected(r)),
            None => Err(ScenarioError::Timeout(us_to_ms(timeout))),
        }
    }

    /// Sign and send; `None` without a session.
    pub fn send_command(&mut self, cmd: CommandMessage) -> Result<Option<u64>, ScenarioError> {
        let Some(c) = &mut self.client else { return Ok(None) };
        let env = c.sign(cmd);
        self.sent.insert(env.command_id, self.net.now());
        self.net.send(self.nodes.control, self.nodes.jump, MsgType::Command, &env.encode())?;
        Ok(Some(env.command_id))
    }

    /// Inject COMMAND bytes from `from` to `to` without any session.
    pub fn send_raw_command(&mut self, from: NodeId, to: NodeId, payload: &[u8]) -> Result<(), ScenarioError> {
        self.net.send(from, to, MsgType::Command, payload)?;
        Ok(())
    }

    /// Process every event up to and including `t`; the clock ends at `t`.
    pub fn run_until(&mut self, t: Micros) -> Result<(), ScenarioError> {
        if t > self.now() {
            self.net.set_timer(t, T_WAKE)?;
        }
        while let Some(ev) = self.net.next_event_until(t) {
            self.handle(ev)?;
        }
        Ok(())
    }

    fn handle(&mut self, ev: AppEvent) -> Result<(), ScenarioError> {
        if self.fwd.on_event(&mut self.net, &ev)? || self.twin.on_event(&mut self.net, &ev)? {
            return Ok(());
        }
        let now = self.net.now();
        match ev {
            AppEvent::Timer { token: T_TICK, .. } => {
                if self.robot_running {
                    self.robot_tick()?;
                    self.net.set_timer_in(DT_US, T_TICK);
                }
            }
            AppEvent::Timer { token: T_SCRIPT, .. } => self.script_step()?,
            AppEvent::Timer { .. } => {}
            AppEvent::Failed { msg, .. } => {
                if let Some(n) = self.telemetry_msgs.remove(&msg) {
                    self.lost_records += n as u64;
                }
            }
            AppEvent::Acked { .. } => {}
            AppEvent::Delivered {
                msg,
                origin,
                dest,
                msg_type,
                payload,
                ..
            } => {
                let n = self.nodes;
                match (dest, msg_type) {
                    (d, MsgType::Auth) if d == n.jump => self.jump_auth(origin, &payload)?,
                    (d, MsgType::Command) if d == n.jump => self.jump_command(origin, &payload)?,
                    (d, MsgType::Ack) if d == n.jump => self.jump_reply(&payload)?,
                    (d, MsgType::Command) if d == n.robot => {
                        if let Some(c) = self.gate.admit(&payload, now) {
                            self.inbox.push(c);
                        }
                    }
                    (d, MsgType::Auth) if d == n.control => self.control_auth(&payload),
                    (d, MsgType::Ack) if d == n.control => {
                        if let Some(r) = CommandReply::decode(&payload) {
                            if let Some(sent_at) = self.sent.remove(&r.command_id) {
                                let rec = CommandRtt {
                                    command_id: r.command_id,
                                    sent_at,
                                    answered_at: now,
                                    accepted: r.accepted,
                                };
                                self.rtts.push(rec);
                                self.out.push_back(OpsEvent::Cmd {
                                    command_id: r.command_id,
                                    accepted: r.accepted,
                                    reason: r.reason,
                                    client_ts: None,
                                });
                                if rec.accepted {
                                    self.out.push_back(OpsEvent::Metric {
                                        name: "rtt_ms".into(),
                                        value: rec.rtt_ms(),
                                        command_id: Some(rec.command_id),
                                    });
                                }
                            }
                        }
                    }
                    (d, MsgType::Telemetry) if d == n.agg => {
                        self.telemetry_msgs.remove(&msg);
                        if let Ok(r) = TelemetryRecord::decode(&payload) {
                            self.ingest(r)?;
                        }
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    fn jump_auth(&mut self, origin: NodeId, payload: &[u8]) -> Result<(), ScenarioError> {
        let now = self.net.now();
        let answer = match AuthMessage::decode(payload) {
            Ok(AuthMessage::Request { token }) => match self.host.authenticate(&token, now) {
                Ok(s) => AuthMessage::Granted {
                    session: s.id,
                    issued_at: s.issued_at,
                    expires_at: s.expires_at,
                },
                Err(e) => AuthMessage::Rejected { reason: e.to_string() },
            },
            _ => AuthMessage::Rejected {
                reason: "malformed AUTH".into(),
            },
        };
        self.net.send(self.nodes.jump, origin, MsgType::Auth, &answer.encode())?;
        Ok(())
    }

    fn jump_command(&mut self, origin: NodeId, payload: &[u8]) -> Result<(), ScenarioError> {
        let now = self.net.now();
        let client_id = payload
            .get(8..16)
            .map_or(0, |b| u64::from_be_bytes(b.try_into().expect("8")));
        match self.host.tunnel_command(payload, now) {
            Ok(signed) => {
                self.fwd_map.insert(signed.command_id, (origin, client_id));
                self.net.send(self.nodes.jump, self.nodes.robot, MsgType::Command, &signed.encode())?;
            }
            Err(e) => {
                let r = CommandReply {
                    command_id: client_id,
                    accepted: false,
                    reason: e.to_string(),
                };
                self.net.send(self.nodes.jump, origin, MsgType::Ack, &r.encode())?;
            }
        }
        Ok(())
    }

    fn jump_reply(&mut self, payload: &[u8]) -> Result<(), ScenarioError> {
        let Some(r) = CommandReply::decode(payload) else { return Ok(()) };
        let Some((origin, client_id)) = self.fwd_map.remove(&r.command_id) else {
            return Ok(());
        };
        let back = CommandReply {
            command_id: client_id,
            ..r
        };
        self.net.send(self.nodes.jump, origin, MsgType::Ack, &back.encode())?;
        Ok(())
    }

    fn control_auth(&mut self, payload: &[u8]) {
        match AuthMessage::decode(payload) {
            Ok(AuthMessage::Granted {
                session,
                issued_at,
                expires_at,
            }) => {
                self.client = Some(ClientSession::new(&self.client_token, session, issued_at, expires_at));
                self.auth_answer = Some(Ok(session));
                self.out.push_back(OpsEvent::Auth {
                    ok: true,
                    session: Some(session.to_string()),
                    issued_at_us: Some(issued_at),
                    expires_at_us: Some(expires_at),
                    reason: None,
                });
            }
            Ok(AuthMessage::Rejected { reason }) => {
                self.auth_answer = Some(Err(reason.clone()));
                self.out.push_back(OpsEvent::Auth {
                    ok: false,
                    session: None,
                    issued_at_us: None,
                    expires_at_us: None,
                    reason: Some(reason),
                });
            }
            _ => {}
        }
    }

    fn ingest(&mut self, r: TelemetryRecord) -> Result<(), ScenarioError> {
        let now = self.net.now();
        let data = match r.kind {
            TelemetryKind::Image => None,
            _ => serde_json::from_slice(&r.payload).ok(),
        };
        self.out.push_back(OpsEvent::Telemetry {
            source: r.source.clone(),
            kind: r.kind,
            timestamp_us: r.timestamp_us,
            payload_bytes: r.payload_size(),
            data,
        });
        match self.agg.ingest(r.clone(), now) {
            Ok((_, alarms)) => {
                for a in alarms {
                    self.out.push_back(OpsEvent::Alarm(a));
                }
                self.fwd.push(&mut self.net, r)?;
            }
            // Bounded log mode: the record is counted as lost at ingest.
            Err(_) => self.lost_records += 1,
        }
        Ok(())
    }

    fn emit(&mut self, kind: TelemetryKind) -> Result<(), ScenarioError> {
        let now = self.net.now();
        let rec = generate_telemetry(
            &self.robot.state,
            kind,
            now,
            &self.cfg.world,
            &self.cfg.telemetry,
            &mut self.tele_rng,
        );
        let msg = self.net.send(self.nodes.robot, self.nodes.agg, MsgType::Telemetry, &rec.encode())?;
        self.telemetry_msgs.insert(msg, 1);
        self.generated += 1;
        Ok(())
    }

    fn robot_tick(&mut self) -> Result<(), ScenarioError> {
        let mut events = Vec::new();
        for (fid, cmd) in std::mem::take(&mut self.inbox) {
            let reply = match self.robot.on_command(&cmd) {
                Ok(ev) => {
                    events.extend(ev);
                    CommandReply {
                        command_id: fid,
                        accepted: true,
                        reason: String::new(),
                    }
                }
                Err(e) => CommandReply {
                    command_id: fid,
                    accepted: false,
                    reason: e.to_string(),
                },
            };
            self.net.send(self.nodes.robot, self.nodes.jump, MsgType::Ack, &reply.encode())?;
        }
        events.extend(self.robot.tick());
        for e in events {
            match e {
                RobotEvent::Route(RouteEvent::CaptureDone { capture, .. }) => {
                    let kind = match capture {
                        Capture::Image => TelemetryKind::Image,
                        Capture::ThermalStub => TelemetryKind::Thermal,
                        Capture::AudioStub => TelemetryKind::Audio,
                    };
                    self.emit(kind)?;
                }
                RobotEvent::Halted => self.emit(TelemetryKind::Battery)?,
                _ => {}
            }
        }
        self.tick += 1;
        if self.tick % every(1.0 / self.cfg.pose_hz) == 0 {
            self.emit(TelemetryKind::Pose)?;
        }
        if self.tick % every(self.cfg.thermal_every_s) == 0 {
            self.emit(TelemetryKind::Thermal)?;
        }
        Ok(())
    }

    /// Command `i` of the scripted drive: forward walk with a slow weave.
    pub fn scripted_command(&self, i: u64) -> CommandMessage {
        let yaw = 0.3 * ((i as f64) / 25.0).sin();
        CommandMessage::new(Gait::Walk, 0.6, 0.0, yaw, self.cfg.command_duration_ms)
    }

    fn script_step(&mut self) -> Result<(), ScenarioError> {
        let Some(s) = &self.script else { return Ok(()) };
        let cmd = self.scripted_command(s.next);
        self.send_command(cmd)?;
        let period = (1e6 / self.cfg.command_hz).round() as Micros;
        let jitter_max = ((self.cfg.command_jitter_ms * 1e3) as Micros).min(period.saturating_sub(1));
        let s = self.script.as_mut().expect("set");
        s.next += 1;
        let slot = s.start + s.next * period;
        if slot >= s.end {
            self.script = None;
            return Ok(());
        }
        let j = if jitter_max > 0 { s.rng.random_range(0..=jitter_max) } else { 0 };
        self.net.set_timer(slot + j, T_SCRIPT)?;
        Ok(())
    }

    /// Drive commands at the configured rate for `duration_s`, then let
    /// replies and forwarding settle.
    pub fn run_script(&mut self) -> Result<(), ScenarioError> {
        let start = self.now();
        let end = start + (self.cfg.duration_s * 1e6) as Micros;
        if end == start {
            return Ok(());
        }
        let mut rng = stream(self.cfg.seed, "operator/jitter");
        let period = (1e6 / self.cfg.command_hz).round() as Micros;
        let jitter_max = ((self.cfg.command_jitter_ms * 1e3) as Micros).min(period.saturating_sub(1));
        let first = if jitter_max > 0 { rng.random_range(0..=jitter_max) } else { 0 };
        self.script = Some(Script {
            next: 0,
            start,
            end,
            rng,
        });
        self.net.set_timer(start + first, T_SCRIPT)?;
        self.run_until(end)?;
        // Replies still in flight.
        let grace = end + 10_000_000;
        while !self.sent.is_empty() && self.now() < grace {
            let Some(ev) = self.net.next_event_until(grace) else { break };
            self.handle(ev)?;
        }
        self.robot_running = false;
        self.fwd.flush(&mut self.net)?;
        let settle = self.now() + 600_000_000;
        while !(self.fwd.is_drained() && self.telemetry_msgs.is_empty()) {
            let Some(ev) = self.net.next_event_until(settle) else { break };
            self.handle(ev)?;
        }
        Ok(())
    }

    pub fn unanswered(&self) -> usize {
        self.sent.len()
    }

    pub fn report(&mut self) -> TeleopReport {
        let acct = self.net.close();
        let rtt: Vec<f64> = self.rtts.iter().filter(|r| r.accepted).map(CommandRtt::rtt_ms).collect();
        let mean = (!rtt.is_empty()).then(|| rtt.iter().sum::<f64>() / rtt.len() as f64);
        TeleopReport {
            preset: self.cfg.preset,
            local_link: self.cfg.local_link.clone(),
            seed: self.cfg.seed,
            commands_sent: self.rtts.len() as u64 + self.sent.len() as u64,
            commands_accepted: rtt.len() as u64,
            commands_rejected: self.rtts.iter().filter(|r| !r.accepted).count() as u64,
            commands_unanswered: self.sent.len() as u64,
            rtt_mean_ms: mean,
            rtt_stats: summarize(&rtt).ok(),
            rtt_ms: rtt,
            per: compute_per(&acct).ok(),
            pdr: compute_pdr(&acct).ok(),
            accounting: acct,
            audit_entries: self.host.audit.entries().len() as u64,
            audit: verify_audit(self.host.audit.entries()),
            bypass: check_zero_bypass(self.host.audit.entries(), &self.gate.accepted),
            unauthenticated_dropped_at_robot: self.gate.dropped,
            records_generated: self.generated,
            records_logged: self.agg.log.len() as u64,
            records_lost: self.lost_records,
            records_at_twin: self.twin.len() as u64,
            alarms: self.agg.alarms.len() as u64,
            rules_skipped: self.agg.rules.skipped,
            final_state: self.robot.state,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeleopReport {
    pub preset: SetupId,
    pub local_link: String,
    pub seed: u64,
    pub commands_sent: u64,
    pub commands_accepted: u64,
    pub commands_rejected: u64,
    pub commands_unanswered: u64,
    /// Command send to reply arrival at the control room, accepted
    /// commands only.
    pub rtt_mean_ms: Option<f64>,
    pub rtt_stats: Option<BoxStats>,
    #[serde(skip)]
    pub rtt_ms: Vec<f64>,
    pub accounting: PacketAccounting,
    pub per: Option<f64>,
    pub pdr: Option<f64>,
    pub audit_entries: u64,
    pub audit: AuditVerdict,
    pub bypass: Vec<BypassViolation>,
    pub unauthenticated_dropped_at_robot: u64,
    pub records_generated: u64,
    pub records_logged: u64,
    pub records_lost: u64,
    pub records_at_twin: u64,
    pub alarms: u64,
    pub rules_skipped: u64,
    pub final_state: RobotState,
}

/// Authenticate, drive for `duration_s`, settle, report.
pub fn run_teleop(cfg: TeleopConfig) -> Result<(TeleopReport, TeleopSim), ScenarioError> {
    let token = cfg.token.clone();
    let mut sim = TeleopSim::new(cfg)?;
    sim.open_session(token.as_bytes())?;
    sim.run_script()?;
    Ok((sim.report(), sim))
}
