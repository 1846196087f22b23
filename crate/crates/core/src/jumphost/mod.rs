//! Access control point between shore and the platform zone.
//!
//! Operators authenticate with a registry token and get a time-limited
//! session. COMMAND envelopes signed with the session key are checked
//! against the session and its allowed message types, then re-signed with
//! the jump host's static robot key. The robot only accepts envelopes under
//! that key, so nothing reaches it except through here. Every decision is
//! written to the audit chain.

pub mod audit;

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::netemu::clock::Micros;
use crate::netemu::seed::{stream, SimRng};
use crate::protocol::command::{CommandCaps, CommandMessage};
use crate::protocol::frame::MsgType;
use crate::protocol::session::{session_key, static_key, EnvelopeError, Key, SessionId, SignedCommand};

pub use audit::{read_audit_jsonl, verify_audit, AuditEntry, AuditEvent, AuditFields, AuditLog, AuditVerdict, UNAUTHENTICATED};

pub const DEFAULT_TTL_US: Micros = 900_000_000;
/// Session id the jump host uses on its own hop to the robot.
pub const TUNNEL_SESSION: SessionId = SessionId(0);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorEntry {
    pub principal: String,
    pub token: String,
    pub allowed_ops: BTreeSet<MsgType>,
    /// Registry entry is void from this time on.
    #[serde(default)]
    pub expires_at_us: Option<Micros>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Registry {
    pub operators: Vec<OperatorEntry>,
}

impl Registry {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let r: Self = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let mut seen = BTreeSet::new();
        for o in &r.operators {
            if o.token.is_empty() {
                return Err(format!("operator {}: empty token", o.principal));
            }
            if !seen.insert(&o.token) {
                return Err(format!("operator {}: duplicate token", o.principal));
            }
        }
        Ok(r)
    }

    /// One operator allowed to command and read telemetry.
    pub fn single(principal: &str, token: &str) -> Self {
        Self {
            operators: vec![OperatorEntry {
                principal: principal.into(),
                token: token.into(),
                allowed_ops: [MsgType::Auth, MsgType::Command, MsgType::Telemetry, MsgType::Metric]
                    .into_iter()
                    .collect(),
                expires_at_us: None,
            }],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub id: SessionId,
    pub principal: String,
    pub issued_at: Micros,
    pub expires_at: Micros,
    pub allowed_ops: BTreeSet<MsgType>,
    key: Key,
    last_command_id: u64,
}

impl Session {
    pub fn valid_at(&self, t: Micros) -> bool {
        self.issued_at <= t && t < self.expires_at
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum JumpError {
    #[error("authentication rejected")]
    AuthRejected,
    #[error("session expired")]
    SessionExpired,
    #[error("session lacks privilege for {0:?}")]
    PolicyViolation(MsgType),
    #[error("unauthenticated command: {0}")]
    Unauthenticated(&'static str),
    #[error("replayed command id {0}")]
    Replay(u64),
    #[error("malformed command: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone)]
pub struct JumpHost {
    registry: Registry,
    sessions: BTreeMap<SessionId, Session>,
    pub audit: AuditLog,
    pub ttl_us: Micros,
    pub caps: CommandCaps,
    robot_key: Key,
    next_forward_id: u64,
    rng: SimRng,
}

impl JumpHost {
    pub fn new(registry: Registry, robot_secret: &[u8], seed: u64) -> Self {
        Self {
            registry,
            sessions: BTreeMap::new(),
            audit: AuditLog::new(),
            ttl_us: DEFAULT_TTL_US,
            caps: CommandCaps::default(),
            robot_key: static_key(robot_secret),
            next_forward_id: 1,
            rng: stream(seed, "jumphost/session"),
        }
    }

    pub fn session(&self, id: SessionId) -> Option<&Session> {
        self.sessions.get(&id)
    }

    pub fn authenticate(&mut self, token: &[u8], now: Micros) -> Result<Session, JumpError> {
        let entry = self
            .registry
            .operators
            .iter()
            .find(|o| o.token.as_bytes() == token)
            .cloned();
        let Some(entry) = entry.filter(|o| o.expires_at_us.is_none_or(|t| now < t)) else {
            self.audit.append(
                now,
                UNAUTHENTICATED.into(),
                AuditEvent::AuthFail,
                AuditFields {
                    detail: "unknown or expired token".into(),
                    ..AuditFields::default()
                },
            );
            return Err(JumpError::AuthRejected);
        };
        let mut id = SessionId(self.rng.random());
        while id == TUNNEL_SESSION || self.sessions.contains_key(&id) {
            id = SessionId(self.rng.random());
        }
        let expires_at = match entry.expires_at_us {
            Some(t) => (now + self.ttl_us).min(t),
            None => now + self.ttl_us,
        };
        let s = Session {
            id,
            principal: entry.principal.clone(),
            issued_at: now,
            expires_at,
            allowed_ops: entry.allowed_ops.clone(),
            key: session_key(token, id, now),
            last_command_id: 0,
        };
        self.audit.append(
            now,
            id.to_string(),
            AuditEvent::AuthOk,
            AuditFields {
                principal: Some(entry.principal),
                expires_at_us: Some(expires_at),
                ..AuditFields::default()
            },
        );
        self.sessions.insert(id, s.clone());
        Ok(s)
    }

    fn reject(&mut self, now: Micros, session: String, event: AuditEvent, command_id: Option<u64>, e: JumpError) -> JumpError {
        self.audit.append(
            now,
            session,
            event,
            AuditFields {
                command_id,
                detail: e.to_string(),
                ..AuditFields::default()
            },
        );
        e
    }

    /// Check a COMMAND payload and re-sign it for the robot hop.
    pub fn tunnel_command(&mut self, payload: &[u8], now: Micros) -> Result<SignedCommand, JumpError> {
        let env = match SignedCommand::decode(payload, &self.caps) {
            Ok(env) => env,
            Err(e) => {
                let label = match payload.get(..8) {
                    Some(b) => {
                        let id = SessionId(u64::from_be_bytes(b.try_into().expect("8")));
                        if self.sessions.contains_key(&id) {
                            id.to_string()
                        } else {
                            UNAUTHENTICATED.into()
                        }
                    }
                    None => UNAUTHENTICATED.into(),
                };
                let err = match e {
                    EnvelopeError::Command(c) => JumpError::Malformed(c.to_string()),
                    other => JumpError::Malformed(other.to_string()),
                };
                return Err(self.reject(now, label, AuditEvent::CmdRejected, None, err));
            }
        };
        let Some(s) = self.sessions.get(&env.session) else {
            return Err(self.reject(
                now,
                UNAUTHENTICATED.into(),
                AuditEvent::CmdRejected,
                Some(env.command_id),
                JumpError::Unauthenticated("no such session"),
            ));
        };
        if !env.verify(&s.key) {
            return Err(self.reject(
                now,
                UNAUTHENTICATED.into(),
                AuditEvent::CmdRejected,
                Some(env.command_id),
                JumpError::Unauthenticated("bad integrity tag"),
            ));
        }
        let label = s.id.to_string();
        if !s.valid_at(now) {
            self.sessions.remove(&env.session);
            return Err(self.reject(now, label, AuditEvent::SessionExpired, Some(env.command_id), JumpError::SessionExpired));
        }
        if !s.allowed_ops.contains(&MsgType::Command) {
            return Err(self.reject(
                now,
                label,
                AuditEvent::CmdRejected,
                Some(env.command_id),
                JumpError::PolicyViolation(MsgType::Command),
            ));
        }
        if env.command_id <= s.last_command_id {
            return Err(self.reject(
                now,
                label,
                AuditEvent::CmdRejected,
                Some(env.command_id),
                JumpError::Replay(env.command_id),
            ));
        }
        self.sessions.get_mut(&env.session).expect("present").last_command_id = env.command_id;
        let fwd = self.next_forward_id;
        self.next_forward_id += 1;
        self.audit.append(
            now,
            label,
            AuditEvent::CmdForwarded,
            AuditFields {
                command_id: Some(env.command_id),
                forward_id: Some(fwd),
                ..AuditFields::default()
            },
        );
        Ok(SignedCommand::sign(&self.robot_key, TUNNEL_SESSION, fwd, env.command))
    }
}

/// Robot-side check of tunnelled commands.
#[derive(Debug, Clone)]
pub struct RobotGate {
    key: Key,
    caps: CommandCaps,
    last_forward_id: u64,
    /// (forward id, arrival time) of every accepted command.
    pub accepted: Vec<(u64, Micros)>,
    pub dropped: u64,
}

impl RobotGate {
    pub fn new(robot_secret: &[u8], caps: CommandCaps) -> Self {
        Self {
            key: static_key(robot_secret),
            caps,
            last_forward_id: 0,
            accepted: Vec::new(),
            dropped: 0,
        }
    }

    /// The command if `payload` came through the jump host, else `None`.
    pub fn admit(&mut self, payload: &[u8], now: Micros) -> Option<(u64, CommandMessage)> {
        let ok = SignedCommand::decode(payload, &self.caps)
            .ok()
            .filter(|c| c.session == TUNNEL_SESSION && c.verify(&self.key) && c.command_id > self.last_forward_id);
        match ok {
            Some(c) => {
                self.last_forward_id = c.command_id;
                self.accepted.push((c.command_id, now));
                Some((c.command_id, c.command))
            }
            None => {
                self.dropped += 1;
                None
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BypassViolation {
    pub forward_id: u64,
    pub at_us: Micros,
    pub reason: String,
}

/// Replay check: each command the robot accepted must match an earlier
/// `cmd_forwarded` entry whose session was valid at forwarding time.
pub fn check_zero_bypass(entries: &[AuditEntry], accepted: &[(u64, Micros)]) -> Vec<BypassViolation> {
    let mut sessions: BTreeMap<&str, (Micros, Micros)> = BTreeMap::new();
    let mut forwarded: BTreeMap<u64, (Micros, bool)> = BTreeMap::new();
    for e in entries {
        match e.event {
            AuditEvent::AuthOk => {
                if let Some(exp) = e.expires_at_us {
                    sessions.insert(e.session.as_str(), (e.timestamp_us, exp));
                }
            }
            AuditEvent::CmdForwarded => {
                let valid = sessions
                    .get(e.session.as_str())
                    .is_some_and(|&(from, to)| from <= e.timestamp_us && e.timestamp_us < to);
                if let Some(f) = e.forward_id {
                    forwarded.insert(f, (e.timestamp_us, valid));
                }
            }
            _ => {}
        }
    }
    let mut out = Vec::new();
    for &(fwd, at) in accepted {
        let reason = match forwarded.get(&fwd) {
            None => Some("no cmd_forwarded entry"),
            Some(&(t, _)) if t > at => Some("forwarded after delivery"),
            Some(&(_, false)) => Some("session not valid when forwarded"),
            Some(_) => None,
        };
        if let Some(r) = reason {
            out.push(BypassViolation {
                forward_id: fwd,
                at_us: at,
                reason: r.into(),
            });
        }
    }
    out
}
