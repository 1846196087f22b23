//! Control-room gateway messages.
//!
//! Operators send `auth` and `cmd` requests; the gateway answers with
//! `auth`, `cmd`, `telemetry`, `metric` and `alarm` events, one kind per
//! frame type. The gateway itself plays the control room node: it holds
//! the session and signs commands, so websocket and raw-frame clients go
//! through the same jump host path as the simulation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::teleop::{OpsEvent, ScenarioError, TeleopSim};
use crate::netemu::clock::Micros;
use crate::protocol::command::{CommandMessage, Gait};

fn default_duration() -> u32 {
    150
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum OpsRequest {
    Auth {
        token: String,
    },
    Cmd {
        gait: Gait,
        vx: f64,
        #[serde(default)]
        vy: f64,
        #[serde(default)]
        yaw_rate: f64,
        #[serde(default = "default_duration")]
        duration_ms: u32,
        /// Opaque client timestamp, echoed on the matching `cmd` answer.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        client_ts: Option<f64>,
    },
}

impl OpsRequest {
    pub fn parse(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }
}

/// Answer to a request that never made it onto the network.
pub fn rejection(reason: impl Into<String>) -> OpsEvent {
    OpsEvent::Cmd {
        command_id: 0,
        accepted: false,
        reason: reason.into(),
        client_ts: None,
    }
}

pub struct OpsGateway {
    pub sim: TeleopSim,
    /// Command id to the `client_ts` it was sent with.
    pending: BTreeMap<u64, f64>,
    /// Answered command RTTs in ms, in answer order.
    pub rtt_ms: Vec<f64>,
}

impl OpsGateway {
    pub fn new(sim: TeleopSim) -> Self {
        Self {
            sim,
            pending: BTreeMap::new(),
            rtt_ms: Vec::new(),
        }
    }

    /// Feed one request into the simulated control room. Returns events
    /// that answer it straight away; everything else comes out of
    /// [`advance`](Self::advance).
    pub fn apply(&mut self, req: OpsRequest) -> Result<Vec<OpsEvent>, ScenarioError> {
        match req {
            OpsRequest::Auth { token } => {
                self.sim.begin_auth(token.as_bytes())?;
                Ok(Vec::new())
            }
            OpsRequest::Cmd {
                gait,
                vx,
                vy,
                yaw_rate,
                duration_ms,
                client_ts,
            } => {
                let cmd = CommandMessage::new(gait, vx, vy, yaw_rate, duration_ms);
                match self.sim.send_command(cmd)? {
                    Some(id) => {
                        if let Some(ts) = client_ts {
                            self.pending.insert(id, ts);
                        }
                        Ok(Vec::new())
                    }
                    None => Ok(vec![rejection("no session")]),
                }
            }
        }
    }

    /// Run the simulation up to `t` and collect what the control room saw.
    pub fn advance(&mut self, t: Micros) -> Result<Vec<OpsEvent>, ScenarioError> {
        self.sim.run_until(t)?;
        let mut out = self.sim.drain_ops();
        for ev in &mut out {
            match ev {
                OpsEvent::Cmd {
                    command_id, client_ts, ..
                } => *client_ts = self.pending.remove(command_id),
                OpsEvent::Metric { name, value, .. } if name == "rtt_ms" => self.rtt_ms.push(*value),
                _ => {}
            }
        }
        Ok(out)
    }
}

fn obj(type_name: &str, props: Value, required: &[&str]) -> Value {
    let mut p = props.as_object().cloned().unwrap_or_default();
    p.insert("type".into(), json!({ "const": type_name }));
    let mut req: Vec<&str> = vec!["type"];
    req.extend_from_slice(required);
    json!({
        "type": "object",
        "properties": p,
        "required": req,
        "additionalProperties": false,
    })
}

/// JSON Schema (draft 2020-12) for both directions of the gateway.
pub fn ops_schema() -> Value {
    let u64_ = json!({ "type": "integer", "minimum": 0 });
    let num = json!({ "type": "number" });
    let gait = json!({ "enum": ["idle", "walk", "run", "stairs"] });
    let kind = json!({ "enum": ["pose", "battery", "image", "thermal", "audio", "process"] });
    json!({
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "$id": "ptxlink/ops",
        "endpoint": "/ops",
        "$defs": {
            "request": { "oneOf": [
                obj("auth", json!({ "token": { "type": "string" } }), &["token"]),
                obj("cmd", json!({
                    "gait": gait,
                    "vx": num, "vy": num, "yaw_rate": num,
                    "duration_ms": u64_,
                    "client_ts": num,
                }), &["gait", "vx"]),
            ]},
            "event": { "oneOf": [
                obj("auth", json!({
                    "ok": { "type": "boolean" },
                    "session": { "type": "string" },
                    "issued_at_us": u64_,
                    "expires_at_us": u64_,
                    "reason": { "type": "string" },
                }), &["ok"]),
                obj("cmd", json!({
                    "command_id": u64_,
                    "accepted": { "type": "boolean" },
                    "reason": { "type": "string" },
                    "client_ts": num,
                }), &["command_id", "accepted"]),
                obj("telemetry", json!({
                    "source": { "type": "string" },
                    "kind": kind,
                    "timestamp_us": u64_,
                    "payload_bytes": u64_,
                    "data": { "type": "object" },
                }), &["source", "kind", "timestamp_us", "payload_bytes"]),
                obj("metric", json!({
                    "name": { "type": "string" },
                    "value": num,
                    "command_id": u64_,
                }), &["name", "value"]),
                obj("alarm", json!({
                    "rule_id": { "type": "string" },
                    "source": { "type": "string" },
                    "at_us": u64_,
                    "observed": num,
                    "reading": num,
                }), &["rule_id", "source", "at_us", "observed", "reading"]),
            ]},
        },
    })
}
