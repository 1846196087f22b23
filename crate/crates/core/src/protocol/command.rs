//! High-level robot commands and their 29-byte binary form:
//! gait u8, vx f64, vy f64, yaw_rate f64, duration_ms u32 (big-endian).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub const COMMAND_LEN: usize = 29;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gait {
    Idle,
    Walk,
    Run,
    Stairs,
}

impl Gait {
    pub const ALL: [Gait; 4] = [Gait::Idle, Gait::Walk, Gait::Run, Gait::Stairs];

    pub fn code(self) -> u8 {
        match self {
            Gait::Idle => 0,
            Gait::Walk => 1,
            Gait::Run => 2,
            Gait::Stairs => 3,
        }
    }

    pub fn from_code(c: u8) -> Option<Gait> {
        Gait::ALL.get(c as usize).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Gait::Idle => "idle",
            Gait::Walk => "walk",
            Gait::Run => "run",
            Gait::Stairs => "stairs",
        }
    }
}

impl fmt::Display for Gait {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Gait {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Gait::ALL
            .into_iter()
            .find(|g| g.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown gait `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandCaps {
    pub vx: f64,
    pub vy: f64,
    pub yaw_rate: f64,
    pub duration_ms: u32,
}

impl Default for CommandCaps {
    fn default() -> Self {
        Self {
            vx: 1.5,
            vy: 0.8,
            yaw_rate: 2.0,
            duration_ms: 5_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommandMessage {
    pub gait: Gait,
    pub vx: f64,
    pub vy: f64,
    pub yaw_rate: f64,
    pub duration_ms: u32,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CommandError {
    #[error("{field} = {value} exceeds cap {cap}")]
    OutOfRange { field: &'static str, value: f64, cap: f64 },
    #[error("{0} is not finite")]
    NonFinite(&'static str),
    #[error("command body must be {COMMAND_LEN} bytes, got {0}")]
    BadLength(usize),
    #[error("unknown gait code {0}")]
    BadGait(u8),
}

impl CommandMessage {
    pub fn new(gait: Gait, vx: f64, vy: f64, yaw_rate: f64, duration_ms: u32) -> Self {
        Self {
            gait,
            vx,
            vy,
            yaw_rate,
            duration_ms,
        }
    }

    pub fn stop() -> Self {
        Self::new(Gait::Idle, 0.0, 0.0, 0.0, 0)
    }

    pub fn validate(&self, caps: &CommandCaps) -> Result<(), CommandError> {
        for (field, value, cap) in [
            ("vx", self.vx, caps.vx),
            ("vy", self.vy, caps.vy),
            ("yaw_rate", self.yaw_rate, caps.yaw_rate),
        ] {
            if !value.is_finite() {
                return Err(CommandError::NonFinite(field));
            }
            if value.abs() > cap {
                return Err(CommandError::OutOfRange { field, value, cap });
            }
        }
        if self.duration_ms > caps.duration_ms {
            return Err(CommandError::OutOfRange {
                field: "duration_ms",
                value: self.duration_ms as f64,
                cap: caps.duration_ms as f64,
            });
        }
        Ok(())
    }

    pub fn encode(&self) -> [u8; COMMAND_LEN] {
        let mut b = [0u8; COMMAND_LEN];
        b[0] = self.gait.code();
        b[1..9].copy_from_slice(&self.vx.to_be_bytes());
        b[9..17].copy_from_slice(&self.vy.to_be_bytes());
        b[17..25].copy_from_slice(&self.yaw_rate.to_be_bytes());
        b[25..29].copy_from_slice(&self.duration_ms.to_be_bytes());
        b
    }

    /// Parse and check against `caps`.
    pub fn decode(b: &[u8], caps: &CommandCaps) -> Result<Self, CommandError> {
        if b.len() != COMMAND_LEN {
            return Err(CommandError::BadLength(b.len()));
        }
        let f = |i: usize| f64::from_be_bytes(b[i..i + 8].try_into().expect("8 bytes"));
        let cmd = Self {
            gait: Gait::from_code(b[0]).ok_or(CommandError::BadGait(b[0]))?,
            vx: f(1),
            vy: f(9),
            yaw_rate: f(17),
            duration_ms: u32::from_be_bytes(b[25..29].try_into().expect("4 bytes")),
        };
        cmd.validate(caps)?;
        Ok(cmd)
    }
}

/// Answer to one command: id u64, accepted u8, then a UTF-8 reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandReply {
    pub command_id: u64,
    pub accepted: bool,
    pub reason: String,
}

impl CommandReply {
    pub fn encode(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(9 + self.reason.len());
        b.extend_from_slice(&self.command_id.to_be_bytes());
        b.push(self.accepted as u8);
        b.extend_from_slice(self.reason.as_bytes());
        b
    }

    pub fn decode(b: &[u8]) -> Option<Self> {
        let id = u64::from_be_bytes(b.get(..8)?.try_into().ok()?);
        let accepted = match b.get(8)? {
            0 => false,
            1 => true,
            _ => return None,
        };
        Some(Self {
            command_id: id,
            accepted,
            reason: String::from_utf8(b[9..].to_vec()).ok()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn caps_enforced() {
        let caps = CommandCaps::default();
        assert!(CommandMessage::new(Gait::Run, 1.5, -0.8, 2.0, 5_000).validate(&caps).is_ok());
        assert!(CommandMessage::new(Gait::Run, 1.51, 0.0, 0.0, 0).validate(&caps).is_err());
        assert!(CommandMessage::new(Gait::Walk, 0.0, 0.0, 0.0, 5_001).validate(&caps).is_err());
        assert_eq!(
            CommandMessage::new(Gait::Walk, f64::NAN, 0.0, 0.0, 0).validate(&caps),
            Err(CommandError::NonFinite("vx"))
        );
    }

    #[test]
    fn bad_bodies() {
        let caps = CommandCaps::default();
        assert_eq!(CommandMessage::decode(&[0; 3], &caps), Err(CommandError::BadLength(3)));
        let mut b = CommandMessage::stop().encode();
        b[0] = 9;
        assert_eq!(CommandMessage::decode(&b, &caps), Err(CommandError::BadGait(9)));
    }

    #[test]
    fn gait_names() {
        assert_eq!("Stairs".parse::<Gait>().unwrap(), Gait::Stairs);
        assert!("hop".parse::<Gait>().is_err());
    }

    #[test]
    fn reply_codec() {
        let r = CommandReply {
            command_id: 12,
            accepted: false,
            reason: "battery depleted".into(),
        };
        assert_eq!(CommandReply::decode(&r.encode()), Some(r));
        assert_eq!(CommandReply::decode(&[0; 8]), None);
        assert_eq!(CommandReply::decode(&[0, 0, 0, 0, 0, 0, 0, 0, 2]), None);
    }

    proptest! {
        #[test]
        fn round_trip(g in 0u8..4, vx in -1.5f64..=1.5, vy in -0.8f64..=0.8, w in -2.0f64..=2.0, d in 0u32..=5_000) {
            let c = CommandMessage::new(Gait::from_code(g).unwrap(), vx, vy, w, d);
            prop_assert_eq!(CommandMessage::decode(&c.encode(), &CommandCaps::default()).unwrap(), c);
        }
    }
}
