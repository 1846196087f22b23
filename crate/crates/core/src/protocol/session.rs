//! AUTH exchange payloads and integrity-tagged command envelopes.
//!
//! A session key is derived from the operator token, the session id and
//! the issue time, so both ends can compute it without sending it. Each
//! COMMAND carries an HMAC-SHA256 tag (truncated to 16 bytes) over session,
//! command id and command body. The tag gives authenticity and integrity;
//! payloads are not encrypted.

use hmac::{Hmac, KeyInit, Mac};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::command::{CommandCaps, CommandError, CommandMessage, COMMAND_LEN};
use crate::netemu::clock::Micros;

pub const TAG_LEN: usize = 16;
pub const SIGNED_COMMAND_LEN: usize = 8 + 8 + COMMAND_LEN + TAG_LEN;

pub type Key = [u8; 32];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SessionId(pub u64);

impl std::fmt::Display for SessionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

pub fn session_key(token: &[u8], session: SessionId, issued_at: Micros) -> Key {
    let mut h = Sha256::new();
    h.update(b"ptxlink/session/v1");
    h.update((token.len() as u32).to_be_bytes());
    h.update(token);
    h.update(session.0.to_be_bytes());
    h.update(issued_at.to_be_bytes());
    h.finalize().into()
}

/// Key for a static shared secret, e.g. jump host to robot.
pub fn static_key(secret: &[u8]) -> Key {
    let mut h = Sha256::new();
    h.update(b"ptxlink/static/v1");
    h.update(secret);
    h.finalize().into()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AuthMessage {
    Request { token: Vec<u8> },
    Granted { session: SessionId, issued_at: Micros, expires_at: Micros },
    Rejected { reason: String },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnvelopeError {
    #[error("malformed AUTH payload")]
    BadAuth,
    #[error("signed command must be {SIGNED_COMMAND_LEN} bytes, got {0}")]
    BadLength(usize),
    #[error(transparent)]
    Command(#[from] CommandError),
}

impl AuthMessage {
    pub fn encode(&self) -> Vec<u8> {
        let mut b = Vec::new();
        match self {
            AuthMessage::Request { token } => {
                b.push(1);
                b.extend_from_slice(token);
            }
            AuthMessage::Granted {
                session,
                issued_at,
                expires_at,
            } => {
                b.push(2);
                b.extend_from_slice(&session.0.to_be_bytes());
                b.extend_from_slice(&issued_at.to_be_bytes());
                b.extend_from_slice(&expires_at.to_be_bytes());
            }
            AuthMessage::Rejected { reason } => {
                b.push(3);
                b.extend_from_slice(reason.as_bytes());
            }
        }
        b
    }

    pub fn decode(b: &[u8]) -> Result<Self, EnvelopeError> {
        let u64_at = |i: usize| -> Result<u64, EnvelopeError> {
            Ok(u64::from_be_bytes(
                b.get(i..i + 8).ok_or(EnvelopeError::BadAuth)?.try_into().expect("8 bytes"),
            ))
        };
        match b.first() {
            Some(1) => Ok(AuthMessage::Request { token: b[1..].to_vec() }),
            Some(2) if b.len() == 25 => Ok(AuthMessage::Granted {
                session: SessionId(u64_at(1)?),
                issued_at: u64_at(9)?,
                expires_at: u64_at(17)?,
            }),
            Some(3) => Ok(AuthMessage::Rejected {
                reason: String::from_utf8_lossy(&b[1..]).into_owned(),
            }),
            _ => Err(EnvelopeError::BadAuth),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedCommand {
    pub session: SessionId,
    pub command_id: u64,
    pub command: CommandMessage,
    pub tag: [u8; TAG_LEN],
}

fn mac(key: &Key, session: SessionId, command_id: u64, body: &[u8]) -> Hmac<Sha256> {
    let mut m = <Hmac<Sha256> as KeyInit>::new_from_slice(key).expect("HMAC takes any key length");
    m.update(&session.0.to_be_bytes());
    m.update(&command_id.to_be_bytes());
    m.update(body);
    m
}

impl SignedCommand {
    pub fn sign(key: &Key, session: SessionId, command_id: u64, command: CommandMessage) -> Self {
        let full = mac(key, session, command_id, &command.encode()).finalize().into_bytes();
        let mut tag = [0u8; TAG_LEN];
        tag.copy_from_slice(&full[..TAG_LEN]);
        Self {
            session,
            command_id,
            command,
            tag,
        }
    }

    pub fn verify(&self, key: &Key) -> bool {
        mac(key, self.session, self.command_id, &self.command.encode())
            .verify_truncated_left(&self.tag)
            .is_ok()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(SIGNED_COMMAND_LEN);
        b.extend_from_slice(&self.session.0.to_be_bytes());
        b.extend_from_slice(&self.command_id.to_be_bytes());
        b.extend_from_slice(&self.command.encode());
        b.extend_from_slice(&self.tag);
        b
    }

    pub fn decode(b: &[u8], caps: &CommandCaps) -> Result<Self, EnvelopeError> {
        if b.len() != SIGNED_COMMAND_LEN {
            return Err(EnvelopeError::BadLength(b.len()));
        }
        let u = |i: usize| u64::from_be_bytes(b[i..i + 8].try_into().expect("8 bytes"));
        let mut tag = [0u8; TAG_LEN];
        tag.copy_from_slice(&b[16 + COMMAND_LEN..]);
        Ok(Self {
            session: SessionId(u(0)),
            command_id: u(8),
            command: CommandMessage::decode(&b[16..16 + COMMAND_LEN], caps)?,
            tag,
        })
    }
}

/// Operator-side view of an open session.
#[derive(Debug, Clone)]
pub struct ClientSession {
    pub id: SessionId,
    pub key: Key,
    pub expires_at: Micros,
    next_command_id: u64,
}

impl ClientSession {
    pub fn new(token: &[u8], id: SessionId, issued_at: Micros, expires_at: Micros) -> Self {
        Self {
            id,
            key: session_key(token, id, issued_at),
            expires_at,
            next_command_id: 1,
        }
    }

    pub fn sign(&mut self, cmd: CommandMessage) -> SignedCommand {
        let id = self.next_command_id;
        self.next_command_id += 1;
        SignedCommand::sign(&self.key, self.id, id, cmd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::command::Gait;

    #[test]
    fn sign_verify_and_tamper() {
        let mut s = ClientSession::new(b"tok", SessionId(9), 100, 200);
        let c = s.sign(CommandMessage::new(Gait::Walk, 1.0, 0.0, 0.0, 500));
        assert_eq!(c.command_id, 1);
        assert!(c.verify(&s.key));
        assert!(!c.verify(&session_key(b"other", SessionId(9), 100)));
        let mut bytes = c.encode();
        assert_eq!(bytes.len(), SIGNED_COMMAND_LEN);
        let back = SignedCommand::decode(&bytes, &CommandCaps::default()).unwrap();
        assert_eq!(back, c);
        bytes[9] ^= 1;
        let forged = SignedCommand::decode(&bytes, &CommandCaps::default()).unwrap();
        assert!(!forged.verify(&s.key));
    }

    #[test]
    fn auth_round_trip() {
        for m in [
            AuthMessage::Request { token: b"abc".to_vec() },
            AuthMessage::Granted {
                session: SessionId(3),
                issued_at: 4,
                expires_at: 5,
            },
            AuthMessage::Rejected { reason: "no".into() },
        ] {
            assert_eq!(AuthMessage::decode(&m.encode()).unwrap(), m);
        }
        assert_eq!(AuthMessage::decode(&[]), Err(EnvelopeError::BadAuth));
        assert_eq!(AuthMessage::decode(&[2, 0]), Err(EnvelopeError::BadAuth));
    }
}
