//! Hash-chained audit log.
//!
//! `digest(n) = SHA-256(digest(n-1) || body(n))` where `body` is the entry's
//! canonical JSON without the digest field and `digest(-1)` is all zeros.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::netemu::clock::Micros;

pub const UNAUTHENTICATED: &str = "unauthenticated";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditEvent {
    AuthOk,
    AuthFail,
    CmdForwarded,
    CmdRejected,
    SessionExpired,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditEntry {
    pub seq: u64,
    pub timestamp_us: Micros,
    /// Session id in hex, or `unauthenticated`.
    pub session: String,
    pub event: AuditEvent,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub principal: Option<String>,
    /// Session expiry, set on `auth_ok`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expires_at_us: Option<Micros>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command_id: Option<u64>,
    /// Id the command carries on the jump host to robot hop.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forward_id: Option<u64>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
    /// Hex SHA-256 chain value.
    pub digest: String,
}

/// Entry fields before sealing.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AuditFields {
    pub principal: Option<String>,
    pub expires_at_us: Option<Micros>,
    pub command_id: Option<u64>,
    pub forward_id: Option<u64>,
    pub detail: String,
}

fn body(e: &AuditEntry) -> Vec<u8> {
    let mut v = serde_json::to_value(e).expect("entry serializes");
    v.as_object_mut().expect("object").remove("digest");
    serde_json::to_vec(&v).expect("json")
}

fn chain(prev: &[u8; 32], e: &AuditEntry) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(prev);
    h.update(body(e));
    h.finalize().into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "seq")]
pub enum AuditVerdict {
    Intact,
    BrokenAt(u64),
}

/// Recompute the chain; the first entry whose seq or digest is off is the
/// breach.
pub fn verify_audit(entries: &[AuditEntry]) -> AuditVerdict {
    let mut prev = [0u8; 32];
    for (i, e) in entries.iter().enumerate() {
        let want = chain(&prev, e);
        let seq_ok = e.seq == i as u64;
        // Exact string match: hex case changes count as mutations too.
        if !seq_ok || e.digest != hex::encode(want) {
            return AuditVerdict::BrokenAt(i as u64);
        }
        prev = want;
    }
    AuditVerdict::Intact
}

#[derive(Debug, Clone, Default)]
pub struct AuditLog {
    entries: Vec<AuditEntry>,
    head: [u8; 32],
}

impl AuditLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[AuditEntry] {
        &self.entries
    }

    pub fn append(&mut self, at: Micros, session: String, event: AuditEvent, f: AuditFields) -> &AuditEntry {
        let mut e = AuditEntry {
            seq: self.entries.len() as u64,
            timestamp_us: at,
            session,
            event,
            principal: f.principal,
            expires_at_us: f.expires_at_us,
            command_id: f.command_id,
            forward_id: f.forward_id,
            detail: f.detail,
            digest: String::new(),
        };
        self.head = chain(&self.head, &e);
        e.digest = hex::encode(self.head);
        self.entries.push(e);
        self.entries.last().expect("pushed")
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            s.push_str(&serde_json::to_string(e).expect("json"));
            s.push('\n');
        }
        s
    }

    pub fn write_jsonl(&self, path: &Path) -> std::io::Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_jsonl().as_bytes())
    }
}

pub fn read_audit_jsonl(path: &Path) -> std::io::Result<Vec<AuditEntry>> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in f.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: u64) -> AuditLog {
        let mut log = AuditLog::new();
        for i in 0..n {
            let ev = [AuditEvent::AuthOk, AuditEvent::CmdForwarded, AuditEvent::CmdRejected][i as usize % 3];
            log.append(
                i * 1_000,
                format!("{:016x}", 7),
                ev,
                AuditFields {
                    command_id: Some(i),
                    detail: format!("entry {i}"),
                    ..AuditFields::default()
                },
            );
        }
        log
    }

    #[test]
    fn intact_and_empty() {
        assert_eq!(verify_audit(&[]), AuditVerdict::Intact);
        assert_eq!(verify_audit(sample(10).entries()), AuditVerdict::Intact);
    }

    #[test]
    fn mutated_entry_five() {
        let mut e = sample(10).entries().to_vec();
        e[5].detail = "entry 5 edited".into();
        assert_eq!(verify_audit(&e), AuditVerdict::BrokenAt(5));
    }

    #[test]
    fn removed_entry_detected() {
        let mut e = sample(10).entries().to_vec();
        e.remove(3);
        assert_eq!(verify_audit(&e), AuditVerdict::BrokenAt(3));
    }

    #[test]
    fn every_single_bit_flip_in_export_detected() {
        let text = sample(6).to_jsonl();
        let bytes = text.as_bytes();
        for i in 0..bytes.len() {
            if bytes[i] == b'\n' {
                continue;
            }
            for bit in 0..8 {
                let mut b = bytes.to_vec();
                b[i] ^= 1 << bit;
                let Ok(s) = String::from_utf8(b) else { continue };
                let parsed: Result<Vec<AuditEntry>, _> =
                    s.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect();
                // An unparsable export is itself a detected breach.
                if let Ok(entries) = parsed {
                    assert_ne!(verify_audit(&entries), AuditVerdict::Intact, "flip at byte {i} bit {bit}");
                }
            }
        }
    }
}
