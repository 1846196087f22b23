//! Packet accounting and the two delivery ratios.

use serde::{Deserialize, Serialize};

use crate::netemu::clock::Micros;
use crate::netemu::link::DeliveryStatus;
use crate::netemu::trace::TraceRecord;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketAccounting {
    pub sent: u64,
    pub received_correct: u64,
    pub received_corrupted: u64,
    pub missing: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("no packets were sent")]
pub struct EmptyRun;

impl PacketAccounting {
    pub fn on_sent(&mut self) {
        self.sent += 1;
    }

    pub fn on_received(&mut self, crc_ok: bool) {
        if crc_ok {
            self.received_correct += 1;
        } else {
            self.received_corrupted += 1;
        }
    }

    /// Everything sent but not received by now is missing.
    pub fn close(&mut self) {
        self.missing = self.sent - self.received_correct - self.received_corrupted;
    }

    pub fn is_closed(&self) -> bool {
        self.sent == self.received_correct + self.received_corrupted + self.missing
    }

    pub fn merge(&mut self, other: &PacketAccounting) {
        self.sent += other.sent;
        self.received_correct += other.received_correct;
        self.received_corrupted += other.received_corrupted;
        self.missing += other.missing;
    }

    /// Recount from a raw trace closed at `close`.
    pub fn from_trace(trace: &[TraceRecord], close: Micros) -> Self {
        let mut a = Self::default();
        for r in trace {
            a.sent += 1;
            match r.status_at_close(close) {
                DeliveryStatus::Delivered => a.received_correct += 1,
                DeliveryStatus::Corrupted => a.received_corrupted += 1,
                DeliveryStatus::Lost => a.missing += 1,
            }
        }
        a
    }
}

/// Packet error rate: incorrectly or not received over sent.
pub fn compute_per(acct: &PacketAccounting) -> Result<f64, EmptyRun> {
    if acct.sent == 0 {
        return Err(EmptyRun);
    }
    Ok((acct.received_corrupted + acct.missing) as f64 / acct.sent as f64)
}

/// Packet delivery ratio: correctly received over sent.
pub fn compute_pdr(acct: &PacketAccounting) -> Result<f64, EmptyRun> {
    if acct.sent == 0 {
        return Err(EmptyRun);
    }
    Ok(acct.received_correct as f64 / acct.sent as f64)
}
