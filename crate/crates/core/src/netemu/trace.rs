//! Per-transmission delivery log and its JSON-lines export.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use super::clock::Micros;
use super::link::{DeliveryOutcome, DeliveryStatus};
use crate::protocol::frame::MsgType;

/// One frame handed to a link, with what happened to it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub link: u16,
    pub from: u16,
    pub to: u16,
    pub msg_type: MsgType,
    pub seq: u32,
    pub retransmission: bool,
    pub bytes: u32,
    #[serde(flatten)]
    pub outcome: DeliveryOutcome,
}

impl TraceRecord {
    /// Status once the run is closed at `close`: frames still in the air
    /// count as lost.
    pub fn status_at_close(&self, close: Micros) -> DeliveryStatus {
        match self.outcome.deliver_time {
            Some(t) if t <= close => self.outcome.status,
            _ => DeliveryStatus::Lost,
        }
    }
}

pub fn write_jsonl<W: Write>(mut w: W, records: &[TraceRecord]) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn to_jsonl(records: &[TraceRecord]) -> Vec<u8> {
    let mut out = Vec::with_capacity(records.len() * 160);
    write_jsonl(&mut out, records).expect("writing to a Vec cannot fail");
    out
}

pub fn read_jsonl<R: BufRead>(r: R) -> io::Result<Vec<TraceRecord>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip_and_layout() {
        let recs = vec![
            TraceRecord {
                link: 0,
                from: 0,
                to: 1,
                msg_type: MsgType::Telemetry,
                seq: 3,
                retransmission: false,
                bytes: 1400,
                outcome: DeliveryOutcome {
                    status: DeliveryStatus::Delivered,
                    send_time: 10,
                    deliver_time: Some(25),
                },
            },
            TraceRecord {
                link: 0,
                from: 1,
                to: 0,
                msg_type: MsgType::Ack,
                seq: 3,
                retransmission: false,
                bytes: 28,
                outcome: DeliveryOutcome {
                    status: DeliveryStatus::Lost,
                    send_time: 25,
                    deliver_time: None,
                },
            },
        ];
        let bytes = to_jsonl(&recs);
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with(r#"{"link":0,"from":0,"to":1,"msg_type":"telemetry","seq":3"#));
        assert_eq!(read_jsonl(&bytes[..]).unwrap(), recs);
        assert_eq!(recs[0].status_at_close(20), DeliveryStatus::Lost);
        assert_eq!(recs[0].status_at_close(25), DeliveryStatus::Delivered);
    }
}
