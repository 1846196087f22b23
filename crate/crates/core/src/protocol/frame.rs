//! The `PTX1` wire frame.
//!
//! ```text
//!  offset  size  field
//!       0     4  magic        50 54 58 31 ("PTX1")
//!       4     1  version      1
//!       5     1  msg_type     1=TELEMETRY 2=COMMAND 3=ACK 4=AUTH 5=METRIC
//!       6     2  flags        bit0 retransmission, bit1 end of message, bit2 reply
//!       8     4  seq
//!      12     8  timestamp_us send time
//!      20     4  payload_len
//!      24     n  payload
//!    24+n     4  crc32        IEEE, over header and payload
//! ```
//!
//! All integers are big-endian.

use serde::{Deserialize, Serialize};

pub const MAGIC: [u8; 4] = *b"PTX1";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 24;
pub const TRAILER_LEN: usize = 4;
pub const FRAME_OVERHEAD: usize = HEADER_LEN + TRAILER_LEN;
pub const MAX_PAYLOAD: usize = 16 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum MsgType {
    Telemetry = 1,
    Command = 2,
    Ack = 3,
    Auth = 4,
    Metric = 5,
}

impl MsgType {
    pub fn from_u8(b: u8) -> Option<Self> {
        Some(match b {
            1 => Self::Telemetry,
            2 => Self::Command,
            3 => Self::Ack,
            4 => Self::Auth,
            5 => Self::Metric,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Telemetry => "TELEMETRY",
            Self::Command => "COMMAND",
            Self::Ack => "ACK",
            Self::Auth => "AUTH",
            Self::Metric => "METRIC",
        }
    }
}

/// Frame flag bits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Flags(pub u16);

impl Flags {
    pub const RETRANSMISSION: u16 = 1 << 0;
    pub const END_OF_MESSAGE: u16 = 1 << 1;
    pub const REPLY: u16 = 1 << 2;

    pub fn has(self, bit: u16) -> bool {
        self.0 & bit != 0
    }

    pub fn with(self, bit: u16) -> Self {
        Flags(self.0 | bit)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: MsgType,
    pub flags: Flags,
    pub seq: u32,
    pub timestamp_us: u64,
    pub payload: Vec<u8>,
}

/// A frame as seen by a receiver. Frames failing the CRC are still handed
/// back so they can be counted as incorrectly received.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoded {
    pub frame: Frame,
    pub crc_failed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FrameError {
    #[error("payload of {0} bytes exceeds the 16 MiB limit")]
    PayloadTooLarge(usize),
    #[error("frame truncated: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported frame version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown message type {0}")]
    UnknownMsgType(u8),
    #[error("{0} trailing bytes after frame")]
    TrailingBytes(usize),
}

/// Encode one frame: header, payload, CRC trailer.
pub fn encode_frame(
    msg_type: MsgType,
    flags: Flags,
    seq: u32,
    timestamp_us: u64,
    payload: &[u8],
) -> Result<Vec<u8>, FrameError> {
    if payload.len() > MAX_PAYLOAD {
        return Err(FrameError::PayloadTooLarge(payload.len()));
    }
    let mut out = Vec::with_capacity(FRAME_OVERHEAD + payload.len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(msg_type as u8);
    out.extend_from_slice(&flags.0.to_be_bytes());
    out.extend_from_slice(&seq.to_be_bytes());
    out.extend_from_slice(&timestamp_us.to_be_bytes());
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(payload);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_be_bytes());
    Ok(out)
}

impl Frame {
    pub fn new(msg_type: MsgType, seq: u32, timestamp_us: u64, payload: Vec<u8>) -> Self {
        Self {
            msg_type,
            flags: Flags::default(),
            seq,
            timestamp_us,
            payload,
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>, FrameError> {
        encode_frame(self.msg_type, self.flags, self.seq, self.timestamp_us, &self.payload)
    }

    pub fn wire_len(&self) -> usize {
        FRAME_OVERHEAD + self.payload.len()
    }
}

/// Total frame length announced by a complete header, for stream readers.
pub fn frame_len(header: &[u8]) -> Result<usize, FrameError> {
    check_prefix(header)?;
    if header.len() < HEADER_LEN {
        return Err(FrameError::Truncated {
            needed: HEADER_LEN,
            have: header.len(),
        });
    }
    let plen = u32::from_be_bytes(header[20..24].try_into().expect("4 bytes")) as usize;
    if plen > MAX_PAYLOAD {
        return Err(FrameError::PayloadTooLarge(plen));
    }
    Ok(FRAME_OVERHEAD + plen)
}

fn check_prefix(bytes: &[u8]) -> Result<(), FrameError> {
    if bytes.len() < MAGIC.len() {
        return Err(FrameError::Truncated {
            needed: MAGIC.len(),
            have: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(FrameError::BadMagic(magic));
    }
    match bytes.get(4) {
        None => Err(FrameError::Truncated {
            needed: 5,
            have: bytes.len(),
        }),
        Some(&VERSION) => Ok(()),
        Some(&v) => Err(FrameError::UnsupportedVersion(v)),
    }
}

/// Decode exactly one frame.
pub fn decode_frame(bytes: &[u8]) -> Result<Decoded, FrameError> {
    let total = frame_len(bytes)?;
    if bytes.len() < total {
        return Err(FrameError::Truncated {
            needed: total,
            have: bytes.len(),
        });
    }
    if bytes.len() > total {
        return Err(FrameError::TrailingBytes(bytes.len() - total));
    }
    let msg_type = MsgType::from_u8(bytes[5]).ok_or(FrameError::UnknownMsgType(bytes[5]))?;
    let be16 = |i: usize| u16::from_be_bytes(bytes[i..i + 2].try_into().expect("2 bytes"));
    let be32 = |i: usize| u32::from_be_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let body = total - TRAILER_LEN;
    let crc_failed = crc32fast::hash(&bytes[..body]) != be32(body);
    Ok(Decoded {
        frame: Frame {
            msg_type,
            flags: Flags(be16(6)),
            seq: be32(8),
            timestamp_us: u64::from_be_bytes(bytes[12..20].try_into().expect("8 bytes")),
            payload: bytes[HEADER_LEN..body].to_vec(),
        },
        crc_failed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_ack_is_28_bytes() {
        let b = encode_frame(MsgType::Ack, Flags::default(), 0, 0, &[]).unwrap();
        assert_eq!(b.len(), 28);
        assert_eq!(&b[..4], &[0x50, 0x54, 0x58, 0x31]);
        assert_eq!(b[4], 1);
        assert_eq!(b[5], 3);
    }

    #[test]
    fn ten_zero_bytes_bad_magic() {
        assert_eq!(decode_frame(&[0u8; 10]), Err(FrameError::BadMagic([0; 4])));
    }

    #[test]
    fn short_payload_truncated() {
        let mut b = encode_frame(MsgType::Telemetry, Flags::default(), 1, 2, &[7u8; 100]).unwrap();
        b.truncate(HEADER_LEN + 50);
        assert!(matches!(decode_frame(&b), Err(FrameError::Truncated { .. })));
    }

    #[test]
    fn version_and_type_checked() {
        let mut b = encode_frame(MsgType::Metric, Flags::default(), 1, 2, b"x").unwrap();
        b[4] = 2;
        assert_eq!(decode_frame(&b), Err(FrameError::UnsupportedVersion(2)));
        b[4] = 1;
        b[5] = 9;
        assert_eq!(decode_frame(&b), Err(FrameError::UnknownMsgType(9)));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut b = encode_frame(MsgType::Metric, Flags::default(), 1, 2, b"x").unwrap();
        b.push(0);
        assert_eq!(decode_frame(&b), Err(FrameError::TrailingBytes(1)));
    }

    #[test]
    fn too_large() {
        let big = vec![0u8; MAX_PAYLOAD + 1];
        assert_eq!(
            encode_frame(MsgType::Telemetry, Flags::default(), 0, 0, &big),
            Err(FrameError::PayloadTooLarge(MAX_PAYLOAD + 1))
        );
    }

    #[test]
    fn payload_bit_flip_fails_crc() {
        let mut b = encode_frame(MsgType::Command, Flags::default(), 7, 1000, b"AB").unwrap();
        b[HEADER_LEN] ^= 0x01;
        let d = decode_frame(&b).unwrap();
        assert!(d.crc_failed);
        assert_eq!(d.frame.payload, b"@B");
    }

    fn arb_frame() -> impl Strategy<Value = Frame> {
        (
            prop::sample::select(vec![
                MsgType::Telemetry,
                MsgType::Command,
                MsgType::Ack,
                MsgType::Auth,
                MsgType::Metric,
            ]),
            any::<u16>(),
            any::<u32>(),
            any::<u64>(),
            prop::collection::vec(any::<u8>(), 0..512),
        )
            .prop_map(|(t, f, s, ts, p)| Frame {
                msg_type: t,
                flags: Flags(f),
                seq: s,
                timestamp_us: ts,
                payload: p,
            })
    }

    proptest! {
        #[test]
        fn round_trip(f in arb_frame()) {
            let d = decode_frame(&f.encode().unwrap()).unwrap();
            prop_assert!(!d.crc_failed);
            prop_assert_eq!(d.frame, f);
        }

        // Flips outside magic/version/type/length keep the frame parseable
        // and must trip the CRC.
        #[test]
        fn any_single_bit_flip_detected(f in arb_frame(), pick in any::<prop::sample::Index>(), bit in 0u8..8) {
            let mut b = f.encode().unwrap();
            let idx = pick.index(b.len());
            b[idx] ^= 1 << bit;
            match decode_frame(&b) {
                Ok(d) => prop_assert!(d.crc_failed, "flip at byte {} bit {} undetected", idx, bit),
                Err(_) => prop_assert!(idx < 6 || (20..24).contains(&idx)),
            }
        }
    }
}
