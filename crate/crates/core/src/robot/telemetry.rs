//! Telemetry records produced by the robot and platform sensors.
//!
//! Scalar records carry a small JSON object whose numeric fields are the
//! channels anomaly rules read (`pipe_temp_C`, `level_db`, ...). Image
//! records carry synthetic bytes of a sampled size.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::route::{Hotspot, World};
use super::RobotState;
use crate::metrics::experiment::PayloadModel;
use crate::netemu::clock::Micros;

pub const SCALAR_PAYLOAD_MAX: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TelemetryKind {
    Pose,
    Battery,
    Image,
    Thermal,
    Audio,
    Process,
}

impl TelemetryKind {
    pub const ALL: [TelemetryKind; 6] = [
        TelemetryKind::Pose,
        TelemetryKind::Battery,
        TelemetryKind::Image,
        TelemetryKind::Thermal,
        TelemetryKind::Audio,
        TelemetryKind::Process,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TelemetryKind::Pose => "pose",
            TelemetryKind::Battery => "battery",
            TelemetryKind::Image => "image",
            TelemetryKind::Thermal => "thermal",
            TelemetryKind::Audio => "audio",
            TelemetryKind::Process => "process",
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(c: u8) -> Option<Self> {
        Self::ALL.get(c as usize).copied()
    }
}

mod b64 {
    use base64::{engine::general_purpose::STANDARD, Engine};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        STANDARD.decode(s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub source: String,
    pub kind: TelemetryKind,
    pub timestamp_us: Micros,
    #[serde(with = "b64")]
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RecordError {
    #[error("record truncated")]
    Truncated,
    #[error("unknown telemetry kind {0}")]
    BadKind(u8),
    #[error("source is not UTF-8")]
    BadSource,
}

impl TelemetryRecord {
    pub fn payload_size(&self) -> usize {
        self.payload.len()
    }

    /// Numeric field `name` of a JSON payload.
    pub fn channel(&self, name: &str) -> Option<f64> {
        if self.kind == TelemetryKind::Image {
            return None;
        }
        let v: serde_json::Value = serde_json::from_slice(&self.payload).ok()?;
        v.get(name)?.as_f64()
    }

    /// Wire form inside a TELEMETRY frame: kind u8, timestamp u64,
    /// source length u16, source, payload.
    pub fn encode(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(11 + self.source.len() + self.payload.len());
        b.push(self.kind.code());
        b.extend_from_slice(&self.timestamp_us.to_be_bytes());
        b.extend_from_slice(&(self.source.len() as u16).to_be_bytes());
        b.extend_from_slice(self.source.as_bytes());
        b.extend_from_slice(&self.payload);
        b
    }

    pub fn decode(b: &[u8]) -> Result<Self, RecordError> {
        if b.len() < 11 {
            return Err(RecordError::Truncated);
        }
        let kind = TelemetryKind::from_code(b[0]).ok_or(RecordError::BadKind(b[0]))?;
        let timestamp_us = u64::from_be_bytes(b[1..9].try_into().expect("8 bytes"));
        let n = u16::from_be_bytes([b[9], b[10]]) as usize;
        let src = b.get(11..11 + n).ok_or(RecordError::Truncated)?;
        Ok(Self {
            source: std::str::from_utf8(src).map_err(|_| RecordError::BadSource)?.to_owned(),
            kind,
            timestamp_us,
            payload: b[11 + n..].to_vec(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TelemetryConfig {
    pub source: String,
    pub image: PayloadModel,
    pub ambient_temp_c: f64,
    pub temp_noise_c: f64,
    pub ambient_level_db: f64,
    pub level_noise_db: f64,
}

impl Default for TelemetryConfig {
    fn default() -> Self {
        Self {
            source: "robot".into(),
            image: PayloadModel::default(),
            ambient_temp_c: 25.0,
            temp_noise_c: 0.5,
            ambient_level_db: 55.0,
            level_noise_db: 2.0,
        }
    }
}

/// Highest hotspot temperature felt at (x, y), linear fall-off to ambient
/// at the hotspot radius.
pub fn felt_temperature(x: f64, y: f64, hotspots: &[Hotspot], ambient: f64) -> f64 {
    hotspots.iter().fold(ambient, |acc, h| {
        let d = (x - h.x).hypot(y - h.y);
        if d >= h.radius_m {
            acc
        } else {
            acc.max(ambient + (h.temp_c - ambient) * (1.0 - d / h.radius_m))
        }
    })
}

fn noise<R: Rng + ?Sized>(rng: &mut R, sd: f64) -> f64 {
    let z: f64 = Normal::new(0.0, 1.0).expect("unit normal").sample(rng);
    z * sd
}

fn round3(v: f64) -> f64 {
    (v * 1_000.0).round() / 1_000.0
}

/// Synthetic image bytes; cheap to produce, not meant to look like anything.
fn image_bytes(size: usize, salt: u64) -> Vec<u8> {
    let mut x = salt | 1;
    (0..size)
        .map(|_| {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            x as u8
        })
        .collect()
}

pub fn generate_telemetry<R: Rng + ?Sized>(
    state: &RobotState,
    kind: TelemetryKind,
    at: Micros,
    world: &World,
    cfg: &TelemetryConfig,
    rng: &mut R,
) -> TelemetryRecord {
    let scalar = |v: serde_json::Value| serde_json::to_vec(&v).expect("json");
    let payload = match kind {
        TelemetryKind::Image => {
            let size = cfg.image.sample(rng);
            image_bytes(size, rng.random())
        }
        TelemetryKind::Pose => scalar(serde_json::json!({
            "x": round3(state.x),
            "y": round3(state.y),
            "heading": round3(state.heading),
            "gait": state.gait.as_str(),
            "battery": round3(state.battery),
        })),
        TelemetryKind::Battery => scalar(serde_json::json!({
            "battery": round3(state.battery),
            "mode": state.mode,
        })),
        TelemetryKind::Thermal => {
            let t = felt_temperature(state.x, state.y, &world.hotspots, cfg.ambient_temp_c);
            scalar(serde_json::json!({ "pipe_temp_C": round3(t + noise(rng, cfg.temp_noise_c)) }))
        }
        TelemetryKind::Audio => scalar(serde_json::json!({
            "level_db": round3(cfg.ambient_level_db + noise(rng, cfg.level_noise_db)),
        })),
        TelemetryKind::Process => scalar(serde_json::json!({
            "pressure_bar": round3(12.0 + noise(rng, 0.2)),
            "flow_m3h": round3(340.0 + noise(rng, 5.0)),
        })),
    };
    debug_assert!(kind == TelemetryKind::Image || payload.len() <= SCALAR_PAYLOAD_MAX);
    TelemetryRecord {
        source: cfg.source.clone(),
        kind,
        timestamp_us: at,
        payload,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netemu::seed::stream;
    use crate::protocol::command::Gait;

    #[test]
    fn pose_schema_and_size() {
        let s = RobotState {
            x: -1234.5678,
            y: 9876.54321,
            heading: -3.14159,
            gait: Gait::Stairs,
            ..RobotState::default()
        };
        let r = generate_telemetry(&s, TelemetryKind::Pose, 7, &World::default(), &TelemetryConfig::default(), &mut stream(1, "t"));
        assert!(r.payload_size() <= SCALAR_PAYLOAD_MAX);
        let v: serde_json::Value = serde_json::from_slice(&r.payload).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(keys, ["battery", "gait", "heading", "x", "y"]);
        assert_eq!(r.channel("x"), Some(-1234.568));
        assert_eq!(r.timestamp_us, 7);
    }

    #[test]
    fn fixed_image_size() {
        let cfg = TelemetryConfig {
            image: PayloadModel::fixed(222_800),
            ..TelemetryConfig::default()
        };
        let mut rng = stream(3, "img");
        for _ in 0..5 {
            let r = generate_telemetry(&RobotState::default(), TelemetryKind::Image, 0, &World::default(), &cfg, &mut rng);
            assert_eq!(r.payload_size(), 222_800);
            assert_eq!(r.channel("x"), None);
        }
    }

    #[test]
    fn hotspot_heats_thermal_channel() {
        let world = World {
            obstacles: vec![],
            hotspots: vec![Hotspot {
                x: 0.0,
                y: 0.0,
                radius_m: 2.0,
                temp_c: 95.0,
            }],
        };
        let cfg = TelemetryConfig {
            temp_noise_c: 0.0,
            ..TelemetryConfig::default()
        };
        let mut rng = stream(0, "th");
        let r = generate_telemetry(&RobotState::default(), TelemetryKind::Thermal, 0, &world, &cfg, &mut rng);
        assert_eq!(r.channel("pipe_temp_C"), Some(95.0));
        let far = RobotState {
            x: 1.0,
            ..RobotState::default()
        };
        let r = generate_telemetry(&far, TelemetryKind::Thermal, 0, &world, &cfg, &mut rng);
        assert_eq!(r.channel("pipe_temp_C"), Some(60.0));
    }

    #[test]
    fn wire_and_json_round_trip() {
        let r = TelemetryRecord {
            source: "robot-1".into(),
            kind: TelemetryKind::Audio,
            timestamp_us: 42,
            payload: vec![0, 255, 7],
        };
        assert_eq!(TelemetryRecord::decode(&r.encode()).unwrap(), r);
        let j = serde_json::to_string(&r).unwrap();
        assert!(j.contains("\"AP8H\""));
        assert_eq!(serde_json::from_str::<TelemetryRecord>(&j).unwrap(), r);
        assert_eq!(TelemetryRecord::decode(&[1, 2]), Err(RecordError::Truncated));
        assert_eq!(TelemetryRecord::decode(&[9; 11]), Err(RecordError::BadKind(9)));
    }
}
