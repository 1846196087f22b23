//! Built-in link profiles.
//!
//! The cellular profiles are calibrated against whole-file measurements: a
//! 222.8 kB upload followed by a short result download, with the median of
//! that request/response transfer (processing excluded) pinned to the field
//! value. The base delay is solved from the target so that
//! `per_byte * wire_bytes + median(base_up + base_down) = target`.
//!
//! Per-byte costs and dispersions are not measured values; they are chosen
//! to be plausible for each technology and can be overridden in config.
//! Backhaul and LAN profiles have no field measurement and are flagged
//! `uncalibrated`.

use super::dist::{lognormal_pair_sum_median, DelaySpec};
use super::link::LinkProfile;
use super::NetemuError;
use crate::protocol::frame::FRAME_OVERHEAD;

/// Mean image size used in the transfer measurements.
pub const REFERENCE_REQUEST_BYTES: usize = 222_800;
/// Size of the processing result sent back to the client.
pub const REFERENCE_RESPONSE_BYTES: usize = 64;
/// Largest frame on the wire, header and trailer included.
pub const DEFAULT_MTU: usize = 1_400;

pub const LTE: &str = "lte";
pub const NR_NSA: &str = "5g_nsa";
pub const NR_SA: &str = "5g_sa";
pub const MICROWAVE: &str = "microwave";
pub const SATELLITE: &str = "satellite";
pub const WIRED: &str = "wired";

pub const BUILTIN_NAMES: [&str; 6] = [LTE, NR_NSA, NR_SA, MICROWAVE, SATELLITE, WIRED];

/// Canonical profile name: lower case, `-` folded to `_`, a few aliases.
pub fn canonical_name(name: &str) -> String {
    let n = name.trim().to_ascii_lowercase().replace('-', "_");
    match n.as_str() {
        "4g" | "lte_wan" => LTE.into(),
        "nsa" | "5gnsa" => NR_NSA.into(),
        "sa" | "5gsa" | "5g_campus" => NR_SA.into(),
        "radio_relay" | "mw" => MICROWAVE.into(),
        "sat" => SATELLITE.into(),
        "lan" | "fiber" | "ethernet" => WIRED.into(),
        _ => n,
    }
}

/// Payload bytes carried per frame at a given MTU.
pub fn segment_payload(mtu: usize) -> usize {
    mtu.saturating_sub(FRAME_OVERHEAD).max(1)
}

/// Frames needed for a `payload`-byte message. Empty messages still take one.
pub fn segments(payload: usize, mtu: usize) -> usize {
    payload.div_ceil(segment_payload(mtu)).max(1)
}

/// Bytes on the wire for a segmented message.
pub fn wire_bytes(payload: usize, mtu: usize) -> usize {
    payload + segments(payload, mtu) * FRAME_OVERHEAD
}

/// Median request/response transfer time the built-in cellular profiles are
/// pinned to, in milliseconds.
pub fn transfer_median_target_ms(name: &str) -> Option<f64> {
    match canonical_name(name).as_str() {
        LTE => Some(150.0),
        NR_NSA => Some(240.0),
        NR_SA => Some(70.0),
        _ => None,
    }
}

/// Profile whose reference request/response transfer has median
/// `transfer_median_ms` at the given MTU.
pub fn calibrated(
    name: &str,
    transfer_median_ms: f64,
    iqr_ratio: f64,
    per_byte_us: f64,
    mtu: usize,
) -> Result<LinkProfile, NetemuError> {
    let wire = (wire_bytes(REFERENCE_REQUEST_BYTES, mtu) + wire_bytes(REFERENCE_RESPONSE_BYTES, mtu)) as f64;
    let spare_us = transfer_median_ms * 1_000.0 - per_byte_us * wire;
    if spare_us <= 0.0 {
        return Err(NetemuError::InvalidProfile {
            name: name.into(),
            reason: format!(
                "per_byte_us {per_byte_us} alone exceeds the {transfer_median_ms} ms transfer median"
            ),
        });
    }
    let sigma = DelaySpec::lognormal(1.0, iqr_ratio).log_sigma();
    let base = spare_us / lognormal_pair_sum_median(1.0, sigma);
    Ok(LinkProfile::new(name, DelaySpec::lognormal(base, iqr_ratio), per_byte_us))
}

/// Built-in profile by (canonicalised) name.
pub fn builtin(name: &str) -> Option<LinkProfile> {
    let name = canonical_name(name);
    let p = match name.as_str() {
        // ~32 Mbit/s uplink on a loaded WAN.
        LTE => calibrated(LTE, 150.0, 0.30, 0.25, DEFAULT_MTU).ok()?,
        // ~23 Mbit/s; the measured NSA WAN was slower than LTE.
        NR_NSA => calibrated(NR_NSA, 240.0, 0.30, 0.35, DEFAULT_MTU).ok()?,
        // ~100 Mbit/s campus uplink.
        NR_SA => calibrated(NR_SA, 70.0, 0.20, 0.08, DEFAULT_MTU).ok()?,
        MICROWAVE => uncalibrated(MICROWAVE, 5.0, 0.10, 0.008),
        SATELLITE => uncalibrated(SATELLITE, 270.0, 0.05, 0.4),
        WIRED => uncalibrated(WIRED, 0.2, 0.10, 0.000_8),
        _ => return None,
    };
    Some(p)
}

fn uncalibrated(name: &str, base_ms: f64, iqr_ratio: f64, per_byte_us: f64) -> LinkProfile {
    let mut p = LinkProfile::new(name, DelaySpec::lognormal(base_ms * 1_000.0, iqr_ratio), per_byte_us);
    p.uncalibrated = true;
    p
}
