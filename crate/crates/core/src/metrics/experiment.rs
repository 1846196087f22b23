//! Request/response transfer measurements through the full simulated stack.
//!
//! One transfer: the client sends a payload to the server, the server
//! spends a processing time drawn from its deployment profile, then answers
//! with a short response. Transmission latency is the round trip minus that
//! processing time, i.e. upload plus download.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::packet::{compute_pdr, compute_per, PacketAccounting};
use super::stats::{summarize, BoxStats};
use crate::netemu::clock::{us_to_ms, Micros};
use crate::netemu::config::NetConfig;
use crate::netemu::deployment::{sample_processing, DeploymentKind, DeploymentProfile};
use crate::netemu::link::LinkProfile;
use crate::netemu::profiles::{self, DEFAULT_MTU, REFERENCE_REQUEST_BYTES, REFERENCE_RESPONSE_BYTES};
use crate::netemu::seed::{stream, SimRng};
use crate::netemu::topology::{NodeId, NodeRole, Topology};
use crate::protocol::frame::MsgType;
use crate::protocol::net::{AppEvent, MsgId, NetOptions, Network};

pub const MIN_PAYLOAD_BYTES: usize = 1_000;
/// Window for bulk transfer channels: large enough for a whole image.
pub const BULK_WINDOW: u16 = 256;

/// Request size distribution: normal around `mean_bytes`, truncated below
/// at 1 kB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PayloadModel {
    pub mean_bytes: usize,
    pub rel_sd: f64,
    pub response_bytes: usize,
}

impl Default for PayloadModel {
    fn default() -> Self {
        Self {
            mean_bytes: REFERENCE_REQUEST_BYTES,
            rel_sd: 0.10,
            response_bytes: REFERENCE_RESPONSE_BYTES,
        }
    }
}

impl PayloadModel {
    pub fn fixed(bytes: usize) -> Self {
        Self {
            mean_bytes: bytes,
            rel_sd: 0.0,
            ..Self::default()
        }
    }

    /// Always draws once from `rng`, so sizes do not shift later draws.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let z: f64 = Normal::new(0.0, 1.0).expect("unit normal").sample(rng);
        if self.rel_sd == 0.0 {
            return self.mean_bytes;
        }
        let v = self.mean_bytes as f64 * (1.0 + self.rel_sd * z);
        (v.round().max(MIN_PAYLOAD_BYTES as f64)) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub network: String,
    pub deployment: DeploymentKind,
    pub n: usize,
    #[serde(default)]
    pub payload: PayloadModel,
    pub seed: u64,
    #[serde(default = "default_mtu")]
    pub mtu: usize,
}

fn default_mtu() -> usize {
    DEFAULT_MTU
}

impl ExperimentSpec {
    pub fn new(network: &str, deployment: DeploymentKind, n: usize, seed: u64) -> Self {
        Self {
            network: profiles::canonical_name(network),
            deployment,
            n,
            payload: PayloadModel::default(),
            seed,
            mtu: DEFAULT_MTU,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    TransmissionLatencyMs,
    ProcessingMs,
    RttMs,
}

impl MetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::TransmissionLatencyMs => "transmission_latency_ms",
            Self::ProcessingMs => "processing_ms",
            Self::RttMs => "rtt_ms",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSample {
    pub run: u64,
    pub kind: MetricKind,
    pub network: String,
    pub deployment: String,
    pub payload_bytes: usize,
    pub value_ms: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(String),
}

impl From<crate::netemu::NetemuError> for ExperimentError {
    fn from(e: crate::netemu::NetemuError) -> Self {
        Self::Config(e.to_string())
    }
}

/// Raw output of an experiment before summarizing.
#[derive(Debug, Clone)]
pub struct RunData {
    pub samples: Vec<MetricSample>,
    pub accounting: PacketAccounting,
    pub dropped: usize,
    pub trace: Vec<crate::netemu::trace::TraceRecord>,
    pub uncalibrated: bool,
}

/// Client/server pair over `link`, as seen through the deployment's access
/// path.
pub fn transfer_topology(link: &LinkProfile, deployment: &DeploymentProfile) -> (Topology, NodeId, NodeId) {
    let t = Topology::pair(
        ("client", NodeRole::Robot),
        ("server", NodeRole::ShoreCloud),
        link.scaled(deployment.path_factor),
    );
    let (c, s) = (t.find("client").expect("client"), t.find("server").expect("server"));
    (t, c, s)
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    sent_at: Micros,
    bytes: usize,
    processing_us: Option<Micros>,
}

/// Drives sequential transfers from `client` to `server` on `net`.
pub struct TransferRunner<'a> {
    pub net: &'a mut Network,
    pub client: NodeId,
    pub server: NodeId,
    pub deployment: DeploymentProfile,
    pub payload: PayloadModel,
    pub proc_rng: SimRng,
    pub size_rng: SimRng,
}

/// One finished transfer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferResult {
    pub payload_bytes: usize,
    pub transmission_ms: f64,
    pub processing_ms: f64,
}

impl TransferRunner<'_> {
    fn start(&mut self, by_msg: &mut BTreeMap<MsgId, usize>, pending: &mut BTreeMap<usize, Pending>, i: usize) {
        let bytes = self.payload.sample(&mut self.size_rng);
        let body = vec![0xA5u8; bytes];
        let id = self
            .net
            .send(self.client, self.server, MsgType::Telemetry, &body)
            .expect("adjacent pair");
        by_msg.insert(id, i);
        pending.insert(
            i,
            Pending {
                sent_at: self.net.now(),
                bytes,
                processing_us: None,
            },
        );
    }

    /// Run `n` transfers back to back. Dropped transfers yield `None`.
    pub fn run(&mut self, n: usize) -> Vec<Option<TransferResult>> {
        let mut results = vec![None; n];
        let mut by_msg: BTreeMap<MsgId, usize> = BTreeMap::new();
        let mut pending: BTreeMap<usize, Pending> = BTreeMap::new();
        let mut next = 0usize;
        if n > 0 {
            self.start(&mut by_msg, &mut pending, 0);
            next = 1;
        }
        while let Some(ev) = self.net.next_event() {
            let mut finished = None;
            match ev {
                AppEvent::Delivered { msg, dest, at, .. } => {
                    let Some(&i) = by_msg.get(&msg) else { continue };
                    let Some(p) = pending.get_mut(&i) else { continue };
                    if dest == self.server {
                        let ms = sample_processing(&self.deployment, &mut self.proc_rng);
                        let us = (ms * 1_000.0).round() as Micros;
                        p.processing_us = Some(us);
                        self.net.set_timer_in(us, i as u64);
                    } else {
                        let proc_us = p.processing_us.expect("response follows processing");
                        let rtt = at - p.sent_at;
                        results[i] = Some(TransferResult {
                            payload_bytes: p.bytes,
                            transmission_ms: us_to_ms(rtt.saturating_sub(proc_us)),
                            processing_ms: us_to_ms(proc_us),
                        });
                        finished = Some(i);
                    }
                }
                AppEvent::Timer { token, .. } => {
                    let i = token as usize;
                    if pending.contains_key(&i) {
                        let body = vec![0x5Au8; self.payload.response_bytes];
                        let id = self
                            .net
                            .send(self.server, self.client, MsgType::Telemetry, &body)
                            .expect("adjacent pair");
                        by_msg.insert(id, i);
                    }
                }
                AppEvent::Failed { msg, .. } => {
                    if let Some(&i) = by_msg.get(&msg) {
                        if pending.contains_key(&i) {
                            finished = Some(i);
                        }
                    }
                }
                AppEvent::Acked { .. } => {}
            }
            if let Some(i) = finished {
                pending.remove(&i);
                if next < n {
                    self.start(&mut by_msg, &mut pending, next);
                    next += 1;
                }
            }
        }
        results
    }
}

/// Single transfer over an explicit link, returning
/// `(transmission_latency_ms, processing_ms)`, or `None` if it was dropped.
pub fn measure_transfer(
    link: &LinkProfile,
    deployment: &DeploymentProfile,
    payload_bytes: usize,
    seed: u64,
) -> Option<(f64, f64)> {
    let (topo, client, server) = transfer_topology(link, deployment);
    let mut net = Network::with_options(topo, seed, bulk_options(DEFAULT_MTU));
    let mut r = TransferRunner {
        net: &mut net,
        client,
        server,
        deployment: deployment.clone(),
        payload: PayloadModel::fixed(payload_bytes),
        proc_rng: stream(seed, "processing"),
        size_rng: stream(seed, "payload"),
    };
    r.run(1)[0].map(|t| (t.transmission_ms, t.processing_ms))
}

pub fn bulk_options(mtu: usize) -> NetOptions {
    NetOptions {
        mtu,
        window: BULK_WINDOW,
        ..NetOptions::default()
    }
}

/// Execute `spec.n` sequential transfers; raw samples and accounting.
pub fn run_experiment_raw(spec: &ExperimentSpec, cfg: &NetConfig) -> Result<RunData, ExperimentError> {
    if spec.n == 0 {
        return Err(ExperimentError::Config("n must be at least 1".into()));
    }
    if spec.payload.mean_bytes == 0 || !(spec.payload.rel_sd >= 0.0 && spec.payload.rel_sd.is_finite()) {
        return Err(ExperimentError::Config("payload model needs mean_bytes > 0 and rel_sd >= 0".into()));
    }
    if spec.mtu <= crate::protocol::frame::FRAME_OVERHEAD {
        return Err(ExperimentError::Config(format!("mtu {} too small", spec.mtu)));
    }
    let link = cfg.profile(&spec.network)?;
    let deployment = cfg.deployment(spec.deployment);
    let (topo, client, server) = transfer_topology(&link, &deployment);
    let mut net = Network::with_options(topo, spec.seed, bulk_options(spec.mtu));
    let results = TransferRunner {
        net: &mut net,
        client,
        server,
        deployment,
        payload: spec.payload,
        proc_rng: stream(spec.seed, "processing"),
        size_rng: stream(spec.seed, "payload"),
    }
    .run(spec.n);
    let accounting = net.close();
    let network = profiles::canonical_name(&spec.network);
    let deployment = spec.deployment.as_str().to_string();
    let mut samples = Vec::with_capacity(2 * spec.n);
    let mut dropped = 0;
    for (run, r) in results.iter().enumerate() {
        let Some(r) = r else {
            dropped += 1;
            continue;
        };
        for (kind, value_ms) in [
            (MetricKind::TransmissionLatencyMs, r.transmission_ms),
            (MetricKind::ProcessingMs, r.processing_ms),
        ] {
            samples.push(MetricSample {
                run: run as u64,
                kind,
                network: network.clone(),
                deployment: deployment.clone(),
                payload_bytes: r.payload_bytes,
                value_ms,
            });
        }
    }
    Ok(RunData {
        samples,
        accounting,
        dropped,
        trace: net.trace().to_vec(),
        uncalibrated: link.uncalibrated,
    })
}

pub fn values(samples: &[MetricSample], kind: MetricKind) -> Vec<f64> {
    samples.iter().filter(|s| s.kind == kind).map(|s| s.value_ms).collect()
}

/// Summaries per metric kind present in `samples`.
pub fn box_stats(samples: &[MetricSample]) -> BTreeMap<String, BoxStats> {
    let mut out = BTreeMap::new();
    for kind in [MetricKind::TransmissionLatencyMs, MetricKind::ProcessingMs, MetricKind::RttMs] {
        if let Ok(b) = summarize(&values(samples, kind)) {
            out.insert(kind.as_str().to_string(), b);
        }
    }
    out
}

pub fn ratios(acct: &PacketAccounting) -> (Option<f64>, Option<f64>) {
    (compute_per(acct).ok(), compute_pdr(acct).ok())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_link_additive() {
        let link = LinkProfile::deterministic("d", 35.0);
        let dep = DeploymentProfile {
            processing: crate::netemu::dist::ProcessingSpec::fixed(246.0),
            path_factor: 1.0,
            ..DeploymentProfile::builtin(DeploymentKind::Orchestrated)
        };
        assert_eq!(measure_transfer(&link, &dep, 222_800, 1), Some((70.0, 246.0)));
    }

    #[test]
    fn payload_model() {
        let mut rng = stream(1, "p");
        assert_eq!(PayloadModel::fixed(500).sample(&mut rng), 500);
        let m = PayloadModel {
            mean_bytes: 2_000,
            rel_sd: 5.0,
            response_bytes: 1,
        };
        assert!((0..1_000).all(|_| m.sample(&mut rng) >= MIN_PAYLOAD_BYTES));
    }

    #[test]
    fn zero_n_is_config_error() {
        let spec = ExperimentSpec::new("5g_sa", DeploymentKind::Orchestrated, 0, 1);
        assert!(matches!(
            run_experiment_raw(&spec, &NetConfig::builtin()),
            Err(ExperimentError::Config(_))
        ));
    }

    #[test]
    fn small_run_has_all_samples() {
        let spec = ExperimentSpec::new("5g_sa", DeploymentKind::Orchestrated, 20, 5);
        let d = run_experiment_raw(&spec, &NetConfig::builtin()).unwrap();
        assert_eq!(d.dropped, 0);
        assert_eq!(values(&d.samples, MetricKind::TransmissionLatencyMs).len(), 20);
        assert_eq!(d.accounting.received_correct, d.accounting.sent);
    }
}
