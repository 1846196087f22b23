//! Human-editable JSON configuration for profiles, deployments and topology.
//!
//! ```json
//! {
//!   "profiles": {
//!     "5g_sa": { "transfer_median_ms": 70, "iqr_ratio": 0.2, "per_byte_us": 0.08 },
//!     "lossy": { "median_ms": 20, "iqr_ratio": 0.3, "per_byte_us": 0.1, "loss_prob": 0.05 }
//!   },
//!   "deployments": { "function": { "mean_ms": 245, "sd_ms": 8, "path_factor": 0.96 } },
//!   "topology": { "preset": "setup3" }
//! }
//! ```
//!
//! `median_ms` is the one-way base delay. `transfer_median_ms` instead gives
//! the median of the reference request/response transfer and the base delay
//! is solved from it. Entries overlay the built-in defaults.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::deployment::{DeploymentKind, DeploymentProfile};
use super::dist::{DelayFamily, DelaySpec, ProcessingSpec};
use super::link::LinkProfile;
use super::profiles::{self, DEFAULT_MTU};
use super::topology::{build_topology_with, LinkMedium, NodeRole, PresetOptions, SetupId, Topology};
use super::NetemuError;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfigFile {
    #[serde(default)]
    pub profiles: BTreeMap<String, ProfileEntry>,
    #[serde(default)]
    pub deployments: BTreeMap<String, DeploymentEntry>,
    #[serde(default)]
    pub topology: Option<TopologyEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileEntry {
    #[serde(default)]
    pub median_ms: Option<f64>,
    #[serde(default)]
    pub transfer_median_ms: Option<f64>,
    pub iqr_ratio: f64,
    #[serde(default)]
    pub per_byte_us: f64,
    #[serde(default)]
    pub loss_prob: f64,
    #[serde(default)]
    pub corrupt_prob: f64,
    #[serde(default)]
    pub uncalibrated: Option<bool>,
    #[serde(default)]
    pub family: DelayFamily,
    #[serde(default)]
    pub jitter_seed_domain: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeploymentEntry {
    pub mean_ms: f64,
    #[serde(default)]
    pub sd_ms: f64,
    #[serde(default)]
    pub path_factor: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TopologyEntry {
    Preset {
        preset: String,
        #[serde(default)]
        turbines: Option<usize>,
    },
    Custom {
        nodes: Vec<NodeEntry>,
        links: Vec<LinkEntry>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeEntry {
    pub name: String,
    pub role: NodeRole,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkEntry {
    pub a: String,
    pub b: String,
    pub profile: String,
    #[serde(default)]
    pub medium: Option<LinkMedium>,
}

/// Resolved configuration.
#[derive(Debug, Clone)]
pub struct NetConfig {
    pub profiles: BTreeMap<String, LinkProfile>,
    pub deployments: BTreeMap<DeploymentKind, DeploymentProfile>,
    pub topology: Option<TopologyEntry>,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self::builtin()
    }
}

impl NetConfig {
    pub fn builtin() -> Self {
        let profiles = profiles::BUILTIN_NAMES
            .iter()
            .map(|n| (n.to_string(), profiles::builtin(n).expect("builtin")))
            .collect();
        let deployments = DeploymentKind::ALL
            .iter()
            .map(|k| (*k, DeploymentProfile::builtin(*k)))
            .collect();
        Self {
            profiles,
            deployments,
            topology: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, NetemuError> {
        let file: NetConfigFile =
            serde_json::from_str(text).map_err(|e| NetemuError::Config(e.to_string()))?;
        Self::from_file(file)
    }

    pub fn load(path: &Path) -> Result<Self, NetemuError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| NetemuError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_file(file: NetConfigFile) -> Result<Self, NetemuError> {
        let mut cfg = Self::builtin();
        for (name, e) in file.profiles {
            let name = profiles::canonical_name(&name);
            let p = e.resolve(&name)?;
            p.validate()?;
            cfg.profiles.insert(name, p);
        }
        for (name, e) in file.deployments {
            let kind: DeploymentKind = name.parse()?;
            let base = DeploymentProfile::builtin(kind);
            let d = DeploymentProfile {
                kind,
                processing: ProcessingSpec {
                    mean_ms: e.mean_ms,
                    sd_ms: e.sd_ms,
                },
                path_factor: e.path_factor.unwrap_or(base.path_factor),
            };
            d.validate()?;
            cfg.deployments.insert(kind, d);
        }
        cfg.topology = file.topology;
        Ok(cfg)
    }

    pub fn profile(&self, name: &str) -> Result<LinkProfile, NetemuError> {
        self.profiles
            .get(&profiles::canonical_name(name))
            .cloned()
            .ok_or_else(|| NetemuError::UnknownProfile(name.to_string()))
    }

    pub fn deployment(&self, kind: DeploymentKind) -> DeploymentProfile {
        self.deployments
            .get(&kind)
            .cloned()
            .unwrap_or_else(|| DeploymentProfile::builtin(kind))
    }

    fn preset_options(&self, turbines: Option<usize>) -> Result<PresetOptions, NetemuError> {
        Ok(PresetOptions {
            turbines: turbines.unwrap_or(3),
            campus: self.profile(profiles::NR_SA)?,
            lan: self.profile(profiles::WIRED)?,
            microwave: self.profile(profiles::MICROWAVE)?,
            satellite: self.profile(profiles::SATELLITE)?,
        })
    }

    /// Preset from `preset` (or the config's own topology entry) built from
    /// this config's profiles.
    pub fn build_topology(&self, preset: Option<SetupId>) -> Result<Topology, NetemuError> {
        match (preset, &self.topology) {
            (Some(p), Some(TopologyEntry::Preset { turbines, .. })) => {
                build_topology_with(p, &self.preset_options(*turbines)?)
            }
            (Some(p), _) => build_topology_with(p, &self.preset_options(None)?),
            (None, Some(TopologyEntry::Preset { preset, turbines })) => {
                build_topology_with(preset.parse()?, &self.preset_options(*turbines)?)
            }
            (None, Some(TopologyEntry::Custom { nodes, links })) => self.custom(nodes, links),
            (None, None) => build_topology_with(SetupId::Setup3, &self.preset_options(None)?),
        }
    }

    fn custom(&self, nodes: &[NodeEntry], links: &[LinkEntry]) -> Result<Topology, NetemuError> {
        let mut t = Topology::empty(None);
        for n in nodes {
            if t.find(&n.name).is_some() {
                return Err(NetemuError::InvalidTopology(format!("duplicate node `{}`", n.name)));
            }
            t.add_node(&n.name, n.role);
        }
        for l in links {
            let end = |name: &str| {
                t.find(name)
                    .ok_or_else(|| NetemuError::InvalidTopology(format!("unknown node `{name}`")))
            };
            let (a, b) = (end(&l.a)?, end(&l.b)?);
            let profile = self.profile(&l.profile)?;
            let medium = l.medium.unwrap_or_else(|| LinkMedium::for_profile(&profile.name));
            t.add_link(a, b, medium, profile);
        }
        t.validate()?;
        Ok(t)
    }
}

impl ProfileEntry {
    fn resolve(&self, name: &str) -> Result<LinkProfile, NetemuError> {
        let mut p = match (self.median_ms, self.transfer_median_ms) {
            (Some(m), None) => LinkProfile::new(
                name,
                DelaySpec {
                    median_us: m * 1_000.0,
                    iqr_ratio: self.iqr_ratio,
                    family: self.family,
                },
                self.per_byte_us,
            ),
            (None, Some(t)) => {
                let mut p = profiles::calibrated(name, t, self.iqr_ratio, self.per_byte_us, DEFAULT_MTU)?;
                p.base_delay.family = self.family;
                p
            }
            _ => {
                return Err(NetemuError::InvalidProfile {
                    name: name.into(),
                    reason: "give exactly one of median_ms or transfer_median_ms".into(),
                })
            }
        };
        p.loss_prob = self.loss_prob;
        p.corrupt_prob = self.corrupt_prob;
        p.uncalibrated = self
            .uncalibrated
            .unwrap_or_else(|| profiles::transfer_median_target_ms(name).is_none());
        if let Some(d) = &self.jitter_seed_domain {
            p.jitter_seed_domain = d.clone();
        }
        Ok(p)
    }
}
