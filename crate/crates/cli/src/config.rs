//! Scenario files and flag overrides.
//!
//! ```json
//! {
//!   "mode": "experiment",
//!   "preset": "setup3",
//!   "network": "5g-sa",
//!   "deployment": "kubernetes",
//!   "samples": 1760,
//!   "seed": 42,
//!   "net_config": "profiles.json"
//! }
//! ```
//!
//! Paths are relative to the scenario file. `teleop` holds any
//! [`TeleopConfig`] fields; the `route`, `world`, `rules` and `registry`
//! files replace the matching inline values.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ptxlink_core::aggregation::AnomalyRule;
use ptxlink_core::jumphost::Registry;
use ptxlink_core::metrics::experiment::{ExperimentSpec, PayloadModel};
use ptxlink_core::netemu::config::{NetConfig, NetConfigFile};
use ptxlink_core::netemu::deployment::DeploymentKind;
use ptxlink_core::netemu::profiles;
use ptxlink_core::netemu::topology::SetupId;
use ptxlink_core::robot::{InspectionRoute, World};
use ptxlink_core::scenario::{RunConfig, TeleopConfig};

pub const SEED_ENV: &str = "PTXLINK_SEED";

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

impl ConfigError {
    fn file(what: &str, path: &Path, e: impl std::fmt::Display) -> Self {
        Self(format!("{what} file {}: {e}", path.display()))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Experiment,
    /// Scripted drive through the jump host on the virtual clock.
    Teleop,
    TeleopServe,
    Replay,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub mode: Mode,
    pub preset: Option<String>,
    pub network: Option<String>,
    pub deployment: Option<String>,
    pub samples: Option<usize>,
    pub payload: Option<PayloadModel>,
    pub seed: Option<u64>,
    pub net_config: Option<PathBuf>,
    pub route: Option<PathBuf>,
    pub world: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    pub registry: Option<PathBuf>,
    pub duration_s: Option<f64>,
    pub token: Option<String>,
    pub teleop: Option<serde_json::Value>,
    pub replay: Option<PathBuf>,
}

fn read(what: &str, path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|e| ConfigError::file(what, path, e))
}

impl ScenarioConfig {
    /// Load a scenario file; relative paths inside it are rebased on its
    /// directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let mut c: Self = serde_json::from_str(&read("scenario", path)?).map_err(|e| ConfigError::file("scenario", path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut c.net_config,
            &mut c.route,
            &mut c.world,
            &mut c.rules,
            &mut c.registry,
            &mut c.replay,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(c)
    }

    /// Seed from, in order: the explicit value, `PTXLINK_SEED`, the file.
    pub fn effective_seed(&self, flag: Option<u64>) -> Result<Option<u64>, ConfigError> {
        if flag.is_some() {
            return Ok(flag);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map(Some)
                .map_err(|_| ConfigError(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
            Err(_) => Ok(self.seed),
        }
    }

    fn preset(&self) -> Result<SetupId, ConfigError> {
        match &self.preset {
            Some(p) => p.parse().map_err(|e: ptxlink_core::netemu::NetemuError| ConfigError(e.to_string())),
            None => Ok(SetupId::Setup3),
        }
    }

    fn net_file(&self) -> Result<NetConfigFile, ConfigError> {
        let Some(p) = &self.net_config else { return Ok(NetConfigFile::default()) };
        let file: NetConfigFile = serde_json::from_str(&read("network config", p)?).map_err(|e| ConfigError::file("network config", p, e))?;
        NetConfig::from_file(file.clone()).map_err(|e| ConfigError::file("network config", p, e))?;
        Ok(file)
    }

    /// Everything needed to execute the scenario, checked up front.
    pub fn resolve(&self, seed: Option<u64>) -> Result<RunConfig, ConfigError> {
        match self.mode {
            Mode::Experiment => self.experiment(seed),
            Mode::Teleop | Mode::TeleopServe => Ok(RunConfig::Teleop {
                config: Box::new(self.teleop(seed)?),
            }),
            Mode::Replay => Err(ConfigError("replay mode takes a trace file, not a scenario".into())),
        }
    }

    fn experiment(&self, seed: Option<u64>) -> Result<RunConfig, ConfigError> {
        // Referenced files must exist and parse even when unused here.
        self.load_files(&mut TeleopConfig::default())?;
        self.preset()?;
        let seed = seed.ok_or_else(|| ConfigError(format!("experiment mode needs a seed (--seed, {SEED_ENV} or \"seed\")")))?;
        let network = self.network.as_deref().unwrap_or(profiles::NR_SA);
        let deployment: DeploymentKind = self
            .deployment
            .as_deref()
            .unwrap_or("orchestrated")
            .parse()
            .map_err(|e: ptxlink_core::netemu::NetemuError| ConfigError(e.to_string()))?;
        let samples = self.samples.unwrap_or(1_760);
        if samples == 0 {
            return Err(ConfigError("samples must be > 0".into()));
        }
        let mut spec = ExperimentSpec::new(network, deployment, samples, seed);
        if let Some(p) = &self.payload {
            spec.payload = p.clone();
        }
        let net = self.net_file()?;
        NetConfig::from_file(net.clone())
            .and_then(|c| c.profile(&spec.network))
            .map_err(|e| ConfigError(e.to_string()))?;
        Ok(RunConfig::Experiment { spec, net })
    }

    fn teleop(&self, seed: Option<u64>) -> Result<TeleopConfig, ConfigError> {
        let mut t: TeleopConfig = match &self.teleop {
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| ConfigError(format!("teleop: {e}")))?,
            None => TeleopConfig::default(),
        };
        if self.preset.is_some() {
            t.preset = self.preset()?;
        }
        if let Some(n) = &self.network {
            t.local_link = profiles::canonical_name(n);
        }
        if profiles::builtin(&t.local_link).is_none() {
            return Err(ConfigError(format!("unknown link profile `{}`", t.local_link)));
        }
        if let Some(s) = seed {
            t.seed = s;
        }
        if let Some(d) = self.duration_s {
            t.duration_s = d;
        }
        if let Some(tok) = &self.token {
            t.token = tok.clone();
        }
        self.load_files(&mut t)?;
        Ok(t)
    }

    fn load_files(&self, t: &mut TeleopConfig) -> Result<(), ConfigError> {
        if let Some(p) = &self.route {
            let r = InspectionRoute::from_json(&read("route", p)?).map_err(|e| ConfigError::file("route", p, e))?;
            t.route = Some(r);
        }
        if let Some(p) = &self.world {
            t.world = World::from_json(&read("world", p)?).map_err(|e| ConfigError::file("world", p, e))?;
        }
        if let Some(p) = &self.rules {
            t.rules = AnomalyRule::load_all(&read("rules", p)?).map_err(|e| ConfigError::file("rules", p, e))?;
        }
        if let Some(p) = &self.registry {
            t.registry = Some(Registry::from_json(&read("registry", p)?).map_err(|e| ConfigError::file("registry", p, e))?);
        }
        if let Some(r) = &t.route {
            r.validate().map_err(|e| ConfigError(format!("route: {e}")))?;
        }
        Ok(())
    }
}
