//! Batches of independent experiments. Each spec owns its seed streams, so
//! the parallel and sequential paths return identical reports in the same
//! order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::metrics::experiment::{ExperimentError, ExperimentSpec};
use crate::metrics::report::{run_experiment, Report};
use crate::netemu::config::NetConfig;
use crate::netemu::deployment::DeploymentKind;

fn one(spec: &ExperimentSpec, cfg: &NetConfig) -> Result<Report, ExperimentError> {
    run_experiment(spec, cfg).map(|(r, _)| r)
}

pub fn run_sequential(specs: &[ExperimentSpec], cfg: &NetConfig) -> Vec<Result<Report, ExperimentError>> {
    specs.iter().map(|s| one(s, cfg)).collect()
}

#[cfg(feature = "parallel")]
pub fn run_parallel(specs: &[ExperimentSpec], cfg: &NetConfig) -> Vec<Result<Report, ExperimentError>> {
    specs.par_iter().map(|s| one(s, cfg)).collect()
}

/// Parallel when built with `parallel`, sequential otherwise.
pub fn run_sweep(specs: &[ExperimentSpec], cfg: &NetConfig) -> Vec<Result<Report, ExperimentError>> {
    #[cfg(feature = "parallel")]
    {
        run_parallel(specs, cfg)
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_sequential(specs, cfg)
    }
}

/// Every (network, deployment) pair, `n` transfers each, with seeds
/// `seed`, `seed + 1`, ... in that order.
pub fn grid(networks: &[&str], deployments: &[DeploymentKind], n: usize, seed: u64) -> Vec<ExperimentSpec> {
    let mut out = Vec::new();
    for net in networks {
        for d in deployments {
            out.push(ExperimentSpec::new(net, *d, n, seed + out.len() as u64));
        }
    }
    out
}
