//! Thresholds enforced by `run --ci`.

use serde::Serialize;

use ptxlink_core::jumphost::AuditVerdict;
use ptxlink_core::metrics::Report;
use ptxlink_core::netemu::deployment::DeploymentKind;
use ptxlink_core::netemu::profiles;
use ptxlink_core::scenario::TeleopReport;

pub const MEDIAN_TOLERANCE: f64 = 0.05;
pub const PROCESSING_BAND_MS: (f64, f64) = (244.0, 248.0);
pub const TELEOP_BAND_MS: (f64, f64) = (70.0, 130.0);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            pass,
            detail,
        }
    }
}

/// Median transfer time the profile/deployment pair is calibrated to.
pub fn median_target_ms(network: &str, deployment: DeploymentKind) -> Option<f64> {
    let net = profiles::canonical_name(network);
    if net == profiles::NR_NSA {
        return Some(match deployment {
            DeploymentKind::Function => 230.0,
            DeploymentKind::Container => 310.0,
            DeploymentKind::Orchestrated => 240.0,
        });
    }
    match deployment {
        DeploymentKind::Orchestrated => profiles::transfer_median_target_ms(&net),
        _ => None,
    }
}

pub fn experiment_checks(r: &Report) -> Vec<Check> {
    let mut out = Vec::new();
    let lat = r.stats("transmission_latency_ms");
    if let (Some(target), Some(s)) = (median_target_ms(&r.spec.network, r.spec.deployment), lat) {
        let err = (s.median - target).abs() / target;
        out.push(Check::new(
            "transfer_median",
            err <= MEDIAN_TOLERANCE,
            format!("median {:.1} ms vs {target} ms ({:+.1}%)", s.median, 100.0 * (s.median - target) / target),
        ));
    }
    if let Some(p) = r.stats("processing_ms") {
        let (lo, hi) = PROCESSING_BAND_MS;
        out.push(Check::new(
            "processing_mean",
            (lo..=hi).contains(&p.mean),
            format!("mean {:.2} ms, band [{lo}, {hi}]", p.mean),
        ));
    }
    out.push(per_pdr(r.per, r.pdr));
    out
}

fn per_pdr(per: Option<f64>, pdr: Option<f64>) -> Check {
    match (per, pdr) {
        (Some(a), Some(b)) => Check::new("per_plus_pdr", (a + b - 1.0).abs() < 1e-12, format!("PER {a:.6} + PDR {b:.6}")),
        _ => Check::new("per_plus_pdr", false, "no frames sent".into()),
    }
}

pub fn teleop_checks(r: &TeleopReport) -> Vec<Check> {
    let (lo, hi) = TELEOP_BAND_MS;
    let mean = r.rtt_mean_ms;
    vec![
        Check::new(
            "command_ack_mean",
            mean.is_some_and(|m| (lo..=hi).contains(&m)),
            match mean {
                Some(m) => format!("mean {m:.1} ms over {} commands, band [{lo}, {hi}]", r.commands_accepted),
                None => "no accepted commands".into(),
            },
        ),
        Check::new(
            "all_commands_answered",
            r.commands_unanswered == 0,
            format!("{} unanswered of {}", r.commands_unanswered, r.commands_sent),
        ),
        Check::new("audit_chain", r.audit == AuditVerdict::Intact, format!("{:?}", r.audit)),
        Check::new("zero_bypass", r.bypass.is_empty(), format!("{} violations", r.bypass.len())),
        per_pdr(r.per, r.pdr),
    ]
}

pub fn print_checks(checks: &[Check]) {
    for c in checks {
        println!("{} {:<22} {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn targets() {
        assert_eq!(median_target_ms("5g-sa", DeploymentKind::Orchestrated), Some(70.0));
        assert_eq!(median_target_ms("5g_nsa", DeploymentKind::Container), Some(310.0));
        assert_eq!(median_target_ms("lte", DeploymentKind::Function), None);
        assert_eq!(median_target_ms("satellite", DeploymentKind::Orchestrated), None);
    }
}
