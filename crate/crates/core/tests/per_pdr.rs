//! Running packet accounting against a recount of the raw trace.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ptxlink_core::metrics::experiment::{run_experiment_raw, ExperimentSpec};
use ptxlink_core::metrics::packet::{compute_pdr, compute_per, PacketAccounting};
use ptxlink_core::netemu::config::NetConfig;
use ptxlink_core::netemu::link::{DeliveryStatus, LinkProfile};
use ptxlink_core::netemu::topology::{NodeRole, Topology};
use ptxlink_core::netemu::trace::TraceRecord;
use ptxlink_core::netemu::DeploymentKind;
use ptxlink_core::protocol::arq::ArqConfig;
use ptxlink_core::protocol::frame::MsgType;
use ptxlink_core::protocol::net::Network;
use ptxlink_core::scenario::{run_teleop, TeleopConfig};

#[derive(Debug, Default, PartialEq, Eq)]
struct Counts {
    sent: u64,
    ok: u64,
    corrupted: u64,
    missing: u64,
}

/// Every record is one frame on the wire; it counts as received only if it
/// landed by `close`.
fn recount(trace: &[TraceRecord], close: u64) -> Counts {
    let mut c = Counts::default();
    for r in trace {
        c.sent += 1;
        let landed = matches!(r.outcome.deliver_time, Some(t) if t <= close);
        match (landed, r.outcome.status) {
            (true, DeliveryStatus::Delivered) => c.ok += 1,
            (true, DeliveryStatus::Corrupted) => c.corrupted += 1,
            _ => c.missing += 1,
        }
    }
    c
}

fn check(name: &str, acct: PacketAccounting, trace: &[TraceRecord], close: u64) -> Counts {
    let want = recount(trace, close);
    let got = Counts {
        sent: acct.sent,
        ok: acct.received_correct,
        corrupted: acct.received_corrupted,
        missing: acct.missing,
    };
    assert_eq!(got, want, "{name}");
    assert!(acct.sent > 0, "{name}");
    assert_eq!(acct.received_correct + acct.received_corrupted + acct.missing, acct.sent, "{name}");
    let (per, pdr) = (compute_per(&acct).unwrap(), compute_pdr(&acct).unwrap());
    assert_eq!(per, (want.corrupted + want.missing) as f64 / want.sent as f64, "{name}");
    assert_eq!(pdr, want.ok as f64 / want.sent as f64, "{name}");
    assert!((per + pdr - 1.0).abs() < 1e-12, "{name}: {per} + {pdr}");
    want
}

/// Random point-to-point run, stopped either after draining or part way.
fn pair_run(seed: u64) -> Counts {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let profile = LinkProfile::deterministic("p", rng.random_range(1.0..40.0))
        .with_loss(rng.random_range(0.0..0.3), rng.random_range(0.0..0.15));
    let t = Topology::pair(("a", NodeRole::Robot), ("b", NodeRole::Aggregation), profile);
    let (a, b) = (t.find("a").unwrap(), t.find("b").unwrap());
    let mut net = Network::new(t, seed);
    net.set_arq(a, b, ArqConfig::fixed(rng.random_range(50_000..200_000), rng.random_range(0..6)).with_window(rng.random_range(1..5)))
        .unwrap();
    for _ in 0..rng.random_range(5..40) {
        let len = rng.random_range(1..5_000);
        net.send(a, b, MsgType::Telemetry, &vec![7u8; len]).unwrap();
    }
    let close = if rng.random_bool(0.5) {
        while net.next_event().is_some() {}
        net.now()
    } else {
        let limit = rng.random_range(10_000..400_000);
        while net.next_event_until(limit).is_some() {}
        limit
    };
    let acct = net.close();
    check(&format!("pair seed {seed}"), acct, net.trace(), close)
}

#[test]
fn twenty_seeded_configurations() {
    // 14 point-to-point runs with random loss, 3 transfer experiments and 3
    // full teleoperation runs.
    let (mut corrupted, mut missing) = (0, 0);
    for seed in 0..14 {
        let c = pair_run(1_000 + seed);
        corrupted += c.corrupted;
        missing += c.missing;
    }
    // The draws must actually exercise both failure kinds.
    assert!(corrupted > 0 && missing > 0, "{corrupted} {missing}");
    let cfg = NetConfig::builtin();
    for (seed, net) in [(1u64, "lte"), (2, "5g_nsa"), (3, "5g_sa")] {
        let spec = ExperimentSpec::new(net, DeploymentKind::Orchestrated, 40, seed);
        let d = run_experiment_raw(&spec, &cfg).unwrap();
        let close = d.trace.iter().filter_map(|r| r.outcome.deliver_time).max().unwrap();
        check(&format!("experiment {net}"), d.accounting, &d.trace, close);
    }
    for seed in [4u64, 5, 6] {
        let (r, sim) = run_teleop(TeleopConfig {
            seed,
            duration_s: 5.0,
            ..TeleopConfig::default()
        })
        .unwrap();
        check(&format!("teleop seed {seed}"), r.accounting, sim.trace(), sim.now());
    }
}
