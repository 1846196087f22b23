//! Two aggregation streams forwarded over lossy links into one twin store.

use proptest::prelude::*;

use ptxlink_core::aggregation::forward::{ForwardConfig, Forwarder, TwinStore};
use ptxlink_core::netemu::link::LinkProfile;
use ptxlink_core::netemu::topology::{LinkMedium, NodeRole, Topology};
use ptxlink_core::protocol::net::{AppEvent, Network};
use ptxlink_core::robot::{TelemetryKind, TelemetryRecord};

fn record(source: &str, ts: u64, i: usize) -> TelemetryRecord {
    TelemetryRecord {
        source: source.into(),
        kind: TelemetryKind::Process,
        timestamp_us: ts,
        payload: format!("{{\"i\":{i}}}").into_bytes(),
    }
}

/// Expected twin view: stream `a` before stream `b`, then a stable sort by
/// timestamp.
fn oracle(a: &[TelemetryRecord], b: &[TelemetryRecord]) -> Vec<TelemetryRecord> {
    let mut all: Vec<TelemetryRecord> = a.iter().chain(b).cloned().collect();
    all.sort_by_key(|r| r.timestamp_us);
    all
}

fn run(seed: u64, loss: f64, a: &[TelemetryRecord], b: &[TelemetryRecord]) -> TwinStore {
    let mut t = Topology::empty(None);
    let ra = t.add_node("agg-a", NodeRole::Aggregation);
    let rb = t.add_node("agg-b", NodeRole::Aggregation);
    let cloud = t.add_node("cloud", NodeRole::ShoreCloud);
    let p = LinkProfile::deterministic("mw", 8.0).with_loss(loss, loss / 2.0);
    t.add_link(ra, cloud, LinkMedium::Microwave, p.clone());
    t.add_link(rb, cloud, LinkMedium::Satellite, p.scaled(3.0));
    let mut net = Network::new(t, seed);
    let cfg = ForwardConfig {
        batch_records: 7,
        batch_interval_us: 200_000,
        retry_after_us: 300_000,
        ack_timeout_us: 2_000_000,
        ..ForwardConfig::default()
    };
    let mut fwd = [
        Forwarder::new("agg-a", ra, cloud, cfg.clone(), 1 << 40),
        Forwarder::new("agg-b", rb, cloud, cfg, 2 << 40),
    ];
    let mut twin = TwinStore::new(cloud);
    let inputs = [a, b];
    let mut next = [0usize; 2];
    // Feed token i pushes the next record of source i every 30 ms.
    net.set_timer(0, 0).unwrap();
    net.set_timer(0, 1).unwrap();
    while let Some(ev) = net.next_event() {
        if let AppEvent::Timer { token, .. } = ev {
            if token < 2 {
                let i = token as usize;
                if let Some(r) = inputs[i].get(next[i]) {
                    fwd[i].push(&mut net, r.clone()).unwrap();
                    next[i] += 1;
                    net.set_timer_in(30_000, token);
                }
                continue;
            }
        }
        twin.on_event(&mut net, &ev).unwrap();
        for f in fwd.iter_mut() {
            f.on_event(&mut net, &ev).unwrap();
        }
        if next[0] == a.len() && next[1] == b.len() && fwd.iter().all(Forwarder::is_drained) {
            break;
        }
        assert!(net.now() < 3_600_000_000, "forwarding did not converge");
    }
    twin
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn merged_view_matches_oracle(
        seed in any::<u64>(),
        loss in 0.0f64..0.3,
        ta in prop::collection::vec(0u64..50, 0..40),
        tb in prop::collection::vec(0u64..50, 0..40),
    ) {
        // Coarse timestamps so the two streams tie often.
        let a: Vec<_> = ta.iter().enumerate().map(|(i, t)| record("robot-a", t * 10_000, i)).collect();
        let b: Vec<_> = tb.iter().enumerate().map(|(i, t)| record("robot-b", t * 10_000, i)).collect();
        let twin = run(seed, loss, &a, &b);
        prop_assert_eq!(twin.stream("agg-a"), a.as_slice());
        prop_assert_eq!(twin.stream("agg-b"), b.as_slice());
        prop_assert_eq!(twin.len(), a.len() + b.len());
        prop_assert_eq!(twin.merged(), oracle(&a, &b));
    }
}
