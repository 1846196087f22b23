//! Battery endurance, step traversal and route event order.

use ptxlink_core::protocol::command::{CommandMessage, Gait};
use ptxlink_core::robot::{
    apply_command, check_traversal, euler_step, follow_route, AbortReason, Capture, InspectionRoute, Mode, Obstacle, RobotConfig,
    RobotState, RouteEvent, Traversal, Waypoint, World, DT_S,
};

/// Seconds of walking on a full battery, integrated step by step.
fn endurance(gait: Gait, cfg: &RobotConfig) -> f64 {
    let mut s = RobotState {
        gait,
        ..RobotState::default()
    };
    let mut t = 0.0;
    while s.mode != Mode::Halted {
        s = euler_step(s, 0.5, 0.0, 0.0, DT_S, cfg);
        t += DT_S;
        assert!(t < 1e6);
    }
    t
}

#[test]
fn walk_endurance_is_nine_thousand_seconds() {
    let cfg = RobotConfig::default();
    let t = endurance(Gait::Walk, &cfg);
    assert!((t - 9_000.0).abs() <= 1.0, "{t}");
    // Closed form for the other gaits.
    for g in [Gait::Run, Gait::Stairs] {
        let want = 1.0 / (cfg.drain_per_s * cfg.drain_factor.get(g));
        let t = endurance(g, &cfg);
        assert!((t - want).abs() <= 1.0, "{g:?}: {t} vs {want}");
    }
}

#[test]
fn halted_robot_rejects_commands() {
    let cfg = RobotConfig::default();
    let s = RobotState {
        battery: 0.0,
        mode: Mode::Halted,
        ..RobotState::default()
    };
    assert!(apply_command(s, &CommandMessage::new(Gait::Walk, 0.5, 0.0, 0.0, 100), &cfg).is_err());
}

#[test]
fn command_moves_by_speed_times_duration() {
    let cfg = RobotConfig::default();
    let s = apply_command(RobotState::default(), &CommandMessage::new(Gait::Walk, 0.8, 0.0, 0.0, 1_000), &cfg).unwrap();
    assert!((s.x - 0.8).abs() < 1e-9 && s.y.abs() < 1e-12);
    // Clamped to the walk cap.
    let s = apply_command(RobotState::default(), &CommandMessage::new(Gait::Walk, 3.0, 4.0, 0.0, 1_000), &cfg).unwrap();
    assert!((s.x.hypot(s.y) - cfg.speed_cap.walk).abs() < 1e-9);
}

fn world_with_step(h: f64) -> World {
    World {
        obstacles: vec![Obstacle::step([2.0, -1.0], [2.5, 1.0], h)],
        hotspots: Vec::new(),
    }
}

fn straight() -> InspectionRoute {
    InspectionRoute::new(vec![Waypoint::at(5.0, 0.0)]).unwrap()
}

#[test]
fn twelve_centimetre_step_in_stairs_gait() {
    let cfg = RobotConfig::default();
    assert_eq!(check_traversal(&Obstacle::step([0.0; 2], [1.0; 2], 0.12), Gait::Stairs, &cfg), Traversal::Traversable);
    assert_eq!(check_traversal(&Obstacle::step([0.0; 2], [1.0; 2], 0.13), Gait::Stairs, &cfg), Traversal::Blocked);
    assert_eq!(check_traversal(&Obstacle::step([0.0; 2], [1.0; 2], 0.12), Gait::Walk, &cfg), Traversal::Blocked);

    let ok = follow_route(RobotState::default(), &straight(), &world_with_step(0.12), &cfg);
    assert_eq!(ok.aborted, None);
    assert!((ok.state.x - 5.0).abs() < 1e-6);

    let blocked = follow_route(RobotState::default(), &straight(), &world_with_step(0.13), &cfg);
    assert_eq!(blocked.aborted, Some(AbortReason::Blocked));
    assert!(blocked.state.x <= 2.0 + 1e-9, "stopped at the edge, x = {}", blocked.state.x);
    assert!(matches!(blocked.events[0], RouteEvent::Blocked { obstacle: 0, .. }));
}

fn survey() -> (InspectionRoute, World) {
    let mut w2 = Waypoint::at(4.0, 3.0);
    w2.dwell_s = 2.0;
    w2.capture = Some(Capture::ThermalStub);
    let mut w3 = Waypoint::at(0.0, 3.0);
    w3.capture = Some(Capture::Image);
    let route = InspectionRoute::new(vec![Waypoint::at(4.0, 0.0), w2, w3, Waypoint::at(0.0, 0.0)]).unwrap();
    (route, world_with_step(0.08))
}

fn time_of(e: &RouteEvent) -> u64 {
    match *e {
        RouteEvent::WaypointReached { t_us, .. }
        | RouteEvent::CaptureDone { t_us, .. }
        | RouteEvent::RouteComplete { t_us }
        | RouteEvent::Blocked { t_us, .. }
        | RouteEvent::RouteAborted { t_us, .. }
        | RouteEvent::RouteSuspended { t_us, .. } => t_us,
    }
}

#[test]
fn route_events_are_ordered_and_repeatable() {
    let cfg = RobotConfig::default();
    let (route, world) = survey();
    let first = follow_route(RobotState::default(), &route, &world, &cfg);
    for _ in 0..3 {
        assert_eq!(follow_route(RobotState::default(), &route, &world, &cfg), first);
    }
    let labels: Vec<String> = first
        .events
        .iter()
        .map(|e| match e {
            RouteEvent::WaypointReached { index, .. } => format!("reach {index}"),
            RouteEvent::CaptureDone { index, .. } => format!("capture {index}"),
            RouteEvent::RouteComplete { .. } => "complete".into(),
            other => panic!("unexpected {other:?}"),
        })
        .collect();
    assert_eq!(labels, ["reach 0", "reach 1", "capture 1", "reach 2", "capture 2", "reach 3", "complete"]);
    assert!(first.events.windows(2).all(|w| time_of(&w[0]) <= time_of(&w[1])));
    // Capture after the two second dwell.
    assert!(time_of(&first.events[2]) >= time_of(&first.events[1]) + 2_000_000);
}
