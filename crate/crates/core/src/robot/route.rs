//! Waypoint routes over a world of box-shaped obstacles.
//!
//! The robot walks straight between waypoints. Obstacles too high for the
//! walking gait but within the stair gait's limit are crossed in stair gait;
//! anything higher stops the robot at the obstacle's edge and aborts the
//! route (no replanning).

use serde::{Deserialize, Serialize};

use super::{check_traversal, drain_battery, Mode, RobotConfig, RobotState, Traversal};
use crate::protocol::command::Gait;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capture {
    Image,
    ThermalStub,
    AudioStub,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub dwell_s: f64,
    #[serde(default)]
    pub capture: Option<Capture>,
}

impl Waypoint {
    pub fn at(x: f64, y: f64) -> Self {
        Self {
            x,
            y,
            dwell_s: 0.0,
            capture: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InspectionRoute {
    pub waypoints: Vec<Waypoint>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RouteError {
    #[error("route has no waypoints")]
    Empty,
    #[error("waypoints {0} and {1} coincide")]
    Duplicate(usize, usize),
    #[error("waypoint {0} has a non-finite coordinate or negative dwell")]
    BadWaypoint(usize),
    #[error("obstacle {0}: {1}")]
    BadObstacle(usize, String),
}

impl InspectionRoute {
    pub fn new(waypoints: Vec<Waypoint>) -> Result<Self, RouteError> {
        let r = Self { waypoints };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), RouteError> {
        if self.waypoints.is_empty() {
            return Err(RouteError::Empty);
        }
        for (i, w) in self.waypoints.iter().enumerate() {
            if !(w.x.is_finite() && w.y.is_finite() && w.dwell_s.is_finite() && w.dwell_s >= 0.0) {
                return Err(RouteError::BadWaypoint(i));
            }
        }
        for (i, pair) in self.waypoints.windows(2).enumerate() {
            if pair[0].x == pair[1].x && pair[0].y == pair[1].y {
                return Err(RouteError::Duplicate(i, i + 1));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let r: Self = serde_json::from_str(text).map_err(|e| e.to_string())?;
        r.validate().map_err(|e| e.to_string())?;
        Ok(r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObstacleKind {
    Step,
    Clutter,
}

/// Axis-aligned footprint `[min, max]` with a height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    pub min: [f64; 2],
    pub max: [f64; 2],
    pub height: f64,
    pub kind: ObstacleKind,
}

impl Obstacle {
    pub fn step(min: [f64; 2], max: [f64; 2], height: f64) -> Self {
        Self {
            min,
            max,
            height,
            kind: ObstacleKind::Step,
        }
    }

    /// Entry parameter in `[0, 1]` of segment `a → b` into the footprint.
    pub fn entry(&self, a: (f64, f64), b: (f64, f64)) -> Option<f64> {
        let (mut t0, mut t1) = (0.0f64, 1.0f64);
        for (p, d, lo, hi) in [
            (a.0, b.0 - a.0, self.min[0], self.max[0]),
            (a.1, b.1 - a.1, self.min[1], self.max[1]),
        ] {
            if d == 0.0 {
                if p < lo || p > hi {
                    return None;
                }
            } else {
                let (mut u, mut v) = ((lo - p) / d, (hi - p) / d);
                if u > v {
                    std::mem::swap(&mut u, &mut v);
                }
                t0 = t0.max(u);
                t1 = t1.min(v);
                if t0 > t1 {
                    return None;
                }
            }
        }
        Some(t0)
    }
}

/// Heat source seen by the thermal stub.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hotspot {
    pub x: f64,
    pub y: f64,
    pub radius_m: f64,
    pub temp_c: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct World {
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    #[serde(default)]
    pub hotspots: Vec<Hotspot>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum WorldFile {
    List(Vec<Obstacle>),
    Full(World),
}

impl World {
    /// Accepts a bare obstacle list or `{obstacles, hotspots}`.
    pub fn from_json(text: &str) -> Result<Self, String> {
        let w = match serde_json::from_str::<WorldFile>(text).map_err(|e| e.to_string())? {
            WorldFile::List(obstacles) => World {
                obstacles,
                hotspots: Vec::new(),
            },
            WorldFile::Full(w) => w,
        };
        w.validate().map_err(|e| e.to_string())?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), RouteError> {
        for (i, o) in self.obstacles.iter().enumerate() {
            if !(o.height >= 0.0 && o.height.is_finite()) {
                return Err(RouteError::BadObstacle(i, "height must be >= 0".into()));
            }
            if !(o.min[0] <= o.max[0] && o.min[1] <= o.max[1]) {
                return Err(RouteError::BadObstacle(i, "min must not exceed max".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortReason {
    Blocked,
    Battery,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum RouteEvent {
    WaypointReached { index: usize, t_us: u64 },
    CaptureDone { index: usize, capture: Capture, t_us: u64 },
    RouteComplete { t_us: u64 },
    Blocked { waypoint: usize, obstacle: usize, x: f64, y: f64, t_us: u64 },
    RouteAborted { reason: AbortReason, t_us: u64 },
    RouteSuspended { next_waypoint: usize, t_us: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    Moving,
    Dwelling { left_s: f64 },
    Done,
    Aborted,
    Suspended,
}

#[derive(Debug, Clone)]
pub struct RouteRunner {
    route: InspectionRoute,
    next: usize,
    phase: Phase,
    t_us: u64,
}

impl RouteRunner {
    pub fn new(route: InspectionRoute) -> Self {
        Self {
            route,
            next: 0,
            phase: Phase::Moving,
            t_us: 0,
        }
    }

    pub fn finished(&self) -> bool {
        matches!(self.phase, Phase::Done | Phase::Aborted | Phase::Suspended)
    }

    pub fn suspend(&mut self, _state: &RobotState) -> Option<RouteEvent> {
        if matches!(self.phase, Phase::Moving | Phase::Dwelling { .. }) {
            self.phase = Phase::Suspended;
            return Some(RouteEvent::RouteSuspended {
                next_waypoint: self.next,
                t_us: self.t_us,
            });
        }
        None
    }

    pub fn resume(&mut self) {
        if self.phase == Phase::Suspended {
            self.phase = Phase::Moving;
        }
    }

    fn arrive(&mut self, events: &mut Vec<RouteEvent>) {
        let wp = self.route.waypoints[self.next];
        events.push(RouteEvent::WaypointReached {
            index: self.next,
            t_us: self.t_us,
        });
        if wp.dwell_s > 0.0 {
            self.phase = Phase::Dwelling { left_s: wp.dwell_s };
        } else {
            self.finish_waypoint(events);
        }
    }

    fn finish_waypoint(&mut self, events: &mut Vec<RouteEvent>) {
        if let Some(capture) = self.route.waypoints[self.next].capture {
            events.push(RouteEvent::CaptureDone {
                index: self.next,
                capture,
                t_us: self.t_us,
            });
        }
        self.next += 1;
        if self.next == self.route.waypoints.len() {
            self.phase = Phase::Done;
            events.push(RouteEvent::RouteComplete { t_us: self.t_us });
        } else {
            self.phase = Phase::Moving;
        }
    }

    /// Gait needed for the stretch `a → b`, or the first blocking obstacle
    /// with its entry parameter.
    fn plan(&self, a: (f64, f64), b: (f64, f64), world: &World, cfg: &RobotConfig) -> Result<Gait, (usize, f64)> {
        let mut gait = Gait::Walk;
        let mut block: Option<(usize, f64)> = None;
        for (i, o) in world.obstacles.iter().enumerate() {
            let Some(t) = o.entry(a, b) else { continue };
            if check_traversal(o, Gait::Walk, cfg) == Traversal::Traversable {
                continue;
            }
            if check_traversal(o, Gait::Stairs, cfg) == Traversal::Traversable {
                gait = Gait::Stairs;
            } else if block.is_none_or(|(_, bt)| t < bt) {
                block = Some((i, t));
            }
        }
        match block {
            Some(b) => Err(b),
            None => Ok(gait),
        }
    }

    /// Advance `dt` seconds from `s`.
    pub fn step(&mut self, mut s: RobotState, world: &World, cfg: &RobotConfig, dt: f64) -> (RobotState, Vec<RouteEvent>) {
        let mut events = Vec::new();
        if self.finished() {
            return (s, events);
        }
        self.t_us += (dt * 1e6).round() as u64;
        match self.phase {
            Phase::Dwelling { left_s } => {
                s.gait = Gait::Idle;
                s.speed = 0.0;
                s = drain_battery(s, dt, Gait::Idle, cfg);
                let left = left_s - dt;
                if left <= 1e-9 {
                    self.finish_waypoint(&mut events);
                } else {
                    self.phase = Phase::Dwelling { left_s: left };
                }
            }
            Phase::Moving => {
                let wp = self.route.waypoints[self.next];
                let (dx, dy) = (wp.x - s.x, wp.y - s.y);
                let dist = dx.hypot(dy);
                if dist == 0.0 {
                    self.arrive(&mut events);
                } else {
                    let (ux, uy) = (dx / dist, dy / dist);
                    let reach = |v: f64| (s.x + ux * dist.min(v * dt), s.y + uy * dist.min(v * dt));
                    let probe = reach(cfg.speed_cap.walk);
                    match self.plan((s.x, s.y), probe, world, cfg) {
                        Err((obstacle, t)) => {
                            let len = dist.min(cfg.speed_cap.walk * dt);
                            // Stop just short of the edge.
                            let d = (t * len - 1e-6).max(0.0);
                            s.x += ux * d;
                            s.y += uy * d;
                            s.speed = 0.0;
                            s.gait = Gait::Idle;
                            s = drain_battery(s, dt, Gait::Walk, cfg);
                            self.phase = Phase::Aborted;
                            events.push(RouteEvent::Blocked {
                                waypoint: self.next,
                                obstacle,
                                x: s.x,
                                y: s.y,
                                t_us: self.t_us,
                            });
                            events.push(RouteEvent::RouteAborted {
                                reason: AbortReason::Blocked,
                                t_us: self.t_us,
                            });
                            return (s, events);
                        }
                        Ok(gait) => {
                            let v = cfg.speed_cap.get(gait);
                            let d = dist.min(v * dt);
                            s.heading = uy.atan2(ux);
                            s.gait = gait;
                            s.speed = v;
                            if d >= dist {
                                s.x = wp.x;
                                s.y = wp.y;
                            } else {
                                s.x += ux * d;
                                s.y += uy * d;
                            }
                            s = drain_battery(s, dt, gait, cfg);
                            if d >= dist && s.mode != Mode::Halted {
                                self.arrive(&mut events);
                            }
                        }
                    }
                }
            }
            Phase::Done | Phase::Aborted | Phase::Suspended => {}
        }
        if s.mode == Mode::Halted && !self.finished() {
            self.phase = Phase::Aborted;
            events.push(RouteEvent::RouteAborted {
                reason: AbortReason::Battery,
                t_us: self.t_us,
            });
        }
        if self.phase == Phase::Done {
            s.speed = 0.0;
            s.gait = Gait::Idle;
        }
        (s, events)
    }
}

/// Result of running a route to completion.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteOutcome {
    pub events: Vec<RouteEvent>,
    pub state: RobotState,
    pub aborted: Option<AbortReason>,
}

/// Run `route` from `state` until it completes or aborts.
pub fn follow_route(state: RobotState, route: &InspectionRoute, world: &World, cfg: &RobotConfig) -> RouteOutcome {
    let mut s = state;
    s.mode = Mode::AutonomousRoute;
    let mut r = RouteRunner::new(route.clone());
    let mut events = Vec::new();
    while !r.finished() {
        let (ns, ev) = r.step(s, world, cfg, super::DT_S);
        s = ns;
        events.extend(ev);
    }
    let aborted = events.iter().find_map(|e| match e {
        RouteEvent::RouteAborted { reason, .. } => Some(*reason),
        _ => None,
    });
    RouteOutcome {
        events,
        state: s,
        aborted,
    }
}
