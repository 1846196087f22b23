//! Simulated quadruped: planar kinematics with heading, gait speed caps,
//! linear battery drain, obstacle traversal and waypoint routes.

pub mod route;
pub mod telemetry;

use serde::{Deserialize, Serialize};

use crate::protocol::command::{CommandCaps, CommandMessage, Gait};

pub use route::{
    follow_route, AbortReason, Capture, Hotspot, InspectionRoute, Obstacle, ObstacleKind, RouteError, RouteEvent, RouteOutcome,
    RouteRunner, Waypoint, World,
};
pub use telemetry::{generate_telemetry, RecordError, TelemetryConfig, TelemetryKind, TelemetryRecord};

/// Fixed integration step.
pub const DT_S: f64 = 0.05;
pub const DT_US: u64 = 50_000;

/// One value per gait.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerGait {
    pub idle: f64,
    pub walk: f64,
    pub run: f64,
    pub stairs: f64,
}

impl PerGait {
    pub fn get(&self, g: Gait) -> f64 {
        match g {
            Gait::Idle => self.idle,
            Gait::Walk => self.walk,
            Gait::Run => self.run,
            Gait::Stairs => self.stairs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobotConfig {
    /// m/s
    pub speed_cap: PerGait,
    /// Highest traversable step, m.
    pub step_limit: PerGait,
    /// Battery fraction per second at walk.
    pub drain_per_s: f64,
    pub drain_factor: PerGait,
    pub caps: CommandCaps,
}

impl Default for RobotConfig {
    fn default() -> Self {
        Self {
            speed_cap: PerGait {
                idle: 0.0,
                walk: 1.0,
                run: 1.5,
                stairs: 0.3,
            },
            step_limit: PerGait {
                idle: 0.0,
                walk: 0.05,
                run: 0.05,
                stairs: 0.12,
            },
            drain_per_s: 1.0 / 9_000.0,
            drain_factor: PerGait {
                idle: 0.1,
                walk: 1.0,
                run: 1.6,
                stairs: 2.0,
            },
            caps: CommandCaps::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    AutonomousRoute,
    Teleop,
    Halted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub gait: Gait,
    pub speed: f64,
    pub battery: f64,
    pub mode: Mode,
}

impl Default for RobotState {
    fn default() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            heading: 0.0,
            gait: Gait::Idle,
            speed: 0.0,
            battery: 1.0,
            mode: Mode::Teleop,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RobotError {
    #[error("command rejected: {0}")]
    CommandRejected(RejectReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Halted,
    BatteryDepleted,
    NonFinite,
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RejectReason::Halted => "robot halted",
            RejectReason::BatteryDepleted => "battery depleted",
            RejectReason::NonFinite => "non-finite velocity",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Traversal {
    Traversable,
    Blocked,
}

pub fn check_traversal(obstacle: &Obstacle, gait: Gait, cfg: &RobotConfig) -> Traversal {
    // Small tolerance so a 0.12 m step is not lost to rounding in configs.
    if obstacle.height <= cfg.step_limit.get(gait) + 1e-9 {
        Traversal::Traversable
    } else {
        Traversal::Blocked
    }
}

/// Drain for `dt` seconds at `gait`; halts the robot at zero.
pub fn drain_battery(mut s: RobotState, dt: f64, gait: Gait, cfg: &RobotConfig) -> RobotState {
    if dt <= 0.0 {
        return s;
    }
    s.battery = (s.battery - cfg.drain_per_s * cfg.drain_factor.get(gait) * dt).max(0.0);
    if s.battery == 0.0 {
        s.mode = Mode::Halted;
        s.speed = 0.0;
    }
    s
}

/// Body-frame velocity clamped so the planar speed respects the gait cap.
pub fn clamp_velocity(gait: Gait, vx: f64, vy: f64, cfg: &RobotConfig) -> (f64, f64) {
    let cap = cfg.speed_cap.get(gait);
    let v = vx.hypot(vy);
    if v <= cap || v == 0.0 {
        (vx, vy)
    } else {
        (vx * cap / v, vy * cap / v)
    }
}

/// One explicit Euler step with body-frame velocity and yaw rate.
pub fn euler_step(mut s: RobotState, vx: f64, vy: f64, yaw_rate: f64, dt: f64, cfg: &RobotConfig) -> RobotState {
    if s.mode == Mode::Halted || dt <= 0.0 {
        return s;
    }
    let (c, sn) = (s.heading.cos(), s.heading.sin());
    s.x += (vx * c - vy * sn) * dt;
    s.y += (vx * sn + vy * c) * dt;
    s.heading += yaw_rate * dt;
    s.speed = vx.hypot(vy);
    let gait = s.gait;
    drain_battery(s, dt, gait, cfg)
}

fn admit(s: &RobotState, cmd: &CommandMessage) -> Result<(), RobotError> {
    if s.battery <= 0.0 {
        return Err(RobotError::CommandRejected(RejectReason::BatteryDepleted));
    }
    if s.mode == Mode::Halted {
        return Err(RobotError::CommandRejected(RejectReason::Halted));
    }
    if ![cmd.vx, cmd.vy, cmd.yaw_rate].iter().all(|v| v.is_finite()) {
        return Err(RobotError::CommandRejected(RejectReason::NonFinite));
    }
    Ok(())
}

/// Execute `cmd` for its full duration in 50 ms Euler steps (the last step
/// may be shorter). Velocities are clamped to the gait's cap.
pub fn apply_command(state: RobotState, cmd: &CommandMessage, cfg: &RobotConfig) -> Result<RobotState, RobotError> {
    admit(&state, cmd)?;
    let mut s = state;
    s.mode = Mode::Teleop;
    s.gait = cmd.gait;
    let (vx, vy) = clamp_velocity(cmd.gait, cmd.vx, cmd.vy, cfg);
    let mut left_us = cmd.duration_ms as u64 * 1_000;
    while left_us > 0 && s.mode != Mode::Halted {
        let step = left_us.min(DT_US);
        s = euler_step(s, vx, vy, cmd.yaw_rate, step as f64 / 1e6, cfg);
        left_us -= step;
    }
    s.speed = 0.0;
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Active {
    vx: f64,
    vy: f64,
    yaw_rate: f64,
    left_us: u64,
}

/// Event-driven robot: commands preempt any route and are executed tick by
/// tick.
#[derive(Debug, Clone)]
pub struct Robot {
    pub state: RobotState,
    pub cfg: RobotConfig,
    pub world: World,
    route: Option<RouteRunner>,
    active: Option<Active>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RobotEvent {
    Route(RouteEvent),
    CommandDone,
    Halted,
}

impl Robot {
    pub fn new(state: RobotState, cfg: RobotConfig, world: World) -> Self {
        Self {
            state,
            cfg,
            world,
            route: None,
            active: None,
        }
    }

    pub fn start_route(&mut self, route: InspectionRoute) {
        self.state.mode = Mode::AutonomousRoute;
        self.route = Some(RouteRunner::new(route));
    }

    /// Hand control back to a suspended route.
    pub fn resume_route(&mut self) -> bool {
        if self.state.mode != Mode::Teleop {
            return false;
        }
        match &mut self.route {
            Some(r) => {
                r.resume();
                self.active = None;
                self.state.mode = Mode::AutonomousRoute;
                !r.finished()
            }
            None => false,
        }
    }

    pub fn route_active(&self) -> bool {
        self.route.as_ref().is_some_and(|r| !r.finished())
    }

    /// Accept a teleop command; a running route is suspended.
    pub fn on_command(&mut self, cmd: &CommandMessage) -> Result<Vec<RobotEvent>, RobotError> {
        admit(&self.state, cmd)?;
        let mut events = Vec::new();
        if self.state.mode == Mode::AutonomousRoute {
            if let Some(r) = &mut self.route {
                if let Some(e) = r.suspend(&self.state) {
                    events.push(RobotEvent::Route(e));
                }
            }
        }
        self.state.mode = Mode::Teleop;
        self.state.gait = cmd.gait;
        let (vx, vy) = clamp_velocity(cmd.gait, cmd.vx, cmd.vy, &self.cfg);
        self.active = Some(Active {
            vx,
            vy,
            yaw_rate: cmd.yaw_rate,
            left_us: cmd.duration_ms as u64 * 1_000,
        });
        Ok(events)
    }

    /// Advance one 50 ms step.
    pub fn tick(&mut self) -> Vec<RobotEvent> {
        let mut events = Vec::new();
        if self.state.mode == Mode::Halted {
            return events;
        }
        match (self.state.mode, self.active) {
            (Mode::Teleop, Some(mut a)) => {
                let step = a.left_us.min(DT_US);
                self.state = euler_step(self.state, a.vx, a.vy, a.yaw_rate, step as f64 / 1e6, &self.cfg);
                a.left_us -= step;
                if a.left_us == 0 {
                    self.active = None;
                    self.state.speed = 0.0;
                    self.state.gait = Gait::Idle;
                    events.push(RobotEvent::CommandDone);
                } else {
                    self.active = Some(a);
                }
            }
            (Mode::AutonomousRoute, _) if self.route_active() => {
                let r = self.route.as_mut().expect("route active");
                let (s, ev) = r.step(self.state, &self.world, &self.cfg, DT_S);
                self.state = s;
                events.extend(ev.into_iter().map(RobotEvent::Route));
            }
            _ => {
                let g = self.state.gait;
                self.state = drain_battery(self.state, DT_S, g, &self.cfg);
            }
        }
        if self.state.mode == Mode::Halted {
            self.active = None;
            events.push(RobotEvent::Halted);
        }
        events
    }
}
