//! Deterministic discrete-time kinematic simulator.
//!
//! Each step: pursuers turn and advance, live evaders react with the
//! potential-field escape policy and advance, then captures, collisions,
//! reward and termination are evaluated in that order. Identical
//! `(config, seed, action sequence)` always produce identical trajectories.

mod log;
mod observe;

use std::f64::consts::PI;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::EnvConfig;
use crate::geometry::{nearest_wall, wrap_angle, Vec2};
use crate::rng::{substream, Rng};
use crate::scripted;

pub use log::{LogError, LogRecord, StepRecord, TrajectoryLog, TrajectoryWriter, LOG_SCHEMA_VERSION};
pub use observe::{observe, observe_all, ObsLayout, Observation};

/// Maximum turn rate at full steer, rad/s.
pub const OMEGA_MAX: f64 = PI;
/// Reward per captured evader.
pub const R_CAPTURE: f64 = 10.0;
/// Reward per meter of progress in closest approach to a live evader.
pub const C_SHAPE: f64 = 1.0;
/// Penalty per pursuer per step inside the proximity band.
pub const C_PROXIMITY: f64 = 0.1;
/// Width of the proximity band beyond each collision threshold, m.
pub const PROXIMITY_BAND: f64 = 0.1;
/// Terminal penalty for a collision.
pub const R_COLLISION: f64 = 10.0;

const RESPAWN_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    /// Heading in `(-pi, pi]`.
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self { x, y, heading: wrap_angle(heading) }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

/// Steering command in `[-1, 1]`; values outside are clamped on ingestion and
/// NaN becomes 0.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionCmd(f64);

impl ActionCmd {
    pub fn new(steer: f64) -> Self {
        if steer.is_nan() {
            Self(0.0)
        } else {
            Self(steer.clamp(-1.0, 1.0))
        }
    }

    pub fn steer(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Terminal {
    Running,
    Success,
    Collision,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptureEvent {
    pub evader: usize,
    pub pursuer: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CollisionKind {
    #[serde(rename = "drone-drone")]
    DroneDrone,
    #[serde(rename = "drone-obstacle")]
    DroneObstacle,
    #[serde(rename = "drone-wall")]
    DroneWall,
}

/// `a` is always a pursuer index. `b` is the other pursuer, the obstacle index
/// in document order, or the wall (0 left, 1 right, 2 bottom, 3 top).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub kind: CollisionKind,
    pub a: usize,
    pub b: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepEvents {
    pub captures: Vec<CaptureEvent>,
    pub collisions: Vec<CollisionEvent>,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub observations: Vec<Observation>,
    pub reward: f64,
    pub terminal: Terminal,
    pub events: StepEvents,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub step: u32,
    pub pursuers: Vec<Pose>,
    pub evaders: Vec<Pose>,
    pub captured: Vec<bool>,
    pub terminal: Terminal,
    /// Smallest pursuer distance each evader has seen this episode; shaping
    /// pays only for improvements on it.
    pub closest_approach: Vec<f64>,
    pub rng: Rng,
}

impl WorldState {
    pub fn is_running(&self) -> bool {
        self.terminal == Terminal::Running
    }

    pub fn live_evaders(&self) -> impl Iterator<Item = usize> + '_ {
        self.captured.iter().enumerate().filter(|(_, c)| !**c).map(|(i, _)| i)
    }

    /// Distance from evader `e` to its nearest pursuer.
    pub fn min_pursuer_distance(&self, e: usize) -> f64 {
        let p = self.evaders[e].position();
        self.pursuers.iter().map(|q| q.position().distance(p)).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("could not place {role} {index} inside its respawn region after {attempts} attempts")]
    RespawnInfeasible { role: &'static str, index: usize, attempts: usize },
    #[error("step() called on a terminal state ({0:?})")]
    Terminal(Terminal),
    #[error("expected {expected} actions, got {got}")]
    ActionCount { expected: usize, got: usize },
    #[error("agent id {0} out of range")]
    AgentId(usize),
}

fn placement_ok(cfg: &EnvConfig, p: Vec2, placed: &[Pose]) -> bool {
    let sr = cfg.obstacle_collision_clearance();
    let (wall, _) = nearest_wall(p, cfg.site.boundary.width, cfg.site.boundary.height);
    if wall < sr + PROXIMITY_BAND {
        return false;
    }
    if cfg.site.obstacles.values().any(|o| o.clearance(p) < sr + PROXIMITY_BAND) {
        return false;
    }
    let min_sep = cfg.drone_collision_distance() + PROXIMITY_BAND;
    placed.iter().all(|q| q.position().distance(p) >= min_sep)
}

fn sample_group(
    cfg: &EnvConfig,
    rng: &mut Rng,
    region: &crate::geometry::Rect,
    count: usize,
    facing: Vec2,
    role: &'static str,
) -> Result<Vec<Pose>, SimError> {
    let mut placed: Vec<Pose> = Vec::with_capacity(count);
    for index in 0..count {
        let mut ok = None;
        for _ in 0..RESPAWN_ATTEMPTS {
            let x = rng.random_range(region.x_min..=region.x_max);
            let y = rng.random_range(region.y_min..=region.y_max);
            let p = Vec2::new(x, y);
            if placement_ok(cfg, p, &placed) {
                ok = Some(Pose::new(x, y, (facing - p).angle()));
                break;
            }
        }
        match ok {
            Some(p) => placed.push(p),
            None => return Err(SimError::RespawnInfeasible { role, index, attempts: RESPAWN_ATTEMPTS }),
        }
    }
    Ok(placed)
}

/// Start an episode. Positions are drawn uniformly from the respawn regions
/// (with rejection against obstacles, walls and already placed agents), each
/// agent facing the centre of the other team's region, when `random_respawn`
/// is set, else taken from [`crate::config::fixed_layout`].
pub fn reset(cfg: &EnvConfig, seed: u64) -> Result<(WorldState, Vec<Observation>), SimError> {
    let mut rng = substream(seed, "env.reset", &[]);
    let players = &cfg.players;
    let (pursuers, evaders) = if players.random_respawn {
        let (rp, re) = (&players.respawn_regions.pursuer, &players.respawn_regions.evader);
        let p = sample_group(cfg, &mut rng, rp, players.num_p, re.center(), "pursuer")?;
        let e = sample_group(cfg, &mut rng, re, players.num_e, rp.center(), "evader")?;
        (p, e)
    } else {
        let to_pose = |(v, h): (Vec2, f64)| Pose::new(v.x, v.y, h);
        let p = crate::config::fixed_layout(&players.respawn_regions.pursuer, players.num_p, PI / 2.0);
        let e = crate::config::fixed_layout(&players.respawn_regions.evader, players.num_e, -PI / 2.0);
        (p.into_iter().map(to_pose).collect(), e.into_iter().map(to_pose).collect())
    };
    let mut state = WorldState {
        step: 0,
        captured: vec![false; evaders.len()],
        closest_approach: vec![0.0; evaders.len()],
        pursuers,
        evaders,
        terminal: Terminal::Running,
        rng,
    };
    for e in 0..state.evaders.len() {
        state.closest_approach[e] = state.min_pursuer_distance(e);
    }
    let obs = observe_all(cfg, &state);
    Ok((state, obs))
}

fn advance(pose: &mut Pose, steer: f64, speed: f64, dt: f64) {
    pose.heading = wrap_angle(pose.heading + steer * OMEGA_MAX * dt);
    pose.x += speed * pose.heading.cos() * dt;
    pose.y += speed * pose.heading.sin() * dt;
}

/// Evaders keep this clearance from walls and obstacles; a move that would
/// violate it is cancelled (the turn still applies).
fn evader_position_ok(cfg: &EnvConfig, p: Vec2) -> bool {
    let margin = 0.5 * cfg.task.safe_radius;
    let (wall, _) = nearest_wall(p, cfg.site.boundary.width, cfg.site.boundary.height);
    wall >= margin && cfg.site.obstacles.values().all(|o| o.clearance(p) >= margin)
}

/// Advance the world by one step.
pub fn step(cfg: &EnvConfig, state: &mut WorldState, actions: &[ActionCmd]) -> Result<StepOutcome, SimError> {
    if state.terminal != Terminal::Running {
        return Err(SimError::Terminal(state.terminal));
    }
    if actions.len() != state.pursuers.len() {
        return Err(SimError::ActionCount { expected: state.pursuers.len(), got: actions.len() });
    }
    let prev = state.clone();
    let dt = cfg.dt();

    for (pose, a) in state.pursuers.iter_mut().zip(actions) {
        advance(pose, a.steer(), cfg.players.velocity_p, dt);
    }

    let evader_cmds: Vec<Option<ActionCmd>> = (0..state.evaders.len())
        .map(|e| (!state.captured[e]).then(|| scripted::evader_action(cfg, state, e)))
        .collect();
    for (e, cmd) in evader_cmds.into_iter().enumerate() {
        let Some(cmd) = cmd else { continue };
        let mut moved = state.evaders[e];
        advance(&mut moved, cmd.steer(), cfg.players.velocity_e, dt);
        if evader_position_ok(cfg, moved.position()) {
            state.evaders[e] = moved;
        } else {
            state.evaders[e].heading = moved.heading;
        }
    }

    let captures = detect_captures(cfg, state);
    for c in &captures {
        state.captured[c.evader] = true;
    }
    let collisions = detect_collisions(cfg, state);
    let events = StepEvents { captures, collisions };

    state.step += 1;
    state.terminal = is_terminal(cfg, state, &events);
    let reward = compute_reward(cfg, &prev, state, &events);
    for e in 0..state.evaders.len() {
        if !prev.captured[e] {
            state.closest_approach[e] = state.closest_approach[e].min(state.min_pursuer_distance(e));
        }
    }

    Ok(StepOutcome { observations: observe_all(cfg, state), reward, terminal: state.terminal, events })
}

/// Live evaders within `capture_range` of any pursuer; the capturing pursuer is
/// the nearest one (lowest index on ties).
pub fn detect_captures(cfg: &EnvConfig, state: &WorldState) -> Vec<CaptureEvent> {
    let mut out = Vec::new();
    for e in state.live_evaders() {
        let ep = state.evaders[e].position();
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in state.pursuers.iter().enumerate() {
            let d = p.position().distance(ep);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        if let Some((pursuer, d)) = best {
            if d <= cfg.task.capture_range {
                out.push(CaptureEvent { evader: e, pursuer });
            }
        }
    }
    out
}

/// Pursuer collisions: pairs closer than twice the safe radius, and pursuers
/// whose clearance to an obstacle or wall is below the safe radius. Evaders
/// never collide.
pub fn detect_collisions(cfg: &EnvConfig, state: &WorldState) -> Vec<CollisionEvent> {
    let dd = cfg.drone_collision_distance();
    let sr = cfg.obstacle_collision_clearance();
    let (w, h) = (cfg.site.boundary.width, cfg.site.boundary.height);
    let mut out = Vec::new();
    for (i, pi) in state.pursuers.iter().enumerate() {
        let p = pi.position();
        for (j, pj) in state.pursuers.iter().enumerate().skip(i + 1) {
            if p.distance(pj.position()) < dd {
                out.push(CollisionEvent { kind: CollisionKind::DroneDrone, a: i, b: j });
            }
        }
        for (k, o) in state_obstacles(cfg).enumerate() {
            if o.clearance(p) < sr {
                out.push(CollisionEvent { kind: CollisionKind::DroneObstacle, a: i, b: k });
            }
        }
        for (k, c) in [p.x, w - p.x, p.y, h - p.y].into_iter().enumerate() {
            if c < sr {
                out.push(CollisionEvent { kind: CollisionKind::DroneWall, a: i, b: k });
            }
        }
    }
    out
}

fn state_obstacles(cfg: &EnvConfig) -> impl Iterator<Item = &crate::geometry::Obstacle> {
    cfg.site.obstacles.values()
}

/// Terminal class with precedence collision > success > timeout.
pub fn is_terminal(cfg: &EnvConfig, state: &WorldState, events: &StepEvents) -> Terminal {
    if !events.collisions.is_empty() {
        Terminal::Collision
    } else if state.captured.iter().all(|c| *c) {
        Terminal::Success
    } else if state.step >= cfg.task.task_horizon {
        Terminal::Timeout
    } else {
        Terminal::Running
    }
}

/// Pursuers sitting inside the proximity band just outside a collision
/// threshold (teammate, obstacle or wall).
pub fn proximity_count(cfg: &EnvConfig, state: &WorldState) -> usize {
    let dd = cfg.drone_collision_distance();
    let sr = cfg.obstacle_collision_clearance();
    let in_band = |v: f64, thr: f64| v >= thr && v < thr + PROXIMITY_BAND;
    let (w, h) = (cfg.site.boundary.width, cfg.site.boundary.height);
    state
        .pursuers
        .iter()
        .enumerate()
        .filter(|(i, pi)| {
            let p = pi.position();
            let mate = state.pursuers.iter().enumerate().any(|(j, q)| j != *i && in_band(p.distance(q.position()), dd));
            let obstacle = state_obstacles(cfg).any(|o| in_band(o.clearance(p), sr));
            let wall = [p.x, w - p.x, p.y, h - p.y].into_iter().any(|c| in_band(c, sr));
            mate || obstacle || wall
        })
        .count()
}

/// Shared team reward for the transition `prev -> next`.
///
/// Capture bonus, plus shaping on the improvement of each live evader's
/// closest approach, minus the proximity-band penalty, minus the collision
/// penalty when the step ended in a collision.
pub fn compute_reward(cfg: &EnvConfig, prev: &WorldState, next: &WorldState, events: &StepEvents) -> f64 {
    let mut r = R_CAPTURE * events.captures.len() as f64;
    for e in 0..prev.evaders.len() {
        if prev.captured[e] {
            continue;
        }
        let progress = prev.closest_approach[e] - next.min_pursuer_distance(e);
        r += C_SHAPE * progress.max(0.0);
    }
    r -= C_PROXIMITY * proximity_count(cfg, next) as f64;
    if !events.collisions.is_empty() {
        r -= R_COLLISION;
    }
    r
}
