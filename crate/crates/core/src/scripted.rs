//! Non-learning policies: the Greedy and Vicsek pursuers used in the unseen
//! teammate zoos, and the potential-field evader driven by the simulator.
//!
//! All of them are pure functions of the world state, so replays stay
//! deterministic. They only choose a heading; the steer command is the
//! wrapped heading error divided by the largest turn possible in one step.

use serde::{Deserialize, Serialize};

use crate::config::EnvConfig;
use crate::geometry::{wrap_angle, Vec2};
use crate::sim::{ActionCmd, WorldState, OMEGA_MAX};

pub const GREEDY_EVASION_RANGE: f64 = 0.5;
pub const VICSEK_AGENT_RANGE: f64 = 0.5;
pub const VICSEK_OBSTACLE_RANGE: f64 = 0.4;
pub const VICSEK_GAIN: f64 = 1.0;
pub const EVADER_WALL_RANGE: f64 = 0.5;

/// Strength of the greedy deflection at zero distance from the threat,
/// relative to the unit attraction.
const GREEDY_DEFLECTION: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScriptedKind {
    Greedy,
    Vicsek,
    Evader,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptedPolicySpec {
    pub kind: ScriptedKind,
    /// Greedy: distance at which teammates, obstacles and walls deflect it.
    pub evasion_range: f64,
    /// Vicsek: repulsion ranges and gains.
    pub agent_range: f64,
    pub obstacle_range: f64,
    pub agent_gain: f64,
    pub obstacle_gain: f64,
    /// Evader: wall/obstacle repulsion range.
    pub wall_range: f64,
}

impl ScriptedPolicySpec {
    pub fn new(kind: ScriptedKind) -> Self {
        Self {
            kind,
            evasion_range: GREEDY_EVASION_RANGE,
            agent_range: VICSEK_AGENT_RANGE,
            obstacle_range: VICSEK_OBSTACLE_RANGE,
            agent_gain: VICSEK_GAIN,
            obstacle_gain: VICSEK_GAIN,
            wall_range: EVADER_WALL_RANGE,
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.evasion_range, self.agent_range, self.obstacle_range, self.wall_range].iter().all(|r| *r > 0.0)
            && self.agent_gain >= 0.0
            && self.obstacle_gain >= 0.0
    }
}

/// Steer command that turns `heading` toward `desired` as fast as allowed.
pub fn steer_toward(cfg: &EnvConfig, heading: f64, desired: f64) -> ActionCmd {
    let err = wrap_angle(desired - heading);
    ActionCmd::new((err / (OMEGA_MAX * cfg.dt())).clamp(-1.0, 1.0))
}

/// Nearest live evader to `p`; ties go to the lowest index.
pub fn target_evader(state: &WorldState, p: Vec2) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for e in state.live_evaders() {
        let d = state.evaders[e].position().distance(p);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((e, d));
        }
    }
    best.map(|(e, _)| e)
}

fn attraction(cfg: &EnvConfig, state: &WorldState, agent: usize) -> Vec2 {
    let p = state.pursuers[agent].position();
    let goal = match target_evader(state, p) {
        Some(e) => state.evaders[e].position(),
        None => Vec2::new(0.5 * cfg.site.boundary.width, 0.5 * cfg.site.boundary.height),
    };
    (goal - p).normalized()
}

/// A repulsion source: distance (or clearance) and the unit vector pointing
/// away from it.
#[derive(Debug, Clone, Copy)]
struct Threat {
    dist: f64,
    away: Vec2,
    is_agent: bool,
}

fn walls(cfg: &EnvConfig, p: Vec2) -> [(f64, Vec2); 4] {
    let (w, h) = (cfg.site.boundary.width, cfg.site.boundary.height);
    [
        (p.x, Vec2::new(1.0, 0.0)),
        (w - p.x, Vec2::new(-1.0, 0.0)),
        (p.y, Vec2::new(0.0, 1.0)),
        (h - p.y, Vec2::new(0.0, -1.0)),
    ]
}

fn static_threats(cfg: &EnvConfig, p: Vec2) -> Vec<Threat> {
    let mut out: Vec<Threat> = walls(cfg, p).into_iter().map(|(d, away)| Threat { dist: d, away, is_agent: false }).collect();
    for o in cfg.site.obstacles.values() {
        let q = o.closest_surface_point(p);
        let c = o.clearance(p);
        let mut away = (p - q).normalized();
        if c < 0.0 {
            away = -away;
        }
        if away == Vec2::ZERO {
            away = (p - o.center()).normalized();
        }
        out.push(Threat { dist: c.max(0.0), away, is_agent: false });
    }
    out
}

fn pursuer_threats(cfg: &EnvConfig, state: &WorldState, agent: usize) -> Vec<Threat> {
    let p = state.pursuers[agent].position();
    let mut out = static_threats(cfg, p);
    for (j, q) in state.pursuers.iter().enumerate() {
        if j != agent {
            let d = q.position().distance(p);
            out.push(Threat { dist: d, away: (p - q.position()).normalized(), is_agent: true });
        }
    }
    out
}

fn heading_or_keep(cfg: &EnvConfig, heading: f64, v: Vec2) -> ActionCmd {
    if v.norm() < 1e-12 {
        ActionCmd::new(0.0)
    } else {
        steer_toward(cfg, heading, v.angle())
    }
}

pub fn greedy_action(cfg: &EnvConfig, state: &WorldState, agent: usize) -> ActionCmd {
    greedy_action_with(&ScriptedPolicySpec::new(ScriptedKind::Greedy), cfg, state, agent)
}

/// Chase the nearest live evader; the single nearest threat inside the
/// evasion range bends the heading away from it.
pub fn greedy_action_with(spec: &ScriptedPolicySpec, cfg: &EnvConfig, state: &WorldState, agent: usize) -> ActionCmd {
    let mut v = attraction(cfg, state, agent);
    let nearest = pursuer_threats(cfg, state, agent)
        .into_iter()
        .filter(|t| t.dist < spec.evasion_range)
        .min_by(|a, b| a.dist.total_cmp(&b.dist));
    if let Some(t) = nearest {
        v = v + t.away * (GREEDY_DEFLECTION * (1.0 - t.dist / spec.evasion_range));
    }
    heading_or_keep(cfg, state.pursuers[agent].heading, v)
}

pub fn vicsek_action(cfg: &EnvConfig, state: &WorldState, agent: usize) -> ActionCmd {
    vicsek_action_with(&ScriptedPolicySpec::new(ScriptedKind::Vicsek), cfg, state, agent)
}

/// Unit attraction plus `gain * (1/d - 1/range)` repulsion from every agent,
/// obstacle and wall inside its range; only the orientation is used.
pub fn vicsek_action_with(spec: &ScriptedPolicySpec, cfg: &EnvConfig, state: &WorldState, agent: usize) -> ActionCmd {
    let mut v = attraction(cfg, state, agent);
    for t in pursuer_threats(cfg, state, agent) {
        let (range, gain) = if t.is_agent { (spec.agent_range, spec.agent_gain) } else { (spec.obstacle_range, spec.obstacle_gain) };
        if t.dist < range {
            let d = t.dist.max(1e-3);
            v = v + t.away * (gain * (1.0 / d - 1.0 / range));
        }
    }
    heading_or_keep(cfg, state.pursuers[agent].heading, v)
}

/// Summed escape field for evader `e`: `1/d^2` away from every pursuer inside
/// the reception range plus `1/c - 1/range` away from each wall and obstacle
/// closer than the wall range.
pub fn evader_field(cfg: &EnvConfig, state: &WorldState, e: usize) -> Vec2 {
    let spec = ScriptedPolicySpec::new(ScriptedKind::Evader);
    let p = state.evaders[e].position();
    let mut v = Vec2::ZERO;
    for q in &state.pursuers {
        let d = q.position().distance(p);
        if d <= cfg.players.reception_range {
            let d = d.max(1e-3);
            v = v + (p - q.position()).normalized() * (1.0 / (d * d));
        }
    }
    for t in static_threats(cfg, p) {
        if t.dist < spec.wall_range {
            let d = t.dist.max(1e-3);
            v = v + t.away * (1.0 / d - 1.0 / spec.wall_range);
        }
    }
    v
}

/// Flee along the summed field; with no field at all, keep the heading.
pub fn evader_action(cfg: &EnvConfig, state: &WorldState, e: usize) -> ActionCmd {
    heading_or_keep(cfg, state.evaders[e].heading, evader_field(cfg, state, e))
}

/// Action for a scripted pursuer slot.
pub fn pursuer_action(kind: ScriptedKind, cfg: &EnvConfig, state: &WorldState, agent: usize) -> ActionCmd {
    match kind {
        ScriptedKind::Greedy => greedy_action(cfg, state, agent),
        ScriptedKind::Vicsek => vicsek_action(cfg, state, agent),
        // `evader:potential` in a pursuer slot falls back to greedy
        ScriptedKind::Evader => greedy_action(cfg, state, agent),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::builtin_env;
    use crate::rng::substream;
    use crate::sim::{Pose, Terminal};
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn open_cfg() -> EnvConfig {
        let mut cfg = builtin_env("4p2e3o").unwrap();
        cfg.site.obstacles.clear();
        cfg
    }

    fn world(pursuers: Vec<Pose>, evaders: Vec<Pose>) -> WorldState {
        let n = evaders.len();
        WorldState {
            step: 0,
            pursuers,
            evaders,
            captured: vec![false; n],
            terminal: Terminal::Running,
            closest_approach: vec![1.0; n],
            rng: substream(0, "t", &[]),
        }
    }

    #[test]
    fn greedy_aligned_and_saturated() {
        let cfg = open_cfg();
        let s = world(vec![Pose::new(1.8, 1.5, FRAC_PI_2)], vec![Pose::new(1.8, 3.0, 0.0)]);
        assert_eq!(greedy_action(&cfg, &s, 0).steer(), 0.0);
        let s = world(vec![Pose::new(1.8, 1.5, -FRAC_PI_2)], vec![Pose::new(1.8, 3.0, 0.0)]);
        assert_eq!(greedy_action(&cfg, &s, 0).steer(), 1.0);
    }

    #[test]
    fn greedy_small_error_proportional() {
        let cfg = open_cfg();
        // heading error of 0.1 rad with max turn pi*0.1 rad per step
        let s = world(vec![Pose::new(1.8, 1.5, FRAC_PI_2 - 0.1)], vec![Pose::new(1.8, 3.0, 0.0)]);
        let steer = greedy_action(&cfg, &s, 0).steer();
        assert!((steer - 0.1 / (PI * 0.1)).abs() < 1e-9);
    }

    #[test]
    fn greedy_and_vicsek_agree_without_threats() {
        let cfg = open_cfg();
        let s = world(
            vec![Pose::new(1.8, 2.0, 0.4), Pose::new(0.8, 1.0, 0.0)],
            vec![Pose::new(2.5, 3.0, 0.0), Pose::new(0.9, 4.0, 0.0)],
        );
        assert_eq!(greedy_action(&cfg, &s, 0), vicsek_action(&cfg, &s, 0));
    }

    #[test]
    fn vicsek_repulsion_vanishes_at_range() {
        let cfg = open_cfg();
        let s = world(
            vec![Pose::new(1.8, 2.0, 0.4), Pose::new(1.8 + VICSEK_AGENT_RANGE, 2.0, 0.0)],
            vec![Pose::new(2.5, 3.0, 0.0)],
        );
        assert_eq!(vicsek_action(&cfg, &s, 0), greedy_action(&cfg, &s, 0));
    }

    #[test]
    fn vicsek_symmetric_threats_cancel() {
        let cfg = open_cfg();
        let s = world(
            vec![Pose::new(1.8, 2.0, FRAC_PI_2), Pose::new(1.5, 2.0, 0.0), Pose::new(2.1, 2.0, 0.0)],
            vec![Pose::new(1.8, 3.5, 0.0)],
        );
        assert!(vicsek_action(&cfg, &s, 0).steer().abs() < 1e-12);
    }

    #[test]
    fn evader_flees_single_pursuer() {
        let cfg = open_cfg();
        let s = world(vec![Pose::new(1.8, 1.5, 0.0)], vec![Pose::new(1.8, 2.5, FRAC_PI_2)]);
        assert!(evader_action(&cfg, &s, 0).steer().abs() < 1e-12);
        let s = world(vec![Pose::new(1.8, 1.5, 0.0)], vec![Pose::new(1.8, 2.5, 0.0)]);
        let f = evader_field(&cfg, &s, 0);
        assert!((f.angle() - FRAC_PI_2).abs() < 1e-12);
        assert_eq!(evader_action(&cfg, &s, 0).steer(), 1.0);
    }

    #[test]
    fn evader_keeps_heading_without_field() {
        let cfg = open_cfg();
        let s = world(vec![Pose::new(0.5, 0.5, 0.0)], vec![Pose::new(2.5, 3.5, 1.0)]);
        assert_eq!(evader_action(&cfg, &s, 0).steer(), 0.0);
    }

    #[test]
    fn cornered_evader_heads_along_open_diagonal() {
        let cfg = open_cfg();
        let s = world(vec![Pose::new(1.0, 1.0, 0.0)], vec![Pose::new(0.3, 0.3, 0.0)]);
        // walls: 1/0.3 - 1/0.5 each along +x, +y; pursuer: 1/d^2 toward the corner
        let d = (0.7f64 * 0.7 * 2.0).sqrt();
        let wall = 1.0 / 0.3 - 1.0 / 0.5;
        let push = 1.0 / (d * d) / 2f64.sqrt();
        let expected = Vec2::new(wall - push, wall - push);
        let f = evader_field(&cfg, &s, 0);
        assert!((f.x - expected.x).abs() < 1e-12 && (f.y - expected.y).abs() < 1e-12);
        assert!((f.angle() - FRAC_PI_4).abs() < 1e-12);
    }

    #[test]
    fn greedy_deflects_from_wall() {
        let cfg = open_cfg();
        // evader straight ahead along the wall; wall on the left at 0.2 m
        let s = world(vec![Pose::new(0.2, 1.0, FRAC_PI_2)], vec![Pose::new(0.2, 3.0, 0.0)]);
        assert!(greedy_action(&cfg, &s, 0).steer() < 0.0, "should turn right, away from x = 0");
    }

    #[test]
    fn closed_loop_greedy_captures_static_target() {
        // evaders are pinned back to their start after every step
        let cfg = open_cfg();
        let mut s = world(
            vec![Pose::new(0.6, 0.5, 0.0), Pose::new(3.0, 0.5, PI), Pose::new(1.2, 0.5, 0.0), Pose::new(2.4, 0.5, 0.0)],
            vec![Pose::new(2.5, 4.0, 0.0), Pose::new(1.0, 4.0, 0.0)],
        );
        let targets = s.evaders.clone();
        let mut captured = false;
        for _ in 0..1000 {
            let acts: Vec<_> = (0..4).map(|i| greedy_action(&cfg, &s, i)).collect();
            let out = crate::sim::step(&cfg, &mut s, &acts).unwrap();
            for e in 0..2 {
                if !s.captured[e] {
                    s.evaders[e] = targets[e];
                }
            }
            if !out.events.captures.is_empty() {
                captured = true;
            }
            if !s.is_running() {
                break;
            }
        }
        assert!(captured);
    }
}
