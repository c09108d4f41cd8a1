//! Per-pursuer egocentric observations.
//!
//! Layout for `K` evaders and `P` pursuers (all entries in `[-1, 1]`):
//!
//! ```text
//! [ self: x, y, cos h, sin h ]                      4
//! [ evader k: dist, bearing, mask ] * K             3K
//! [ nearest obstacle or wall: dist, bearing, mask ] 3
//! [ teammate j: dist, bearing, mask ] * (P - 1)     3(P-1)
//! ```
//!
//! Distances are divided by the reception range, bearings are body-frame
//! angles divided by pi. Anything beyond the reception range, and captured
//! evaders, is masked: all three entries are 0.

use serde::{Deserialize, Serialize};

use super::{SimError, WorldState};
use crate::config::EnvConfig;
use crate::geometry::{nearest_wall, wrap_angle, Vec2};

pub const SELF_BLOCK: usize = 4;
pub const ENTITY_BLOCK: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Observation(pub Vec<f32>);

impl Observation {
    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }
}

/// Offsets of the observation blocks for a given configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObsLayout {
    pub num_evaders: usize,
    pub num_teammates: usize,
}

impl ObsLayout {
    pub fn new(cfg: &EnvConfig) -> Self {
        Self { num_evaders: cfg.players.num_e, num_teammates: cfg.players.num_p.saturating_sub(1) }
    }

    pub fn len(&self) -> usize {
        SELF_BLOCK + ENTITY_BLOCK * (self.num_evaders + 1 + self.num_teammates)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn self_range(&self) -> std::ops::Range<usize> {
        0..SELF_BLOCK
    }

    pub fn evader_range(&self) -> std::ops::Range<usize> {
        SELF_BLOCK..SELF_BLOCK + ENTITY_BLOCK * self.num_evaders
    }

    pub fn obstacle_range(&self) -> std::ops::Range<usize> {
        let s = self.evader_range().end;
        s..s + ENTITY_BLOCK
    }

    pub fn teammate_range(&self) -> std::ops::Range<usize> {
        let s = self.obstacle_range().end;
        s..s + ENTITY_BLOCK * self.num_teammates
    }
}

fn entity(rr: f64, me: Vec2, heading: f64, target: Vec2, dist: f64, visible: bool) -> [f32; 3] {
    if !visible || dist > rr {
        return [0.0; 3];
    }
    let d = target - me;
    let bearing = if d.norm() > 1e-12 { wrap_angle(d.angle() - heading) / std::f64::consts::PI } else { 0.0 };
    [(dist / rr).clamp(0.0, 1.0) as f32, bearing.clamp(-1.0, 1.0) as f32, 1.0]
}

/// Closest obstacle-or-wall surface point and its clearance.
pub(crate) fn nearest_obstacle_point(cfg: &EnvConfig, p: Vec2) -> (f64, Vec2) {
    let mut best = nearest_wall(p, cfg.site.boundary.width, cfg.site.boundary.height);
    for o in cfg.site.obstacles.values() {
        let c = o.clearance(p).max(0.0);
        if c < best.0 {
            best = (c, o.closest_surface_point(p));
        }
    }
    best
}

pub fn observe(cfg: &EnvConfig, state: &WorldState, agent: usize) -> Result<Observation, SimError> {
    let me = state.pursuers.get(agent).ok_or(SimError::AgentId(agent))?;
    Ok(observe_unchecked(cfg, state, agent, me))
}

fn observe_unchecked(cfg: &EnvConfig, state: &WorldState, agent: usize, me: &super::Pose) -> Observation {
    let layout = ObsLayout::new(cfg);
    let rr = cfg.players.reception_range;
    let (w, h) = (cfg.site.boundary.width, cfg.site.boundary.height);
    let pos = me.position();
    let mut out = Vec::with_capacity(layout.len());
    out.extend_from_slice(&[
        ((2.0 * pos.x / w - 1.0).clamp(-1.0, 1.0)) as f32,
        ((2.0 * pos.y / h - 1.0).clamp(-1.0, 1.0)) as f32,
        me.heading.cos() as f32,
        me.heading.sin() as f32,
    ]);
    for (e, ev) in state.evaders.iter().enumerate() {
        let t = ev.position();
        out.extend_from_slice(&entity(rr, pos, me.heading, t, pos.distance(t), !state.captured[e]));
    }
    let (clear, point) = nearest_obstacle_point(cfg, pos);
    out.extend_from_slice(&entity(rr, pos, me.heading, point, clear, true));
    for (j, mate) in state.pursuers.iter().enumerate() {
        if j == agent {
            continue;
        }
        let t = mate.position();
        out.extend_from_slice(&entity(rr, pos, me.heading, t, pos.distance(t), true));
    }
    debug_assert_eq!(out.len(), layout.len());
    Observation(out)
}

pub fn observe_all(cfg: &EnvConfig, state: &WorldState) -> Vec<Observation> {
    state.pursuers.iter().enumerate().map(|(i, me)| observe_unchecked(cfg, state, i, me)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::builtin_env;
    use crate::rng::substream;
    use crate::sim::{Pose, Terminal};

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
    fn evader_beyond_range_masked() {
        let cfg = builtin_env("4p2e3o").unwrap();
        let s = world(
            vec![Pose::new(1.8, 1.0, 0.0), Pose::new(0.5, 0.5, 0.0), Pose::new(3.0, 0.5, 0.0), Pose::new(2.5, 0.5, 0.0)],
            vec![Pose::new(1.8, 3.5, 0.0), Pose::new(1.8, 2.9, 0.0)],
        );
        let o = observe(&cfg, &s, 0).unwrap();
        let l = ObsLayout::new(&cfg);
        let ev = &o.0[l.evader_range()];
        assert_eq!(&ev[0..3], &[0.0, 0.0, 0.0]);
        assert_eq!(ev[5], 1.0);
    }

    #[test]
    fn evader_ahead_frame_alignment() {
        let cfg = builtin_env("4p2e3o").unwrap();
        let s = world(
            vec![Pose::new(1.8, 0.5, std::f64::consts::FRAC_PI_2), Pose::new(0.5, 0.5, 0.0), Pose::new(3.0, 0.5, 0.0), Pose::new(2.5, 0.3, 0.0)],
            vec![Pose::new(1.8, 1.5, 0.0), Pose::new(3.0, 4.5, 0.0)],
        );
        let o = observe(&cfg, &s, 0).unwrap();
        let l = ObsLayout::new(&cfg);
        let ev = &o.0[l.evader_range()];
        assert!((ev[0] - 0.5).abs() < 1e-6);
        assert!(ev[1].abs() < 1e-6);
        assert_eq!(ev[2], 1.0);
    }

    #[test]
    fn wall_is_nearest_obstacle() {
        let cfg = builtin_env("4p2e3o").unwrap();
        // 0.05 m from the left wall, heading +x: wall is straight behind
        let s = world(
            vec![Pose::new(0.05, 1.0, 0.0), Pose::new(1.5, 0.5, 0.0), Pose::new(3.0, 0.5, 0.0), Pose::new(2.5, 0.5, 0.0)],
            vec![Pose::new(1.8, 4.5, 0.0), Pose::new(3.0, 4.5, 0.0)],
        );
        let o = observe(&cfg, &s, 0).unwrap();
        let l = ObsLayout::new(&cfg);
        let ob = &o.0[l.obstacle_range()];
        assert!((ob[0] - 0.025).abs() < 1e-6);
        assert!((ob[1] - 1.0).abs() < 1e-6);
        assert_eq!(ob[2], 1.0);
    }

    #[test]
    fn captured_evader_masked() {
        let cfg = builtin_env("4p2e3o").unwrap();
        let mut s = world(
            vec![Pose::new(1.8, 1.0, 0.0), Pose::new(0.5, 0.5, 0.0), Pose::new(3.0, 0.5, 0.0), Pose::new(2.5, 0.5, 0.0)],
            vec![Pose::new(1.8, 1.5, 0.0), Pose::new(1.8, 2.0, 0.0)],
        );
        s.captured[0] = true;
        let o = observe(&cfg, &s, 0).unwrap();
        let l = ObsLayout::new(&cfg);
        assert_eq!(&o.0[l.evader_range()][0..3], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn layout_length() {
        let cfg = builtin_env("4p3e5o").unwrap();
        let l = ObsLayout::new(&cfg);
        assert_eq!(l.len(), 4 + 9 + 3 + 9);
        assert_eq!(l.teammate_range().end, l.len());
    }

    #[test]
    fn bad_agent_id() {
        let cfg = builtin_env("4p2e3o").unwrap();
        let (s, _) = crate::sim::reset(&cfg, 0).unwrap();
        assert_eq!(observe(&cfg, &s, 4).unwrap_err(), SimError::AgentId(4));
    }
}
