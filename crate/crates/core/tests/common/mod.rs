//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use pursuit_lab::config::EnvConfig;
use pursuit_lab::geometry::Obstacle;
use pursuit_lab::population::{combinations, Hypergraph};
use pursuit_lab::sim::{CollisionKind, WorldState};

/// `A_t = sum_k (gamma lambda)^(k-t) delta_k` written out per `t`, with the
/// sum cut after the first terminal at or after `t`.
pub fn oracle_gae(r: &[f64], v: &[f64], d: &[bool], boot: f64, g: f64, l: f64) -> Vec<f64> {
    let n = r.len();
    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        let mut end = n - 1;
        for k in t..n {
            if d[k] {
                end = k;
                break;
            }
        }
        let mut a = 0.0;
        for k in t..=end {
            let next = if d[k] {
                0.0
            } else if k + 1 < n {
                v[k + 1]
            } else {
                boot
            };
            a += (g * l).powi((k - t) as i32) * (r[k] + g * next - v[k]);
        }
        out.push(a);
    }
    out
}

pub fn oracle_outgoing(g: &Hypergraph, node: usize) -> usize {
    let mut cands: Vec<(f64, Vec<usize>, usize)> =
        g.edges.iter().enumerate().filter(|(_, e)| e.members.contains(&node)).map(|(i, e)| (-e.weight, e.members.clone(), i)).collect();
    cands.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    cands[0].2
}

pub fn oracle_eta(g: &Hypergraph, node: usize) -> f64 {
    let out: Vec<usize> = (0..g.nodes.len()).map(|i| oracle_outgoing(g, i)).collect();
    let mut incoming = 0;
    for (j, e) in out.iter().enumerate() {
        if j != node && g.edges[*e].members.iter().any(|&m| m == node) {
            incoming += 1;
        }
    }
    let mut degree = 0;
    for e in &g.edges {
        if e.members.iter().any(|&m| m == node) {
            degree += 1;
        }
    }
    incoming as f64 / degree as f64
}

pub fn oracle_rho(subsets: &[Vec<usize>], eta: &[f64], eps: f64) -> Vec<f64> {
    let w: Vec<f64> = subsets
        .iter()
        .map(|s| {
            let mean = s.iter().map(|&i| eta[i]).sum::<f64>() / s.len() as f64;
            1.0 / (mean + eps)
        })
        .collect();
    let z: f64 = w.iter().sum();
    w.iter().map(|x| x / z).collect()
}

/// Exhaustive check that `learners` maximizes the summed centrality over
/// all subsets of the same size.
pub fn is_preference_optimal(eta: &[f64], learners: &[usize]) -> bool {
    let best = combinations(&(0..eta.len()).collect::<Vec<_>>(), learners.len())
        .iter()
        .map(|s| s.iter().map(|&i| eta[i]).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max);
    learners.iter().map(|&i| eta[i]).sum::<f64>() >= best
}

/// Signed distance from `(x, y)` to an obstacle surface, negative inside.
pub fn oracle_clearance(o: &Obstacle, x: f64, y: f64) -> f64 {
    match *o {
        Obstacle::Circle { center, radius } => ((x - center[0]).powi(2) + (y - center[1]).powi(2)).sqrt() - radius,
        Obstacle::Rectangle { center, half_extents } => {
            let dx = (x - center[0]).abs() - half_extents[0];
            let dy = (y - center[1]).abs() - half_extents[1];
            if dx <= 0.0 && dy <= 0.0 {
                dx.max(dy)
            } else {
                (dx.max(0.0).powi(2) + dy.max(0.0).powi(2)).sqrt()
            }
        }
    }
}

/// Every (kind, a, b) collision by exhaustive pair and obstacle scan.
pub fn oracle_collisions(cfg: &EnvConfig, s: &WorldState) -> Vec<(CollisionKind, usize, usize)> {
    let dd = 2.0 * cfg.task.safe_radius;
    let sr = cfg.task.safe_radius;
    let (w, h) = (cfg.site.boundary.width, cfg.site.boundary.height);
    let mut out = Vec::new();
    for i in 0..s.pursuers.len() {
        let (x, y) = (s.pursuers[i].x, s.pursuers[i].y);
        for j in 0..s.pursuers.len() {
            if i < j && ((x - s.pursuers[j].x).powi(2) + (y - s.pursuers[j].y).powi(2)).sqrt() < dd {
                out.push((CollisionKind::DroneDrone, i, j));
            }
        }
        for (k, o) in cfg.site.obstacles.values().enumerate() {
            if oracle_clearance(o, x, y) < sr {
                out.push((CollisionKind::DroneObstacle, i, k));
            }
        }
        let walls = [x, w - x, y, h - y];
        for (k, c) in walls.iter().enumerate() {
            if *c < sr {
                out.push((CollisionKind::DroneWall, i, k));
            }
        }
    }
    out.sort();
    out
}

/// (evader, capturing pursuer) for live evaders with a pursuer in range;
/// the nearest pursuer captures, lowest index on ties.
pub fn oracle_captures(cfg: &EnvConfig, s: &WorldState) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for e in 0..s.evaders.len() {
        if s.captured[e] {
            continue;
        }
        let d: Vec<f64> = s.pursuers.iter().map(|p| ((p.x - s.evaders[e].x).powi(2) + (p.y - s.evaders[e].y).powi(2)).sqrt()).collect();
        let best = (0..d.len()).min_by(|a, b| d[*a].partial_cmp(&d[*b]).unwrap().then(a.cmp(b)));
        if let Some(i) = best {
            if d[i] <= cfg.task.capture_range {
                out.push((e, i));
            }
        }
    }
    out
}
