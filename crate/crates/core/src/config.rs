//! Environment configuration: the `players` / `site` / `task` JSON document,
//! its validation rules, and the four shipped scenarios.
//!
//! Field names follow the configurator file layout exactly (snake_case keys,
//! nested `boundary`, obstacles keyed by name). Unknown keys are rejected.

use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Obstacle, Rect, Vec2};

/// Identifiers accepted in `unseen_drones` besides `ckpt:<path>` references.
pub const SCRIPTED_IDS: &[&str] = &["greedy", "vicsek", "random", "evader:potential"];

/// Names of the built-in scenarios.
pub const BUILTIN_ENVS: &[&str] = &["4p2e3o", "4p2e1o", "4p2e5o", "4p3e5o"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RespawnRegions {
    pub pursuer: Rect,
    pub evader: Rect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlayersCfg {
    pub num_p: usize,
    pub num_e: usize,
    pub num_ctrl: usize,
    pub num_unctrl: usize,
    pub random_respawn: bool,
    #[serde(rename = "respawn_region")]
    pub respawn_regions: RespawnRegions,
    pub reception_range: f64,
    pub velocity_p: f64,
    pub velocity_e: f64,
    pub unseen_drones: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Boundary {
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteCfg {
    pub boundary: Boundary,
    pub obstacles: IndexMap<String, Obstacle>,
}

impl SiteCfg {
    pub fn boundary_width(&self) -> f64 {
        self.boundary.width
    }

    pub fn boundary_height(&self) -> f64 {
        self.boundary.height
    }

    pub fn arena(&self) -> Rect {
        Rect { x_min: 0.0, y_min: 0.0, x_max: self.boundary.width, y_max: self.boundary.height }
    }

    /// Obstacles in document order.
    pub fn obstacle_list(&self) -> Vec<Obstacle> {
        self.obstacles.values().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskCfg {
    pub task_name: String,
    pub capture_range: f64,
    pub safe_radius: f64,
    /// Episode length in simulation steps.
    pub task_horizon: u32,
    pub fps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub players: PlayersCfg,
    pub site: SiteCfg,
    pub task: TaskCfg,
}

impl EnvConfig {
    pub fn dt(&self) -> f64 {
        1.0 / self.task.fps
    }

    /// Center-distance threshold below which two pursuers collide.
    pub fn drone_collision_distance(&self) -> f64 {
        2.0 * self.task.safe_radius
    }

    /// Clearance threshold below which a pursuer hits an obstacle or wall.
    pub fn obstacle_collision_clearance(&self) -> f64 {
        self.task.safe_radius
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("EnvConfig serializes")
    }

    /// Copy with a different episode horizon, used for reduced experiments.
    pub fn with_horizon(mut self, steps: u32) -> Self {
        self.task.task_horizon = steps;
        self
    }
}

/// One violated invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// JSON-style location of the offending value.
    pub path: String,
    pub message: String,
}

impl Violation {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self { path: path.into(), message: message.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("JSON syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("invalid configuration: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("unknown built-in environment '{0}' (expected one of 4p2e3o, 4p2e1o, 4p2e5o, 4p3e5o)")]
    UnknownEnv(String),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.message.as_str()).collect::<Vec<_>>().join("; ")
}

/// Parse and validate a configuration document.
pub fn parse_config(text: &str) -> Result<EnvConfig, ConfigError> {
    let cfg = parse_config_unchecked(text)?;
    let violations = validate_config(&cfg);
    if violations.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::Invalid(violations))
    }
}

/// Parse without running [`validate_config`]. Schema errors (missing field,
/// type mismatch, unknown key) are still reported with their JSON path.
pub fn parse_config_unchecked(text: &str) -> Result<EnvConfig, ConfigError> {
    // Syntax first so that syntax errors are not reported as schema errors.
    if let Err(e) = serde_json::from_str::<serde_json::Value>(text) {
        return Err(ConfigError::Syntax { line: e.line(), column: e.column(), message: e.to_string() });
    }
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ConfigError::Schema { path: if path == "." { "$".into() } else { format!("$.{path}") }, message: e.into_inner().to_string() }
    })
}

fn check_positive(out: &mut Vec<Violation>, path: &str, name: &str, v: f64) {
    if !(v.is_finite() && v > 0.0) {
        out.push(Violation::new(path, format!("{name} must be positive")));
    }
}

fn check_rect_well_formed(out: &mut Vec<Violation>, path: &str, r: &Rect) -> bool {
    let finite = [r.x_min, r.x_max, r.y_min, r.y_max].iter().all(|v| v.is_finite());
    if !finite || r.x_max <= r.x_min || r.y_max <= r.y_min {
        out.push(Violation::new(path, "respawn region must have positive extent"));
        return false;
    }
    true
}

fn obstacle_well_formed(o: &Obstacle) -> bool {
    let c = o.center();
    if !(c.x.is_finite() && c.y.is_finite()) {
        return false;
    }
    match *o {
        Obstacle::Circle { radius, .. } => radius.is_finite() && radius > 0.0,
        Obstacle::Rectangle { half_extents, .. } => half_extents.iter().all(|h| h.is_finite() && *h > 0.0),
    }
}

fn rect_inside(inner: &Rect, outer: &Rect) -> bool {
    inner.x_min >= outer.x_min && inner.y_min >= outer.y_min && inner.x_max <= outer.x_max && inner.y_max <= outer.y_max
}

/// Return every violated invariant (empty = valid).
pub fn validate_config(cfg: &EnvConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let p = &cfg.players;
    if p.num_ctrl + p.num_unctrl != p.num_p {
        out.push(Violation::new("$.players.num_ctrl", "num_ctrl+num_unctrl != num_p"));
    }
    if p.num_p == 0 {
        out.push(Violation::new("$.players.num_p", "num_p must be at least 1"));
    }
    if p.num_e == 0 {
        out.push(Violation::new("$.players.num_e", "num_e must be at least 1"));
    }
    check_positive(&mut out, "$.players.velocity_p", "velocity_p", p.velocity_p);
    check_positive(&mut out, "$.players.velocity_e", "velocity_e", p.velocity_e);
    check_positive(&mut out, "$.players.reception_range", "reception_range", p.reception_range);
    for (i, id) in p.unseen_drones.iter().enumerate() {
        let known = SCRIPTED_IDS.contains(&id.as_str()) || (id.starts_with("ckpt:") && id.len() > 5);
        if !known {
            out.push(Violation::new(format!("$.players.unseen_drones[{i}]"), format!("unknown unseen drone id '{id}'")));
        }
    }

    let b = cfg.site.boundary;
    check_positive(&mut out, "$.site.boundary.width", "boundary_width", b.width);
    check_positive(&mut out, "$.site.boundary.height", "boundary_height", b.height);
    let arena = cfg.site.arena();

    let t = &cfg.task;
    check_positive(&mut out, "$.task.capture_range", "capture_range", t.capture_range);
    check_positive(&mut out, "$.task.safe_radius", "safe_radius", t.safe_radius);
    if t.task_horizon < 1 {
        out.push(Violation::new("$.task.task_horizon", "task_horizon must be at least 1"));
    }
    check_positive(&mut out, "$.task.fps", "fps", t.fps);

    let mut good_obstacles = Vec::new();
    for (name, o) in &cfg.site.obstacles {
        let path = format!("$.site.obstacles.{name}");
        if !obstacle_well_formed(o) {
            out.push(Violation::new(path, "obstacle size must be positive"));
            continue;
        }
        if !rect_inside(&o.bounds(), &arena) {
            out.push(Violation::new(path, "obstacle outside boundary"));
            continue;
        }
        good_obstacles.push((name, o));
    }

    let inflate = if t.safe_radius.is_finite() && t.safe_radius > 0.0 { t.safe_radius } else { 0.0 };
    for (role, r) in [("pursuer", &p.respawn_regions.pursuer), ("evader", &p.respawn_regions.evader)] {
        let path = format!("$.players.respawn_region.{role}");
        if !check_rect_well_formed(&mut out, &path, r) {
            continue;
        }
        if !rect_inside(r, &arena) {
            out.push(Violation::new(path, "respawn region outside boundary"));
            continue;
        }
        for (name, o) in &good_obstacles {
            if region_hits_obstacle(r, o, inflate) {
                out.push(Violation::new(path.clone(), format!("respawn region intersects obstacle ({name})")));
            }
        }
    }
    out
}

/// Does `region` touch the obstacle grown by `inflate`?
pub fn region_hits_obstacle(region: &Rect, o: &Obstacle, inflate: f64) -> bool {
    let d = o.distance_to_rect(region);
    d <= 0.0 || d < inflate
}

const ENV_4P2E3O: &str = include_str!("../assets/envs/v1/4p2e3o.json");
const ENV_4P2E1O: &str = include_str!("../assets/envs/v1/4p2e1o.json");
const ENV_4P2E5O: &str = include_str!("../assets/envs/v1/4p2e5o.json");
const ENV_4P3E5O: &str = include_str!("../assets/envs/v1/4p3e5o.json");

/// JSON-Schema document describing the configuration format.
pub const CONFIG_SCHEMA: &str = include_str!("../assets/schema/env_config.schema.json");

/// Shipped document text for a built-in scenario.
pub fn builtin_env_text(name: &str) -> Result<&'static str, ConfigError> {
    match name {
        "4p2e3o" => Ok(ENV_4P2E3O),
        "4p2e1o" => Ok(ENV_4P2E1O),
        "4p2e5o" => Ok(ENV_4P2E5O),
        "4p3e5o" => Ok(ENV_4P3E5O),
        other => Err(ConfigError::UnknownEnv(other.to_string())),
    }
}

/// One of the four built-in scenarios.
pub fn builtin_env(name: &str) -> Result<EnvConfig, ConfigError> {
    parse_config(builtin_env_text(name)?)
}

/// Resolve either a built-in name or a path to a JSON document.
pub fn load_env(name_or_path: &str) -> Result<EnvConfig, LoadError> {
    if BUILTIN_ENVS.contains(&name_or_path) {
        return Ok(builtin_env(name_or_path)?);
    }
    let text = std::fs::read_to_string(name_or_path).map_err(|e| LoadError::Io(name_or_path.to_string(), e))?;
    Ok(parse_config(&text)?)
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {0}: {1}")]
    Io(String, std::io::Error),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Fixed placement used when `random_respawn` is false: agents evenly spaced
/// along the horizontal midline of their region, pursuers facing +y and
/// evaders facing -y.
pub fn fixed_layout(region: &Rect, count: usize, heading: f64) -> Vec<(Vec2, f64)> {
    let y = 0.5 * (region.y_min + region.y_max);
    (0..count)
        .map(|i| {
            let x = region.x_min + region.width() * (i as f64 + 0.5) / count as f64;
            (Vec2::new(x, y), heading)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc() -> serde_json::Value {
        serde_json::from_str(ENV_4P2E1O).unwrap()
    }

    #[test]
    fn appendix_example_values() {
        let cfg = builtin_env("4p2e1o").unwrap();
        assert_eq!(cfg.players.num_p, 4);
        assert_eq!(cfg.players.num_e, 2);
        assert_eq!(cfg.players.num_ctrl, 2);
        assert_eq!(cfg.players.num_unctrl, 2);
        assert_eq!(cfg.players.reception_range, 2.0);
        assert_eq!(cfg.players.velocity_p, 0.3);
        assert_eq!(cfg.players.velocity_e, 0.6);
        assert_eq!(cfg.site.boundary.width, 3.6);
        assert_eq!(cfg.site.boundary.height, 5.0);
        assert_eq!(cfg.task.capture_range, 0.2);
        assert_eq!(cfg.task.safe_radius, 0.1);
        assert_eq!(cfg.task.fps, 10.0);
    }

    #[test]
    fn ctrl_count_mismatch() {
        let mut v = doc();
        v["players"]["num_ctrl"] = 3.into();
        match parse_config(&v.to_string()) {
            Err(ConfigError::Invalid(vs)) => {
                assert_eq!(vs.len(), 1);
                assert_eq!(vs[0].message, "num_ctrl+num_unctrl != num_p");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn obstacle_outside_boundary() {
        let mut v = doc();
        v["site"]["obstacles"]["far"] = serde_json::json!({"shape": "circle", "center": [10.0, 10.0], "radius": 0.2});
        match parse_config(&v.to_string()) {
            Err(ConfigError::Invalid(vs)) => {
                assert!(vs.iter().any(|x| x.message == "obstacle outside boundary"), "{vs:?}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_capture_range_single_violation() {
        let mut cfg = builtin_env("4p2e3o").unwrap();
        cfg.task.capture_range = -0.2;
        let vs = validate_config(&cfg);
        let msgs: Vec<_> = vs.iter().map(|v| v.message.as_str()).collect();
        assert_eq!(msgs, vec!["capture_range must be positive"]);
    }

    #[test]
    fn all_violations_reported() {
        let mut cfg = builtin_env("4p2e3o").unwrap();
        cfg.task.capture_range = -1.0;
        cfg.task.fps = 0.0;
        cfg.players.velocity_e = -0.6;
        assert_eq!(validate_config(&cfg).len(), 3);
    }

    #[test]
    fn schema_errors_carry_path() {
        let mut v = doc();
        v["task"]["fps"] = "ten".into();
        let err = parse_config(&v.to_string()).unwrap_err();
        match err {
            ConfigError::Schema { path, .. } => assert_eq!(path, "$.task.fps"),
            other => panic!("unexpected {other:?}"),
        }

        let mut v = doc();
        v["players"].as_object_mut().unwrap().remove("velocity_p");
        match parse_config(&v.to_string()).unwrap_err() {
            ConfigError::Schema { path, message } => {
                assert!(path.starts_with("$.players"), "{path}");
                assert!(message.contains("velocity_p"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut v = doc();
        v["task"]["capture_rnage"] = 0.2.into();
        match parse_config(&v.to_string()).unwrap_err() {
            ConfigError::Schema { path, message } => {
                assert_eq!(path, "$.task.capture_rnage");
                assert!(message.contains("capture_rnage"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let mut v = doc();
        v["site"]["obstacles"]["obstacle1"]["color"] = "red".into();
        assert!(matches!(parse_config(&v.to_string()), Err(ConfigError::Schema { .. })));
    }

    #[test]
    fn syntax_error() {
        assert!(matches!(parse_config("{\"players\": "), Err(ConfigError::Syntax { .. })));
    }

    #[test]
    fn unknown_builtin() {
        assert!(matches!(builtin_env("4p9e9o"), Err(ConfigError::UnknownEnv(_))));
    }

    #[test]
    fn fixed_layout_spacing() {
        let r = Rect { x_min: 0.2, y_min: 0.2, x_max: 3.4, y_max: 0.8 };
        let l = fixed_layout(&r, 4, 0.0);
        assert_eq!(l.len(), 4);
        assert!((l[0].0.x - 0.6).abs() < 1e-12);
        assert!((l[3].0.x - 3.0).abs() < 1e-12);
        assert!(l.iter().all(|(p, _)| (p.y - 0.5).abs() < 1e-12));
    }
}
