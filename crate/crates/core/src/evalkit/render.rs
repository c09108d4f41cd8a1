use std::fmt::Write;

use crate::geometry::Obstacle;
use crate::sim::{CollisionKind, TrajectoryLog};

const SCALE: f64 = 100.0;
const MARGIN: f64 = 20.0;
const PURSUER: &str = "#d62728";
const EVADER: &str = "#1f77b4";

/// Top-down SVG of a logged episode: arena, obstacles, trails, final
/// positions, capture (ring) and collision (cross) markers. Output bytes
/// depend only on the log.
pub fn render_svg(log: &TrajectoryLog) -> String {
    let cfg = &log.config;
    let (w, h) = (cfg.site.boundary.width, cfg.site.boundary.height);
    let px = |x: f64| MARGIN + x * SCALE;
    let py = |y: f64| MARGIN + (h - y) * SCALE;
    let mut s = String::new();
    let (cw, ch) = (w * SCALE + 2.0 * MARGIN, h * SCALE + 2.0 * MARGIN);
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{cw:.0}" height="{ch:.0}" viewBox="0 0 {cw:.0} {ch:.0}">"#).unwrap();
    writeln!(s, r##"<rect x="0" y="0" width="{cw:.0}" height="{ch:.0}" fill="#ffffff"/>"##).unwrap();
    writeln!(
        s,
        r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#000000" stroke-width="2"/>"##,
        px(0.0),
        py(h),
        w * SCALE,
        h * SCALE
    )
    .unwrap();
    for (name, o) in &cfg.site.obstacles {
        match *o {
            Obstacle::Circle { center, radius } => writeln!(
                s,
                r##"<circle id="{name}" cx="{:.2}" cy="{:.2}" r="{:.2}" fill="#7f7f7f"/>"##,
                px(center[0]),
                py(center[1]),
                radius * SCALE
            ),
            Obstacle::Rectangle { center, half_extents } => writeln!(
                s,
                r##"<rect id="{name}" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#7f7f7f"/>"##,
                px(center[0] - half_extents[0]),
                py(center[1] + half_extents[1]),
                2.0 * half_extents[0] * SCALE,
                2.0 * half_extents[1] * SCALE
            ),
        }
        .unwrap();
    }
    let Some(last) = log.steps.last() else {
        s.push_str("</svg>\n");
        return s;
    };
    let trail = |s: &mut String, pts: Vec<[f64; 3]>, color: &str| {
        if pts.len() > 1 {
            let d: Vec<String> = pts.iter().map(|p| format!("{:.2},{:.2}", px(p[0]), py(p[1]))).collect();
            writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5" stroke-opacity="0.6"/>"#, d.join(" ")).unwrap();
        }
    };
    for i in 0..last.pursuers.len() {
        trail(&mut s, log.steps.iter().map(|r| r.pursuers[i]).collect(), PURSUER);
    }
    for i in 0..last.evaders.len() {
        trail(&mut s, log.steps.iter().map(|r| r.evaders[i]).collect(), EVADER);
    }
    for p in &last.pursuers {
        writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="6.00" fill="{PURSUER}"/>"#, px(p[0]), py(p[1])).unwrap();
    }
    for (i, e) in last.evaders.iter().enumerate() {
        let fill = if last.captured.get(i).copied().unwrap_or(false) { "none" } else { EVADER };
        writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="6.00" fill="{fill}" stroke="{EVADER}" stroke-width="2"/>"#, px(e[0]), py(e[1])).unwrap();
    }
    for r in &log.steps {
        for c in &r.events.captures {
            let e = r.evaders[c.evader];
            writeln!(s, r##"<circle cx="{:.2}" cy="{:.2}" r="12.00" fill="none" stroke="#2ca02c" stroke-width="2"/>"##, px(e[0]), py(e[1])).unwrap();
        }
        for c in &r.events.collisions {
            let p = r.pursuers[c.a];
            let q = match c.kind {
                CollisionKind::DroneDrone => {
                    let b = r.pursuers[c.b];
                    [(p[0] + b[0]) / 2.0, (p[1] + b[1]) / 2.0]
                }
                _ => [p[0], p[1]],
            };
            let (x, y) = (px(q[0]), py(q[1]));
            writeln!(
                s,
                r##"<path d="M{:.2} {:.2} L{:.2} {:.2} M{:.2} {:.2} L{:.2} {:.2}" stroke="#000000" stroke-width="2"/>"##,
                x - 8.0,
                y - 8.0,
                x + 8.0,
                y + 8.0,
                x - 8.0,
                y + 8.0,
                x + 8.0,
                y - 8.0
            )
            .unwrap();
        }
    }
    s.push_str("</svg>\n");
    s
}
