//! Planar geometry shared by the simulator, the scripted policies and config
//! validation. Everything is top-down 2D, meters, with the arena spanning
//! `[0, width] x [0, height]`.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        Self::new(theta.cos(), theta.sin())
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    /// Unit vector, or zero when the input is (numerically) zero.
    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        if n > 1e-12 {
            self * (1.0 / n)
        } else {
            Vec2::ZERO
        }
    }

    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).norm()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wrap an angle into `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut a = theta % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Axis-aligned rectangle given by its corners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn center(&self) -> Vec2 {
        Vec2::new(0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    /// Euclidean distance from `p` to the closed rectangle (0 inside).
    pub fn distance_to_point(&self, p: Vec2) -> f64 {
        let dx = (self.x_min - p.x).max(0.0).max(p.x - self.x_max);
        let dy = (self.y_min - p.y).max(0.0).max(p.y - self.y_max);
        dx.hypot(dy)
    }

    /// Euclidean distance between two closed rectangles (0 when they overlap).
    pub fn distance_to_rect(&self, o: &Rect) -> f64 {
        let gx = (o.x_min - self.x_max).max(self.x_min - o.x_max).max(0.0);
        let gy = (o.y_min - self.y_max).max(self.y_min - o.y_max).max(0.0);
        gx.hypot(gy)
    }
}

/// Static obstacle footprint. Cubes become rectangles and cylinders circles
/// in the top-down projection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase", deny_unknown_fields)]
pub enum Obstacle {
    Circle { center: [f64; 2], radius: f64 },
    Rectangle { center: [f64; 2], half_extents: [f64; 2] },
}

impl Obstacle {
    pub fn center(&self) -> Vec2 {
        match *self {
            Obstacle::Circle { center, .. } | Obstacle::Rectangle { center, .. } => {
                Vec2::new(center[0], center[1])
            }
        }
    }

    /// Bounding box of the footprint.
    pub fn bounds(&self) -> Rect {
        let c = self.center();
        let (hx, hy) = match *self {
            Obstacle::Circle { radius, .. } => (radius, radius),
            Obstacle::Rectangle { half_extents, .. } => (half_extents[0], half_extents[1]),
        };
        Rect {
            x_min: c.x - hx,
            y_min: c.y - hy,
            x_max: c.x + hx,
            y_max: c.y + hy,
        }
    }

    /// Signed clearance from `p` to the obstacle surface (negative inside).
    pub fn clearance(&self, p: Vec2) -> f64 {
        match *self {
            Obstacle::Circle { radius, .. } => p.distance(self.center()) - radius,
            Obstacle::Rectangle { half_extents, .. } => {
                let c = self.center();
                let qx = (p.x - c.x).abs() - half_extents[0];
                let qy = (p.y - c.y).abs() - half_extents[1];
                let outside = Vec2::new(qx.max(0.0), qy.max(0.0)).norm();
                outside + qx.max(qy).min(0.0)
            }
        }
    }

    /// Closest point on the obstacle surface to `p`.
    pub fn closest_surface_point(&self, p: Vec2) -> Vec2 {
        let c = self.center();
        match *self {
            Obstacle::Circle { radius, .. } => {
                let d = p - c;
                let dir = if d.norm() > 1e-12 { d.normalized() } else { Vec2::new(1.0, 0.0) };
                c + dir * radius
            }
            Obstacle::Rectangle { half_extents, .. } => {
                let [hx, hy] = half_extents;
                let lx = p.x - c.x;
                let ly = p.y - c.y;
                if lx.abs() <= hx && ly.abs() <= hy {
                    // inside: push to the nearest face
                    if hx - lx.abs() < hy - ly.abs() {
                        Vec2::new(c.x + hx.copysign(lx), p.y)
                    } else {
                        Vec2::new(p.x, c.y + hy.copysign(ly))
                    }
                } else {
                    Vec2::new(c.x + lx.clamp(-hx, hx), c.y + ly.clamp(-hy, hy))
                }
            }
        }
    }

    /// Distance between the footprint and an axis-aligned rectangle (0 when
    /// they overlap).
    pub fn distance_to_rect(&self, r: &Rect) -> f64 {
        match *self {
            Obstacle::Circle { radius, .. } => (r.distance_to_point(self.center()) - radius).max(0.0),
            Obstacle::Rectangle { .. } => self.bounds().distance_to_rect(r),
        }
    }

    /// Distance between two footprints (0 when they overlap).
    pub fn distance_to(&self, o: &Obstacle) -> f64 {
        match (*self, *o) {
            (Obstacle::Circle { radius: ra, .. }, Obstacle::Circle { radius: rb, .. }) => {
                (self.center().distance(o.center()) - ra - rb).max(0.0)
            }
            (Obstacle::Circle { .. }, Obstacle::Rectangle { .. }) => self.distance_to_rect(&o.bounds()),
            (Obstacle::Rectangle { .. }, Obstacle::Circle { .. }) => o.distance_to_rect(&self.bounds()),
            (Obstacle::Rectangle { .. }, Obstacle::Rectangle { .. }) => self.bounds().distance_to_rect(&o.bounds()),
        }
    }
}

/// Wall distances for a point inside the arena: clearance to the nearest wall
/// and the closest point on it.
pub fn nearest_wall(p: Vec2, width: f64, height: f64) -> (f64, Vec2) {
    let candidates = [
        (p.x, Vec2::new(0.0, p.y)),
        (width - p.x, Vec2::new(width, p.y)),
        (p.y, Vec2::new(p.x, 0.0)),
        (height - p.y, Vec2::new(p.x, height)),
    ];
    let mut best = candidates[0];
    for c in &candidates[1..] {
        if c.0 < best.0 {
            best = *c;
        }
    }
    best
}
