//! Planar footprint geometry: containment, positive-area overlap and
//! bounding boxes for yawed rectangles, discs and points.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::dsl::{AssetKind, FootprintShape};

/// Separation slack. Shapes that merely touch do not overlap.
pub const GEOM_EPS: f64 = 1e-9;

/// Footprint in the object frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Footprint {
    Rect { hx: f64, hy: f64 },
    Disc { r: f64 },
    Point,
}

impl Footprint {
    pub fn for_asset(kind: AssetKind, size: [f64; 3]) -> Self {
        match kind.footprint() {
            FootprintShape::Rect => Self::Rect {
                hx: size[0] / 2.0,
                hy: size[1] / 2.0,
            },
            FootprintShape::Disc => Self::Disc {
                r: size[0].max(size[1]) / 2.0,
            },
        }
    }

    pub fn area(&self) -> f64 {
        match *self {
            Self::Rect { hx, hy } => 4.0 * hx * hy,
            Self::Disc { r } => PI * r * r,
            Self::Point => 0.0,
        }
    }

    pub fn at(self, x: f64, y: f64, yaw: f64) -> Shape {
        Shape { fp: self, x, y, yaw }
    }
}

/// A footprint placed in the world frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Shape {
    pub fp: Footprint,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

/// Axis-aligned box `[x0, x1] x [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

/// Wraps an angle into `[-pi, pi)`.
pub fn normalize_yaw(yaw: f64) -> f64 {
    let t = (yaw + PI).rem_euclid(TAU) - PI;
    // rem_euclid can round up to TAU itself for tiny negative inputs
    if t >= PI {
        t - TAU
    } else {
        t
    }
}

impl Shape {
    fn to_local(&self, px: f64, py: f64) -> (f64, f64) {
        let (s, c) = self.yaw.sin_cos();
        let (dx, dy) = (px - self.x, py - self.y);
        (c * dx + s * dy, -s * dx + c * dy)
    }

    /// Closed containment of a point.
    pub fn contains(&self, px: f64, py: f64) -> bool {
        match self.fp {
            Footprint::Rect { hx, hy } => {
                let (lx, ly) = self.to_local(px, py);
                lx.abs() <= hx + GEOM_EPS && ly.abs() <= hy + GEOM_EPS
            }
            Footprint::Disc { r } => (px - self.x).hypot(py - self.y) <= r + GEOM_EPS,
            Footprint::Point => (px - self.x).abs() <= GEOM_EPS && (py - self.y).abs() <= GEOM_EPS,
        }
    }

    pub fn aabb(&self) -> Aabb {
        let (ex, ey) = match self.fp {
            Footprint::Rect { hx, hy } => {
                let (s, c) = self.yaw.sin_cos();
                (hx * c.abs() + hy * s.abs(), hx * s.abs() + hy * c.abs())
            }
            Footprint::Disc { r } => (r, r),
            Footprint::Point => (0.0, 0.0),
        };
        Aabb {
            x0: self.x - ex,
            x1: self.x + ex,
            y0: self.y - ey,
            y1: self.y + ey,
        }
    }

    /// True when the interiors intersect with positive area. A point
    /// "overlaps" any shape that contains it.
    pub fn overlaps(&self, other: &Shape) -> bool {
        use Footprint::*;
        match (self.fp, other.fp) {
            (Point, Point) => false,
            (Point, _) => other.contains(self.x, self.y),
            (_, Point) => self.contains(other.x, other.y),
            (Disc { r: r1 }, Disc { r: r2 }) => (self.x - other.x).hypot(self.y - other.y) < r1 + r2 - GEOM_EPS,
            (Rect { hx, hy }, Disc { r }) => rect_disc(self, hx, hy, other.x, other.y, r),
            (Disc { r }, Rect { hx, hy }) => rect_disc(other, hx, hy, self.x, self.y, r),
            (Rect { hx: ax, hy: ay }, Rect { hx: bx, hy: by }) => rect_rect(self, ax, ay, other, bx, by),
        }
    }
}

fn rect_disc(rect: &Shape, hx: f64, hy: f64, cx: f64, cy: f64, r: f64) -> bool {
    let (lx, ly) = rect.to_local(cx, cy);
    let qx = lx.clamp(-hx, hx);
    let qy = ly.clamp(-hy, hy);
    (lx - qx).hypot(ly - qy) < r - GEOM_EPS
}

/// Separating-axis test on the four edge normals.
fn rect_rect(a: &Shape, ax: f64, ay: f64, b: &Shape, bx: f64, by: f64) -> bool {
    let (sa, ca) = a.yaw.sin_cos();
    let (sb, cb) = b.yaw.sin_cos();
    let axes = [(ca, sa), (-sa, ca), (cb, sb), (-sb, cb)];
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    axes.iter().all(|&(nx, ny)| {
        let ra = ax * (ca * nx + sa * ny).abs() + ay * (-sa * nx + ca * ny).abs();
        let rb = bx * (cb * nx + sb * ny).abs() + by * (-sb * nx + cb * ny).abs();
        (dx * nx + dy * ny).abs() < ra + rb - GEOM_EPS
    })
}
