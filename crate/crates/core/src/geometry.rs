//! Planar oriented bounding boxes used to approximate rod-shaped cells.

use serde::{Deserialize, Serialize};

/// A point or vector in the imaging plane, in micrometers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn scale(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

/// A rectangle with arbitrary orientation.
///
/// `half_len` runs along the long axis at `angle` radians from the x-axis,
/// `half_wid` along the perpendicular.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub center: Vec2,
    pub half_len: f64,
    pub half_wid: f64,
    pub angle: f64,
}

/// A closed line segment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub a: Vec2,
    pub b: Vec2,
}

impl Segment {
    pub fn length(&self) -> f64 {
        (self.b - self.a).norm()
    }

    pub fn at(&self, s: f64) -> Vec2 {
        self.a + (self.b - self.a).scale(s)
    }
}

impl OrientedBox {
    pub fn new(center: Vec2, half_len: f64, half_wid: f64, angle: f64) -> Self {
        Self {
            center,
            half_len,
            half_wid,
            angle,
        }
    }

    /// Unit vectors of the long and short axes.
    pub fn axes(&self) -> (Vec2, Vec2) {
        let (s, c) = self.angle.sin_cos();
        (Vec2::new(c, s), Vec2::new(-s, c))
    }

    /// Corners in counter-clockwise order.
    pub fn corners(&self) -> [Vec2; 4] {
        let (u, v) = self.axes();
        let du = u.scale(self.half_len);
        let dv = v.scale(self.half_wid);
        let c = self.center;
        [c + du + dv, c - du + dv, c - du - dv, c + du - dv]
    }

    pub fn edges(&self) -> [Segment; 4] {
        let k = self.corners();
        [
            Segment { a: k[0], b: k[1] },
            Segment { a: k[1], b: k[2] },
            Segment { a: k[2], b: k[3] },
            Segment { a: k[3], b: k[0] },
        ]
    }

    pub fn perimeter(&self) -> f64 {
        4.0 * (self.half_len + self.half_wid)
    }

    /// Radius of the circumscribed circle.
    pub fn bounding_radius(&self) -> f64 {
        self.half_len.hypot(self.half_wid)
    }

    /// Euclidean distance from `p` to the box; zero inside.
    pub fn point_distance(&self, p: Vec2) -> f64 {
        let (u, v) = self.axes();
        let d = p - self.center;
        let dx = (d.dot(u).abs() - self.half_len).max(0.0);
        let dy = (d.dot(v).abs() - self.half_wid).max(0.0);
        dx.hypot(dy)
    }

    fn project(&self, axis: Vec2) -> (f64, f64) {
        let corners = self.corners();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for c in corners {
            let p = c.dot(axis);
            lo = lo.min(p);
            hi = hi.max(p);
        }
        (lo, hi)
    }

    /// Separating-axis overlap test.
    pub fn intersects(&self, other: &OrientedBox) -> bool {
        let (u1, v1) = self.axes();
        let (u2, v2) = other.axes();
        for axis in [u1, v1, u2, v2] {
            let (a0, a1) = self.project(axis);
            let (b0, b1) = other.project(axis);
            if a1 < b0 || b1 < a0 {
                return false;
            }
        }
        true
    }

    /// Minimum distance between the two boxes, zero when they overlap.
    ///
    /// For disjoint convex polygons the closest pair always involves a vertex
    /// of one polygon, so vertex-to-box distances in both directions suffice.
    pub fn separation(&self, other: &OrientedBox) -> f64 {
        if self.intersects(other) {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        for c in self.corners() {
            best = best.min(other.point_distance(c));
        }
        for c in other.corners() {
            best = best.min(self.point_distance(c));
        }
        best
    }

    pub fn translated(&self, by: Vec2) -> OrientedBox {
        OrientedBox {
            center: self.center + by,
            ..*self
        }
    }
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Length of the part of `seg` lying within `range` of `target`.
///
/// Distance to a convex set is convex along a line, so the qualifying part of
/// the segment is a single interval; its end points are located by bisection.
pub fn segment_length_within(seg: &Segment, target: &OrientedBox, range: f64) -> f64 {
    let len = seg.length();
    if len == 0.0 {
        return 0.0;
    }
    let dist = |s: f64| target.point_distance(seg.at(s));
    let tol = 1e-12;

    // golden-section search for the minimiser on [0, 1]
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut x1 = hi - GOLDEN * (hi - lo);
    let mut x2 = lo + GOLDEN * (hi - lo);
    let mut f1 = dist(x1);
    let mut f2 = dist(x2);
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - GOLDEN * (hi - lo);
            f1 = dist(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + GOLDEN * (hi - lo);
            f2 = dist(x2);
        }
    }
    let mut s_min = 0.5 * (lo + hi);
    let mut d_min = dist(s_min);
    for s in [0.0, 1.0] {
        let d = dist(s);
        if d < d_min {
            d_min = d;
            s_min = s;
        }
    }
    if d_min > range {
        return 0.0;
    }

    let crossing = |mut inside: f64, mut outside: f64| -> f64 {
        while (outside - inside).abs() > tol {
            let mid = 0.5 * (inside + outside);
            if dist(mid) <= range {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        0.5 * (inside + outside)
    };
    let left = if dist(0.0) <= range {
        0.0
    } else {
        crossing(s_min, 0.0)
    };
    let right = if dist(1.0) <= range {
        1.0
    } else {
        crossing(s_min, 1.0)
    };
    (right - left).max(0.0) * len
}

/// Fraction of the perimeter of `subject` within `range` of `target`.
pub fn perimeter_fraction_within(subject: &OrientedBox, target: &OrientedBox, range: f64) -> f64 {
    let total = subject.perimeter();
    if total <= 0.0 {
        return 0.0;
    }
    let covered: f64 = subject
        .edges()
        .iter()
        .map(|e| segment_length_within(e, target, range))
        .sum();
    (covered / total).clamp(0.0, 1.0)
}
