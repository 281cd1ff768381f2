//! Planar geometry primitives: vectors, segments, discs and capsules.
//!
//! Penetration queries return a unit push direction together with a depth;
//! moving the first shape by `normal * depth` separates the pair (exactly for
//! disc pairs, to first order for the capsule cases).

use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn from_angle(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Vec2 { x: c, y: s }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn normalized_or(self, fallback: Vec2) -> Vec2 {
        let n = self.norm();
        if n > 1e-15 {
            self * (1.0 / n)
        } else {
            fallback
        }
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
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
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: Vec2,
    pub b: Vec2,
}

impl Segment {
    pub fn new(a: Vec2, b: Vec2) -> Self {
        Segment { a, b }
    }

    pub fn closest_point(&self, p: Vec2) -> Vec2 {
        let ab = self.b - self.a;
        let len_sq = ab.norm_sq();
        if len_sq == 0.0 {
            return self.a;
        }
        let t = ((p - self.a).dot(ab) / len_sq).clamp(0.0, 1.0);
        self.a + ab * t
    }

    pub fn distance_to_point(&self, p: Vec2) -> f64 {
        (p - self.closest_point(p)).norm()
    }

    pub fn intersects(&self, o: &Segment) -> bool {
        let d1 = self.b - self.a;
        let d2 = o.b - o.a;
        let denom = d1.cross(d2);
        if denom == 0.0 {
            return false;
        }
        let w = o.a - self.a;
        let t = w.cross(d2) / denom;
        let u = w.cross(d1) / denom;
        (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u)
    }

    /// Closest points `(on self, on other)` between two segments.
    pub fn closest_points(&self, o: &Segment) -> (Vec2, Vec2) {
        // Candidates: the four endpoint projections. Crossing segments are
        // handled by callers through `intersects`.
        let c = [
            (self.a, o.closest_point(self.a)),
            (self.b, o.closest_point(self.b)),
            (self.closest_point(o.a), o.a),
            (self.closest_point(o.b), o.b),
        ];
        let mut best = c[0];
        let mut best_d = (c[0].0 - c[0].1).norm_sq();
        for &pair in &c[1..] {
            let d = (pair.0 - pair.1).norm_sq();
            if d < best_d {
                best = pair;
                best_d = d;
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Capsule {
    pub seg: Segment,
    pub radius: f64,
}

/// Push for a disc at `center` with radius `r` out of another disc.
pub fn disc_disc(center: Vec2, r: f64, other: Vec2, other_r: f64) -> Option<(Vec2, f64)> {
    let d = center - other;
    let dist = d.norm();
    let depth = r + other_r - dist;
    if depth > 0.0 {
        Some((d.normalized_or(Vec2::new(1.0, 0.0)), depth))
    } else {
        None
    }
}

/// Push for a disc out of a (zero-thickness) segment. `inside_hint` picks the
/// side to push toward when the center lies exactly on the segment.
pub fn disc_segment(center: Vec2, r: f64, seg: &Segment, inside_hint: Vec2) -> Option<(Vec2, f64)> {
    let cp = seg.closest_point(center);
    let d = center - cp;
    let dist = d.norm();
    let depth = r - dist;
    if depth > 0.0 {
        let fallback = {
            let n = (seg.b - seg.a).perp().normalized_or(Vec2::new(1.0, 0.0));
            if n.dot(inside_hint - cp) >= 0.0 {
                n
            } else {
                -n
            }
        };
        Some((d.normalized_or(fallback), depth))
    } else {
        None
    }
}

/// Push for a capsule out of a disc obstacle. The push direction is from the
/// disc center toward the closest capsule point; `hint` is used when they
/// coincide.
pub fn capsule_disc(cap: &Capsule, center: Vec2, r: f64, hint: Vec2) -> Option<(Vec2, f64)> {
    let cp = cap.seg.closest_point(center);
    let d = cp - center;
    let dist = d.norm();
    let depth = cap.radius + r - dist;
    if depth > 0.0 {
        Some((d.normalized_or(hint), depth))
    } else {
        None
    }
}

/// Push for a capsule out of a zero-thickness segment obstacle (a wall).
///
/// The push runs along the wall normal toward `inside` (a point known to be on
/// the free side, usually the agent base center) when the capsule crosses the
/// wall line, and along the closest-point direction otherwise.
pub fn capsule_segment(cap: &Capsule, wall: &Segment, inside: Vec2) -> Option<(Vec2, f64)> {
    if cap.seg.intersects(wall) {
        let mut n = (wall.b - wall.a).perp().normalized_or(Vec2::new(1.0, 0.0));
        if n.dot(inside - wall.a) < 0.0 {
            n = -n;
        }
        // Deepest capsule endpoint on the wrong side of the wall line.
        let da = n.dot(cap.seg.a - wall.a);
        let db = n.dot(cap.seg.b - wall.a);
        let depth = cap.radius - da.min(db);
        return Some((n, depth.max(cap.radius)));
    }
    let (on_cap, on_wall) = cap.seg.closest_points(wall);
    let d = on_cap - on_wall;
    let dist = d.norm();
    let depth = cap.radius - dist;
    if depth > 0.0 {
        let mut n = (wall.b - wall.a).perp().normalized_or(Vec2::new(1.0, 0.0));
        if n.dot(inside - wall.a) < 0.0 {
            n = -n;
        }
        Some((d.normalized_or(n), depth))
    } else {
        None
    }
}

/// Push for a movable disc out of a capsule (the disc moves).
pub fn disc_capsule(center: Vec2, r: f64, cap: &Capsule, hint: Vec2) -> Option<(Vec2, f64)> {
    capsule_disc(cap, center, r, -hint).map(|(n, depth)| (-n, depth))
}

/// Ray/segment intersection distance along `dir` (unit), if any.
pub fn ray_segment(origin: Vec2, dir: Vec2, seg: &Segment) -> Option<(f64, f64)> {
    let e = seg.b - seg.a;
    let denom = dir.cross(e);
    if denom == 0.0 {
        return None;
    }
    let w = seg.a - origin;
    let t = w.cross(e) / denom;
    let u = w.cross(dir) / denom;
    if t > 0.0 && (0.0..=1.0).contains(&u) {
        Some((t, u))
    } else {
        None
    }
}

/// Entry distance of a ray into a disc. Rays starting inside report no hit.
pub fn ray_disc(origin: Vec2, dir: Vec2, center: Vec2, r: f64) -> Option<f64> {
    let oc = origin - center;
    let b = oc.dot(dir);
    let c = oc.norm_sq() - r * r;
    if c <= 0.0 {
        return None;
    }
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let t = -b - disc.sqrt();
    (t > 0.0).then_some(t)
}

/// Distance at which a ray starting inside a disc leaves it.
pub fn ray_exit_disc(origin: Vec2, dir: Vec2, center: Vec2, r: f64) -> f64 {
    let oc = origin - center;
    let b = oc.dot(dir);
    let c = oc.norm_sq() - r * r;
    (-b + (b * b - c).max(0.0).sqrt()).max(0.0)
}

/// Entry distance of a ray into a capsule. Rays starting inside report no hit.
pub fn ray_capsule(origin: Vec2, dir: Vec2, cap: &Capsule) -> Option<f64> {
    let r = cap.radius;
    if cap.seg.distance_to_point(origin) <= r {
        return None;
    }
    let mut best: Option<f64> = None;
    let mut take = |t: f64| {
        if t > 0.0 && best.is_none_or(|b| t < b) {
            best = Some(t);
        }
    };
    if let Some(t) = ray_disc(origin, dir, cap.seg.a, r) {
        take(t);
    }
    if let Some(t) = ray_disc(origin, dir, cap.seg.b, r) {
        take(t);
    }
    let axis = cap.seg.b - cap.seg.a;
    let len = axis.norm();
    if len > 0.0 {
        let n = axis.perp() * (r / len);
        for side in [n, -n] {
            let s = Segment::new(cap.seg.a + side, cap.seg.b + side);
            if let Some((t, _)) = ray_segment(origin, dir, &s) {
                take(t);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ray_hits_disc_front_surface() {
        let t = ray_disc(Vec2::ZERO, Vec2::new(1.0, 0.0), Vec2::new(2.0, 0.0), 0.2).unwrap();
        assert!((t - 1.8).abs() < 1e-12);
        assert!(ray_disc(Vec2::ZERO, Vec2::new(-1.0, 0.0), Vec2::new(2.0, 0.0), 0.2).is_none());
    }

    #[test]
    fn ray_capsule_hits_side_and_caps() {
        let cap = Capsule {
            seg: Segment::new(Vec2::new(1.0, -1.0), Vec2::new(1.0, 1.0)),
            radius: 0.1,
        };
        let t = ray_capsule(Vec2::ZERO, Vec2::new(1.0, 0.0), &cap).unwrap();
        assert!((t - 0.9).abs() < 1e-12);
        let dir = Vec2::new(1.0, 1.05).normalized_or(Vec2::ZERO);
        assert!(ray_capsule(Vec2::ZERO, dir, &cap).is_some());
    }

    #[test]
    fn capsule_crossing_wall_pushes_back_inside() {
        let wall = Segment::new(Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0));
        let cap = Capsule {
            seg: Segment::new(Vec2::new(5.0, 1.0), Vec2::new(5.0, -0.2)),
            radius: 0.05,
        };
        let (n, depth) = capsule_segment(&cap, &wall, Vec2::new(5.0, 3.0)).unwrap();
        assert!((n.y - 1.0).abs() < 1e-12);
        assert!((depth - 0.25).abs() < 1e-12);
    }

    #[test]
    fn disc_segment_depth() {
        let wall = Segment::new(Vec2::new(0.0, 0.0), Vec2::new(0.0, 10.0));
        let (n, d) = disc_segment(Vec2::new(0.1, 5.0), 0.3, &wall, Vec2::new(5.0, 5.0)).unwrap();
        assert!((n.x - 1.0).abs() < 1e-12);
        assert!((d - 0.2).abs() < 1e-12);
    }
}
