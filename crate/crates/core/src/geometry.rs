//! Planar vector type and convex-polygon helpers shared by the planner modules.

use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

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

    pub fn from_angle(theta: f64) -> Self {
        Vec2::new(theta.cos(), theta.sin())
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3-D cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        if n > 0.0 {
            self / n
        } else {
            Vec2::ZERO
        }
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn rotate(self, theta: f64) -> Vec2 {
        let (s, c) = theta.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn lerp(self, o: Vec2, t: f64) -> Vec2 {
        self + (o - self) * t
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
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

impl SubAssign for Vec2 {
    fn sub_assign(&mut self, o: Vec2) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        v * self
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    fn div(self, k: f64) -> Vec2 {
        Vec2::new(self.x / k, self.y / k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wraps an angle to (-pi, pi].
pub fn normalize_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut a = theta % two_pi;
    if a <= -std::f64::consts::PI {
        a += two_pi;
    } else if a > std::f64::consts::PI {
        a -= two_pi;
    }
    a
}

/// Closest point on segment `[a, b]` to `p` and the clamped segment parameter.
pub fn closest_on_segment(p: Vec2, a: Vec2, b: Vec2) -> (Vec2, f64) {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    if len_sq == 0.0 {
        return (a, 0.0);
    }
    let t = ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0);
    (a + ab * t, t)
}

/// Convex polygon with counter-clockwise vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexPolygon {
    vertices: Vec<Vec2>,
}

/// Nearest boundary feature of a polygon relative to a query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedDistance {
    /// Positive outside, negative inside.
    pub distance: f64,
    /// Unit gradient of the signed distance with respect to the query point.
    pub gradient: Vec2,
    /// Index of the edge (vertex i to i+1) holding the nearest boundary point.
    pub edge: usize,
}

impl ConvexPolygon {
    /// Builds the convex hull of the given points (Andrew's monotone chain).
    pub fn hull(points: &[Vec2]) -> ConvexPolygon {
        let mut pts: Vec<Vec2> = points.to_vec();
        pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
        pts.dedup_by(|a, b| (*a - *b).norm() < 1e-12);
        if pts.len() < 3 {
            return ConvexPolygon { vertices: pts };
        }
        let mut lower: Vec<Vec2> = Vec::with_capacity(pts.len());
        for &p in &pts {
            while lower.len() >= 2
                && (lower[lower.len() - 1] - lower[lower.len() - 2]).cross(p - lower[lower.len() - 2]) <= 1e-12
            {
                lower.pop();
            }
            lower.push(p);
        }
        let mut upper: Vec<Vec2> = Vec::with_capacity(pts.len());
        for &p in pts.iter().rev() {
            while upper.len() >= 2
                && (upper[upper.len() - 1] - upper[upper.len() - 2]).cross(p - upper[upper.len() - 2]) <= 1e-12
            {
                upper.pop();
            }
            upper.push(p);
        }
        lower.pop();
        upper.pop();
        lower.extend(upper);
        ConvexPolygon { vertices: lower }
    }

    /// Oriented rectangle centered at `center`.
    pub fn rectangle(center: Vec2, heading: f64, length: f64, width: f64) -> ConvexPolygon {
        let t = Vec2::from_angle(heading);
        let n = t.perp();
        let hl = 0.5 * length;
        let hw = 0.5 * width;
        ConvexPolygon {
            vertices: vec![
                center - t * hl - n * hw,
                center + t * hl - n * hw,
                center + t * hl + n * hw,
                center - t * hl + n * hw,
            ],
        }
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn translated(&self, offset: Vec2) -> ConvexPolygon {
        ConvexPolygon {
            vertices: self.vertices.iter().map(|&v| v + offset).collect(),
        }
    }

    pub fn is_convex_ccw(&self) -> bool {
        let n = self.vertices.len();
        if n < 3 {
            return false;
        }
        (0..n).all(|i| {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let c = self.vertices[(i + 2) % n];
            (b - a).cross(c - b) > 0.0
        })
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let n = self.vertices.len();
        (0..n).all(|i| {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            (b - a).cross(p - a) >= 0.0
        })
    }

    /// Signed Euclidean distance from `p` to the polygon boundary.
    ///
    /// Outside: distance to the nearest boundary point. Inside: minus the
    /// distance to the nearest edge line.
    pub fn signed_distance(&self, p: Vec2) -> SignedDistance {
        let n = self.vertices.len();
        let mut best = f64::INFINITY;
        let mut best_point = self.vertices[0];
        let mut best_edge = 0;
        let mut inside = true;
        let mut depth = f64::INFINITY;
        let mut depth_normal = Vec2::ZERO;
        let mut depth_edge = 0;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let edge = b - a;
            let len = edge.norm();
            let outward = Vec2::new(edge.y, -edge.x) / len;
            let signed = (p - a).dot(outward);
            if signed > 0.0 {
                inside = false;
            }
            if -signed < depth {
                depth = -signed;
                depth_normal = outward;
                depth_edge = i;
            }
            let (q, _) = closest_on_segment(p, a, b);
            let d = (p - q).norm();
            if d < best {
                best = d;
                best_point = q;
                best_edge = i;
            }
        }
        if inside {
            SignedDistance {
                distance: -depth,
                gradient: depth_normal,
                edge: depth_edge,
            }
        } else {
            let dir = if best > 0.0 {
                (p - best_point) / best
            } else {
                Vec2::ZERO
            };
            SignedDistance {
                distance: best,
                gradient: dir,
                edge: best_edge,
            }
        }
    }

    /// Separating-axis overlap test for two convex polygons.
    pub fn overlaps(&self, other: &ConvexPolygon) -> bool {
        !(separated_along_edges(self, other) || separated_along_edges(other, self))
    }

    /// Euclidean distance between two convex polygons, zero when they overlap.
    pub fn distance_to(&self, other: &ConvexPolygon) -> f64 {
        if self.overlaps(other) {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        for (poly_a, poly_b) in [(self, other), (other, self)] {
            let n = poly_b.vertices.len();
            for &p in &poly_a.vertices {
                for i in 0..n {
                    let (q, _) = closest_on_segment(p, poly_b.vertices[i], poly_b.vertices[(i + 1) % n]);
                    best = best.min(p.distance(q));
                }
            }
        }
        best
    }

    /// Distance when apart, minus the penetration depth (smallest overlap
    /// along any edge normal) when overlapping.
    pub fn signed_gap(&self, other: &ConvexPolygon) -> f64 {
        if !self.overlaps(other) {
            return self.distance_to(other);
        }
        let mut depth = f64::INFINITY;
        for poly in [self, other] {
            let n = poly.vertices.len();
            for i in 0..n {
                let axis = (poly.vertices[(i + 1) % n] - poly.vertices[i]).perp().normalized();
                let span = |v: &[Vec2]| {
                    v.iter()
                        .map(|p| p.dot(axis))
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
                };
                let (a0, a1) = span(&self.vertices);
                let (b0, b1) = span(&other.vertices);
                depth = depth.min(a1.min(b1) - a0.max(b0));
            }
        }
        -depth.max(0.0)
    }
}

fn separated_along_edges(a: &ConvexPolygon, b: &ConvexPolygon) -> bool {
    let n = a.vertices.len();
    (0..n).any(|i| {
        let p = a.vertices[i];
        let q = a.vertices[(i + 1) % n];
        let outward = Vec2::new(q.y - p.y, p.x - q.x);
        b.vertices.iter().all(|&v| (v - p).dot(outward) > 0.0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_square() -> ConvexPolygon {
        ConvexPolygon::rectangle(Vec2::ZERO, 0.0, 1.0, 1.0)
    }

    #[test]
    fn hull_drops_interior_points() {
        let pts = [
            Vec2::new(0.0, 0.0),
            Vec2::new(2.0, 0.0),
            Vec2::new(1.0, 0.5),
            Vec2::new(2.0, 2.0),
            Vec2::new(0.0, 2.0),
        ];
        let hull = ConvexPolygon::hull(&pts);
        assert_eq!(hull.len(), 4);
        assert!(hull.is_convex_ccw());
    }

    #[test]
    fn signed_distance_square() {
        let sq = unit_square();
        let out = sq.signed_distance(Vec2::new(2.0, 0.0));
        assert_relative_eq!(out.distance, 1.5);
        assert_relative_eq!(out.gradient.x, 1.0);
        let inside = sq.signed_distance(Vec2::ZERO);
        assert_relative_eq!(inside.distance, -0.5);
        let corner = sq.signed_distance(Vec2::new(1.5, 1.5));
        assert_relative_eq!(corner.distance, 2f64.sqrt());
    }

    #[test]
    fn overlap_and_distance() {
        let a = unit_square();
        let b = unit_square().translated(Vec2::new(3.0, 0.0));
        assert!(!a.overlaps(&b));
        assert_relative_eq!(a.distance_to(&b), 2.0);
        let c = unit_square().translated(Vec2::new(0.5, 0.5));
        assert!(a.overlaps(&c));
        assert_eq!(a.distance_to(&c), 0.0);
        assert_relative_eq!(a.signed_gap(&b), 2.0);
        assert_relative_eq!(a.signed_gap(&c), -0.5);
        let d = unit_square().translated(Vec2::new(0.9, 0.0));
        assert_relative_eq!(d.signed_gap(&a), -0.1, epsilon = 1e-12);
    }

    #[test]
    fn angle_wrapping() {
        use std::f64::consts::PI;
        assert_relative_eq!(normalize_angle(3.0 * PI), PI);
        assert_relative_eq!(normalize_angle(-PI), PI);
        assert_relative_eq!(normalize_angle(0.5), 0.5);
    }
}
