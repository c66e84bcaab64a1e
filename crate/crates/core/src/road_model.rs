//! Lane geometry: arc-length parametrized polylines, lanes with free-space
//! boundaries, routes through the lane graph and curvature-limited velocity
//! profiles.

use crate::geometry::{closest_on_segment, Vec2};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

/// Centerlines are resampled to this spacing when a lane is built.
pub const RESAMPLE_SPACING: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum RoadError {
    #[error("polyline needs at least two points, got {0}")]
    TooFewPoints(usize),
    #[error("polyline points {0} and {1} coincide")]
    DuplicatePoint(usize, usize),
    #[error("polyline contains a non-finite coordinate")]
    NonFinite,
    #[error("arc length {s} outside [0, {length}]")]
    OutOfRange { s: f64, length: f64 },
    #[error("unknown lane `{0}`")]
    UnknownLane(String),
    #[error("route is empty")]
    EmptyRoute,
    #[error("lane `{0}` has a non-positive speed limit")]
    BadSpeedLimit(String),
    #[error("lane `{0}` needs either a width or both boundary polylines")]
    MissingBoundaries(String),
}

/// Ordered 2-D points with cumulative arc length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec2>", into = "Vec<Vec2>")]
pub struct Polyline {
    points: Vec<Vec2>,
    s: Vec<f64>,
    /// Bounding circle of every run of `CHUNK` segments, for pruning projections.
    chunks: Vec<(Vec2, f64)>,
}

const CHUNK: usize = 16;

fn chunk_bounds(points: &[Vec2]) -> Vec<(Vec2, f64)> {
    let segments = points.len() - 1;
    (0..segments.div_ceil(CHUNK))
        .map(|k| {
            let run = &points[k * CHUNK..=((k + 1) * CHUNK).min(segments)];
            let center = (run[0] + run[run.len() - 1]) * 0.5;
            let radius = run.iter().map(|q| q.distance(center)).fold(0.0, f64::max);
            (center, radius)
        })
        .collect()
}

impl TryFrom<Vec<Vec2>> for Polyline {
    type Error = RoadError;

    fn try_from(points: Vec<Vec2>) -> Result<Self, Self::Error> {
        Polyline::new(points)
    }
}

impl From<Polyline> for Vec<Vec2> {
    fn from(p: Polyline) -> Self {
        p.points
    }
}

struct Nearest {
    dist_sq: f64,
    dist: f64,
    proj: Projection,
}

/// Result of projecting a point onto a polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub s: f64,
    /// Signed lateral offset, positive to the left of the direction of travel.
    pub d: f64,
    pub segment: usize,
    /// Foot point on the polyline.
    pub foot: Vec2,
}

impl Polyline {
    pub fn new(points: Vec<Vec2>) -> Result<Self, RoadError> {
        if points.len() < 2 {
            return Err(RoadError::TooFewPoints(points.len()));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(RoadError::NonFinite);
        }
        let mut s = Vec::with_capacity(points.len());
        s.push(0.0);
        for i in 1..points.len() {
            let ds = points[i].distance(points[i - 1]);
            if ds <= 1e-9 {
                return Err(RoadError::DuplicatePoint(i - 1, i));
            }
            s.push(s[i - 1] + ds);
        }
        let chunks = chunk_bounds(&points);
        Ok(Polyline { points, s, chunks })
    }

    /// Builds a polyline after dropping consecutive near-duplicate points.
    pub fn new_dedup(points: Vec<Vec2>) -> Result<Self, RoadError> {
        let mut out: Vec<Vec2> = Vec::with_capacity(points.len());
        for p in points {
            if out.last().map_or(true, |q| q.distance(p) > 1e-6) {
                out.push(p);
            }
        }
        Polyline::new(out)
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn arc_lengths(&self) -> &[f64] {
        &self.s
    }

    pub fn length(&self) -> f64 {
        *self.s.last().unwrap()
    }

    pub fn num_segments(&self) -> usize {
        self.points.len() - 1
    }

    /// Index of the segment containing arc length `s` (clamped).
    pub fn segment_at(&self, s: f64) -> usize {
        let last = self.num_segments() - 1;
        if s <= 0.0 {
            return 0;
        }
        match self.s.binary_search_by(|v| v.total_cmp(&s)) {
            Ok(i) => i.min(last),
            Err(i) => (i - 1).min(last),
        }
    }

    pub fn segment_direction(&self, seg: usize) -> Vec2 {
        (self.points[seg + 1] - self.points[seg]) / (self.s[seg + 1] - self.s[seg])
    }

    /// Point at arc length `s`, clamped to the polyline ends.
    pub fn point_at(&self, s: f64) -> Vec2 {
        let s = s.clamp(0.0, self.length());
        let seg = self.segment_at(s);
        self.points[seg] + self.segment_direction(seg) * (s - self.s[seg])
    }

    pub fn tangent_at(&self, s: f64) -> Vec2 {
        self.segment_direction(self.segment_at(s))
    }

    pub fn heading_at(&self, s: f64) -> f64 {
        self.tangent_at(s).angle()
    }

    /// Projects `p` onto the polyline; beyond the ends the foot clamps to the
    /// end point.
    pub fn project(&self, p: Vec2) -> Projection {
        self.project_range(p, 0, self.num_segments())
    }

    /// Projection restricted to segments `[first, last)`. Ties go to the
    /// lowest segment index.
    pub fn project_range(&self, p: Vec2, first: usize, last: usize) -> Projection {
        let mut best = Nearest {
            dist_sq: f64::INFINITY,
            dist: f64::INFINITY,
            proj: Projection {
                s: 0.0,
                d: 0.0,
                segment: first,
                foot: self.points[first],
            },
        };
        let last = last.min(self.num_segments());
        if first >= last {
            return best.proj;
        }
        let chunk_gap = |k: usize| {
            let (c, r) = self.chunks[k];
            p.distance(c) - r
        };
        let chunks = first / CHUNK..=(last - 1) / CHUNK;
        // the nearest chunk first tightens the bound for all others
        let nearest = chunks.clone().min_by(|&a, &b| chunk_gap(a).total_cmp(&chunk_gap(b))).unwrap_or(first / CHUNK);
        for k in std::iter::once(nearest).chain(chunks.filter(|&k| k != nearest)) {
            if k != nearest && chunk_gap(k) > best.dist {
                continue;
            }
            for seg in (k * CHUNK).max(first)..((k + 1) * CHUNK).min(last) {
                self.visit_segment(p, seg, &mut best);
            }
        }
        best.proj
    }

    fn visit_segment(&self, p: Vec2, seg: usize, best: &mut Nearest) {
        let a = self.points[seg];
        // no point of the segment is closer than |p - a| - length
        let reach = best.dist + (self.s[seg + 1] - self.s[seg]);
        if (p - a).norm_sq() > reach * reach {
            return;
        }
        let (foot, t) = closest_on_segment(p, a, self.points[seg + 1]);
        let dist_sq = (p - foot).norm_sq();
        if dist_sq < best.dist_sq || (dist_sq == best.dist_sq && seg < best.proj.segment) {
            let dist = dist_sq.sqrt();
            let lateral = self.segment_direction(seg).cross(p - foot);
            let d = if t > 0.0 && t < 1.0 { lateral } else { dist.copysign(lateral) };
            *best = Nearest {
                dist_sq,
                dist,
                proj: Projection {
                    s: self.s[seg] + t * (self.s[seg + 1] - self.s[seg]),
                    d: if lateral == 0.0 { 0.0 } else { d },
                    segment: seg,
                    foot,
                },
            };
        }
    }

    /// Projection restricted to segments overlapping `[s_lo, s_hi]`.
    pub fn project_window(&self, p: Vec2, s_lo: f64, s_hi: f64) -> Projection {
        let first = self.segment_at(s_lo);
        let last = self.segment_at(s_hi) + 1;
        self.project_range(p, first, last)
    }

    /// Inverse of [`Polyline::project`] for feet inside a segment.
    pub fn frenet_to_cartesian(&self, s: f64, d: f64) -> Result<Vec2, RoadError> {
        let length = self.length();
        if !(-1e-9..=length + 1e-9).contains(&s) {
            return Err(RoadError::OutOfRange { s, length });
        }
        let seg = self.segment_at(s);
        let dir = self.segment_direction(seg);
        Ok(self.points[seg] + dir * (s - self.s[seg]) + dir.perp() * d)
    }

    /// Signed Menger curvature at each vertex; zero at the two end points.
    pub fn vertex_curvatures(&self) -> Vec<f64> {
        let n = self.points.len();
        let mut k = vec![0.0; n];
        for i in 1..n.saturating_sub(1) {
            k[i] = menger_curvature(self.points[i - 1], self.points[i], self.points[i + 1]);
        }
        k
    }

    /// Curvature at arc length `s`, linearly interpolated between vertex values.
    pub fn curvature_at(&self, s: f64) -> f64 {
        let n = self.points.len();
        if n < 3 {
            return 0.0;
        }
        let s = s.clamp(0.0, self.length());
        let seg = self.segment_at(s);
        let k0 = if seg == 0 {
            0.0
        } else {
            menger_curvature(self.points[seg - 1], self.points[seg], self.points[seg + 1])
        };
        let k1 = if seg + 2 >= n {
            0.0
        } else {
            menger_curvature(self.points[seg], self.points[seg + 1], self.points[seg + 2])
        };
        let t = (s - self.s[seg]) / (self.s[seg + 1] - self.s[seg]);
        k0 + (k1 - k0) * t
    }

    /// Uniformly resampled copy; the last segment absorbs the remainder.
    pub fn resampled(&self, spacing: f64) -> Polyline {
        let length = self.length();
        let count = (length / spacing).floor() as usize;
        let mut pts = Vec::with_capacity(count + 2);
        for i in 0..=count {
            pts.push(self.point_at(i as f64 * spacing));
        }
        if length - count as f64 * spacing > 1e-3 * spacing {
            pts.push(*self.points.last().unwrap());
        } else {
            *pts.last_mut().unwrap() = *self.points.last().unwrap();
        }
        Polyline::new_dedup(pts).expect("resampling a valid polyline")
    }

    /// Polyline displaced laterally by `d` using averaged vertex normals.
    pub fn offset(&self, d: f64) -> Polyline {
        let n = self.points.len();
        let mut pts = Vec::with_capacity(n);
        for i in 0..n {
            let normal = if i == 0 {
                self.segment_direction(0).perp()
            } else if i == n - 1 {
                self.segment_direction(n - 2).perp()
            } else {
                let a = self.segment_direction(i - 1);
                let b = self.segment_direction(i);
                let bis = (a + b).normalized().perp();
                // miter length keeps both adjacent segments at distance d
                let cos_half = bis.dot(a.perp()).max(0.2);
                bis / cos_half
            };
            pts.push(self.points[i] + normal * d);
        }
        Polyline::new_dedup(pts).expect("offset of a valid polyline")
    }

    /// Sub-polyline covering `[s0, s1]`.
    pub fn slice(&self, s0: f64, s1: f64) -> Polyline {
        let s0 = s0.clamp(0.0, self.length());
        let s1 = s1.clamp(0.0, self.length()).max(s0 + 1e-3).min(self.length());
        let s0 = s0.min(s1 - 1e-3).max(0.0);
        let mut pts = vec![self.point_at(s0)];
        for (i, &si) in self.s.iter().enumerate() {
            if si > s0 && si < s1 {
                pts.push(self.points[i]);
            }
        }
        pts.push(self.point_at(s1));
        Polyline::new_dedup(pts).unwrap_or_else(|_| self.clone())
    }
}

/// Signed curvature of the circle through three points, positive for left turns.
pub fn menger_curvature(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    let denom = a.distance(b) * b.distance(c) * a.distance(c);
    if denom <= 0.0 {
        return 0.0;
    }
    2.0 * (b - a).cross(c - b) / denom
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LaneKind {
    #[default]
    Normal,
    Roundabout,
    IntersectionApproach,
}

#[derive(Debug, Clone)]
pub struct Lane {
    pub id: String,
    pub centerline: Polyline,
    pub boundary_left: Polyline,
    pub boundary_right: Polyline,
    pub speed_limit: f64,
    pub successors: Vec<String>,
    pub kind: LaneKind,
    pub left_neighbor: Option<String>,
    pub right_neighbor: Option<String>,
}

impl Lane {
    /// Lane with boundaries at `width / 2` on either side of the resampled centerline.
    pub fn with_width(
        id: impl Into<String>,
        centerline: Polyline,
        width: f64,
        speed_limit: f64,
        kind: LaneKind,
    ) -> Result<Lane, RoadError> {
        let centerline = centerline.resampled(RESAMPLE_SPACING);
        let boundary_left = centerline.offset(0.5 * width);
        let boundary_right = centerline.offset(-0.5 * width);
        Lane::new(id, centerline, boundary_left, boundary_right, speed_limit, kind)
    }

    pub fn new(
        id: impl Into<String>,
        centerline: Polyline,
        boundary_left: Polyline,
        boundary_right: Polyline,
        speed_limit: f64,
        kind: LaneKind,
    ) -> Result<Lane, RoadError> {
        let id = id.into();
        if !(speed_limit > 0.0) {
            return Err(RoadError::BadSpeedLimit(id));
        }
        Ok(Lane {
            id,
            centerline: centerline.resampled(RESAMPLE_SPACING),
            boundary_left,
            boundary_right,
            speed_limit,
            successors: Vec::new(),
            kind,
            left_neighbor: None,
            right_neighbor: None,
        })
    }

    pub fn length(&self) -> f64 {
        self.centerline.length()
    }

    /// Local lane width estimate at arc length `s`.
    pub fn width_at(&self, s: f64) -> f64 {
        let c = self.centerline.point_at(s);
        let l = self.boundary_left.project(c).foot.distance(c);
        let r = self.boundary_right.project(c).foot.distance(c);
        l + r
    }
}

/// Target speed samples along a centerline.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityProfile {
    pub s: Vec<f64>,
    pub v: Vec<f64>,
}

impl VelocityProfile {
    /// Target speed at `s`, interpolating linearly in squared speed.
    pub fn at(&self, s: f64) -> f64 {
        let n = self.s.len();
        if s <= self.s[0] {
            return self.v[0];
        }
        if s >= self.s[n - 1] {
            return self.v[n - 1];
        }
        let i = match self.s.binary_search_by(|v| v.total_cmp(&s)) {
            Ok(i) => return self.v[i],
            Err(i) => i - 1,
        };
        let t = (s - self.s[i]) / (self.s[i + 1] - self.s[i]);
        let v2 = self.v[i] * self.v[i] + t * (self.v[i + 1] * self.v[i + 1] - self.v[i] * self.v[i]);
        v2.max(0.0).sqrt()
    }
}

/// Curvature-limited velocity profile for a lane.
pub fn build_velocity_profile(lane: &Lane, a_lat_max: f64, a_lon_comf: f64) -> VelocityProfile {
    let limit = lane.speed_limit;
    profile_along(&lane.centerline, |_| limit, a_lat_max, a_lon_comf)
}

/// Pointwise `min(limit, sqrt(a_lat / |k|))`, then a backward pass bounding
/// deceleration and a forward pass bounding acceleration by `a_lon`.
pub fn profile_along(
    line: &Polyline,
    limit_at: impl Fn(f64) -> f64,
    a_lat_max: f64,
    a_lon: f64,
) -> VelocityProfile {
    let s = line.arc_lengths().to_vec();
    let kappa = line.vertex_curvatures();
    let mut v: Vec<f64> = s
        .iter()
        .zip(&kappa)
        .map(|(&si, &k)| {
            let lim = limit_at(si);
            if k.abs() > 1e-12 {
                lim.min((a_lat_max / k.abs()).sqrt())
            } else {
                lim
            }
        })
        .collect();
    for i in (0..v.len() - 1).rev() {
        let reach = (v[i + 1] * v[i + 1] + 2.0 * a_lon * (s[i + 1] - s[i])).sqrt();
        v[i] = v[i].min(reach);
    }
    for i in 1..v.len() {
        let reach = (v[i - 1] * v[i - 1] + 2.0 * a_lon * (s[i] - s[i - 1])).sqrt();
        v[i] = v[i].min(reach);
    }
    VelocityProfile { s, v }
}

/// Lane graph.
#[derive(Debug, Clone, Default)]
pub struct RoadMap {
    lanes: Vec<Lane>,
    index: HashMap<String, usize>,
}

impl RoadMap {
    pub fn new(lanes: Vec<Lane>) -> Self {
        let index = lanes.iter().enumerate().map(|(i, l)| (l.id.clone(), i)).collect();
        RoadMap { lanes, index }
    }

    pub fn lanes(&self) -> &[Lane] {
        &self.lanes
    }

    pub fn lane(&self, id: &str) -> Result<&Lane, RoadError> {
        self.index
            .get(id)
            .map(|&i| &self.lanes[i])
            .ok_or_else(|| RoadError::UnknownLane(id.to_string()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// All lane sequences starting at `start` that extend at least `reach`
    /// metres beyond `s_start` (or end at a lane without successors).
    pub fn route_options(&self, start: &str, s_start: f64, reach: f64) -> Vec<Vec<String>> {
        let mut out = Vec::new();
        let mut stack = vec![(vec![start.to_string()], -s_start)];
        while let Some((route, covered)) = stack.pop() {
            let last = route.last().unwrap();
            let lane = match self.lane(last) {
                Ok(l) => l,
                Err(_) => continue,
            };
            let covered = covered + lane.length();
            if covered >= reach || lane.successors.is_empty() || route.len() > 16 {
                out.push(route);
                continue;
            }
            // reversed so that the first successor is explored first
            for succ in lane.successors.iter().rev() {
                if route.contains(succ) || !self.contains(succ) {
                    continue;
                }
                let mut r = route.clone();
                r.push(succ.clone());
                stack.push((r, covered));
            }
        }
        out
    }
}

/// A lane sequence flattened into one reference path.
#[derive(Debug, Clone)]
pub struct RoutePath {
    pub lane_ids: Vec<String>,
    /// Arc length at which each lane starts on the path.
    pub lane_offsets: Vec<f64>,
    pub centerline: Polyline,
    pub boundary_left: Polyline,
    pub boundary_right: Polyline,
    pub profile: VelocityProfile,
    /// Ends of intersection approach lanes along the path.
    pub stop_lines: Vec<f64>,
    speed_limits: Vec<f64>,
}

/// Appends `src`, skipping leading points that lie behind the end of `dst`
/// along its last direction; offset boundaries of curved lanes overshoot
/// their lane ends slightly and would otherwise fold back at the joint.
fn append_forward(dst: &mut Vec<Vec2>, src: &[Vec2]) {
    let skip = match dst.as_slice() {
        [.., a, b] => {
            let dir = (*b - *a).normalized();
            src.iter().take_while(|&&p| (p - *b).dot(dir) <= 1e-6).count()
        }
        _ => 0,
    };
    dst.extend_from_slice(&src[skip.min(src.len())..]);
}

impl RoutePath {
    pub fn new(map: &RoadMap, lane_ids: &[String], a_lat_max: f64, a_lon_comf: f64) -> Result<Self, RoadError> {
        if lane_ids.is_empty() {
            return Err(RoadError::EmptyRoute);
        }
        let mut center = Vec::new();
        let mut left = Vec::new();
        let mut right = Vec::new();
        let mut offsets = Vec::with_capacity(lane_ids.len());
        let mut limits = Vec::with_capacity(lane_ids.len());
        let mut approach = Vec::with_capacity(lane_ids.len());
        for id in lane_ids {
            let lane = map.lane(id)?;
            let start = match (center.last(), lane.centerline.points().first()) {
                (Some(&last), Some(&first)) => {
                    let prev = Polyline::new_dedup(center.clone())?;
                    prev.length() + last.distance(first)
                }
                _ => 0.0,
            };
            offsets.push(start);
            limits.push(lane.speed_limit);
            approach.push(lane.kind == LaneKind::IntersectionApproach);
            center.extend_from_slice(lane.centerline.points());
            append_forward(&mut left, lane.boundary_left.points());
            append_forward(&mut right, lane.boundary_right.points());
        }
        let centerline = Polyline::new_dedup(center)?;
        let boundary_left = Polyline::new_dedup(left)?;
        let boundary_right = Polyline::new_dedup(right)?;
        let mut path = RoutePath {
            lane_ids: lane_ids.to_vec(),
            lane_offsets: offsets,
            centerline,
            boundary_left,
            boundary_right,
            profile: VelocityProfile {
                s: vec![0.0],
                v: vec![1.0],
            },
            stop_lines: Vec::new(),
            speed_limits: limits,
        };
        let ends = path.lane_offsets.iter().skip(1).copied().chain(std::iter::once(path.length()));
        path.stop_lines = ends.zip(&approach).filter(|(_, &a)| a).map(|(e, _)| e).collect();
        path.profile = profile_along(&path.centerline, |s| path.speed_limit_at(s), a_lat_max, a_lon_comf);
        Ok(path)
    }

    pub fn length(&self) -> f64 {
        self.centerline.length()
    }

    /// Index into `lane_ids` of the lane covering arc length `s`.
    pub fn lane_index_at(&self, s: f64) -> usize {
        match self.lane_offsets.iter().rposition(|&o| o <= s) {
            Some(i) => i,
            None => 0,
        }
    }

    pub fn lane_at(&self, s: f64) -> &str {
        &self.lane_ids[self.lane_index_at(s)]
    }

    pub fn speed_limit_at(&self, s: f64) -> f64 {
        self.speed_limits[self.lane_index_at(s)]
    }

    pub fn offset_of(&self, lane_id: &str) -> Option<f64> {
        self.lane_ids.iter().position(|l| l == lane_id).map(|i| self.lane_offsets[i])
    }

    pub fn target_speed(&self, s: f64) -> f64 {
        self.profile.at(s)
    }

    pub fn project(&self, p: Vec2) -> Projection {
        self.centerline.project(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn straight(len: f64) -> Polyline {
        Polyline::new(vec![Vec2::new(0.0, 0.0), Vec2::new(len, 0.0)]).unwrap()
    }

    fn circle_arc(radius: f64, n: usize, sweep: f64) -> Polyline {
        let pts = (0..=n)
            .map(|i| {
                let a = -std::f64::consts::FRAC_PI_2 + sweep * i as f64 / n as f64;
                Vec2::new(radius * a.cos(), radius + radius * a.sin())
            })
            .collect();
        Polyline::new(pts).unwrap()
    }

    #[test]
    fn rejects_degenerate_polylines() {
        assert_eq!(Polyline::new(vec![Vec2::ZERO]).unwrap_err(), RoadError::TooFewPoints(1));
        assert_eq!(
            Polyline::new(vec![Vec2::ZERO, Vec2::ZERO]).unwrap_err(),
            RoadError::DuplicatePoint(0, 1)
        );
    }

    #[test]
    fn project_straight_line() {
        let line = straight(10.0);
        let p = line.project(Vec2::new(3.0, 1.0));
        assert_relative_eq!(p.s, 3.0);
        assert_relative_eq!(p.d, 1.0);
        let p = line.project(Vec2::new(-2.0, 0.0));
        assert_eq!(p.s, 0.0);
        assert_eq!(p.d, 0.0);
        let p = line.project(Vec2::new(4.0, -2.5));
        assert_relative_eq!(p.d, -2.5);
    }

    #[test]
    fn project_l_shape_matches_dense_sampling() {
        let line = Polyline::new(vec![Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0), Vec2::new(10.0, 10.0)]).unwrap();
        for &q in &[Vec2::new(9.0, 1.5), Vec2::new(11.0, -0.5), Vec2::new(8.7, 0.4), Vec2::new(10.3, 0.2)] {
            let proj = line.project(q);
            // brute force over 1 mm samples
            let mut best = f64::INFINITY;
            let mut best_s = 0.0;
            let steps = (line.length() / 1e-3) as usize;
            for k in 0..=steps {
                let s = k as f64 * 1e-3;
                let dist = line.point_at(s).distance(q);
                if dist < best {
                    best = dist;
                    best_s = s;
                }
            }
            assert!((proj.d.abs() - best).abs() < 1e-6, "{q:?}");
            assert!((proj.s - best_s).abs() < 2e-3, "{q:?}");
        }
    }

    #[test]
    fn frenet_straight() {
        let line = straight(10.0);
        assert_eq!(line.frenet_to_cartesian(5.0, 0.0).unwrap(), Vec2::new(5.0, 0.0));
        assert_eq!(line.frenet_to_cartesian(5.0, 2.0).unwrap(), Vec2::new(5.0, 2.0));
        assert!(matches!(line.frenet_to_cartesian(11.0, 0.0), Err(RoadError::OutOfRange { .. })));
    }

    #[test]
    fn frenet_round_trip_on_curve() {
        let line = circle_arc(30.0, 400, 2.0).resampled(RESAMPLE_SPACING);
        let s_pts = line.arc_lengths().to_vec();
        for w in s_pts.windows(2).step_by(7) {
            let s = 0.5 * (w[0] + w[1]);
            for &d in &[-12.0, -3.0, 0.0, 1.5, 10.0] {
                let p = line.frenet_to_cartesian(s, d).unwrap();
                let back = line.project(p);
                assert!((back.s - s).abs() < 1e-6 && (back.d - d).abs() < 1e-6, "s={s} d={d} -> {back:?}");
            }
        }
    }

    #[test]
    fn curvature_straight_and_circle() {
        assert_eq!(straight(20.0).resampled(0.5).curvature_at(7.3), 0.0);
        let circle = circle_arc(20.0, 200, std::f64::consts::PI);
        let k = circle.vertex_curvatures();
        for &ki in &k[1..k.len() - 1] {
            assert!((ki - 0.05).abs() < 0.05 * 0.05);
        }
    }

    #[test]
    fn curvature_concentrated_at_joint() {
        let line = Polyline::new(vec![Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0), Vec2::new(20.0, 5.0)]).unwrap();
        let joint = line.arc_lengths()[1];
        let k_joint = line.curvature_at(joint);
        assert!(k_joint > 0.0);
        assert_eq!(line.curvature_at(0.0), 0.0);
        assert_eq!(line.curvature_at(line.length()), 0.0);
        for s in [2.0, 5.0, 12.0, 18.0] {
            assert!(line.curvature_at(s) < k_joint);
        }
    }

    #[test]
    fn curvature_converges_under_refinement() {
        let r = 25.0;
        let mut errors = Vec::new();
        for &n in &[10usize, 20, 40, 80] {
            // irregular sampling so the error does not vanish by symmetry
            let pts: Vec<Vec2> = (0..=n)
                .map(|i| {
                    let u = i as f64 / n as f64;
                    let a = 1.2 * (u + 0.15 * u * (1.0 - u));
                    Vec2::new(r * a.cos(), r * a.sin())
                })
                .collect();
            let line = Polyline::new(pts).unwrap();
            let k = line.vertex_curvatures();
            let err = k[1..n].iter().map(|&ki| (ki - 1.0 / r).abs()).fold(0.0, f64::max);
            errors.push(err);
        }
        for w in errors.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 1.0 || w[1] < 1e-9, "errors {errors:?}");
        }
    }

    #[test]
    fn velocity_profile_straight_and_arc() {
        let lane = Lane::with_width("a", straight(100.0), 3.5, 13.89, LaneKind::Normal).unwrap();
        let prof = build_velocity_profile(&lane, 2.0, 1.5);
        assert!(prof.v.iter().all(|&v| (v - 13.89).abs() < 1e-12));

        let arc = circle_arc(20.0, 300, std::f64::consts::PI);
        let lane = Lane::with_width("b", arc, 3.5, 13.89, LaneKind::Normal).unwrap();
        let prof = build_velocity_profile(&lane, 2.0, 1.5);
        let mid = prof.at(lane.length() / 2.0);
        assert!((mid - 40f64.sqrt()).abs() < 0.05 * 40f64.sqrt());
    }

    #[test]
    fn velocity_profile_respects_decel_bound() {
        let mut pts: Vec<Vec2> = (0..=100).map(|i| Vec2::new(i as f64, 0.0)).collect();
        for i in 1..=60 {
            let a = -std::f64::consts::FRAC_PI_2 + i as f64 * 0.05;
            pts.push(Vec2::new(100.0 + 20.0 * a.cos(), 20.0 + 20.0 * a.sin()));
        }
        let lane = Lane::with_width("c", Polyline::new(pts).unwrap(), 3.5, 15.0, LaneKind::Normal).unwrap();
        let a_lon = 1.2;
        let prof = build_velocity_profile(&lane, 2.0, a_lon);
        for i in 0..prof.s.len() - 1 {
            let lhs = (prof.v[i + 1].powi(2) - prof.v[i].powi(2)).abs();
            assert!(lhs <= 2.0 * a_lon * (prof.s[i + 1] - prof.s[i]) + 1e-9);
        }
        // slows down before the arc starts
        assert!(prof.at(95.0) < 14.0);
        assert!(prof.v.iter().all(|&v| v > 0.0 && v <= 15.0));
    }

    #[test]
    fn route_options_branch() {
        let mk = |id: &str, y: f64| Lane::with_width(id, Polyline::new(vec![Vec2::new(0.0, y), Vec2::new(50.0, y)]).unwrap(), 3.5, 10.0, LaneKind::Normal).unwrap();
        let mut a = mk("a", 0.0);
        a.successors = vec!["b".into(), "c".into()];
        let map = RoadMap::new(vec![a, mk("b", 0.0), mk("c", 5.0)]);
        let opts = map.route_options("a", 0.0, 80.0);
        assert_eq!(opts, vec![vec!["a".to_string(), "b".to_string()], vec!["a".to_string(), "c".to_string()]]);
        assert_eq!(map.route_options("b", 0.0, 80.0).len(), 1);
    }

    #[test]
    fn route_boundaries_do_not_fold_back_at_joints() {
        let arc: Vec<Vec2> = (0..=8)
            .map(|i| {
                let a = std::f64::consts::FRAC_PI_2 * i as f64 / 8.0;
                Vec2::new(-5.0 + 6.75 * a.cos(), -5.0 + 6.75 * a.sin())
            })
            .collect();
        let mut a = Lane::with_width("in", Polyline::new(vec![Vec2::new(1.75, -30.0), Vec2::new(1.75, -5.0)]).unwrap(), 3.5, 10.0, LaneKind::Normal).unwrap();
        a.successors = vec!["turn".into()];
        let mut b = Lane::with_width("turn", Polyline::new(arc).unwrap(), 3.5, 10.0, LaneKind::Normal).unwrap();
        b.successors = vec!["out".into()];
        let c = Lane::with_width("out", Polyline::new(vec![Vec2::new(-5.0, 1.75), Vec2::new(-30.0, 1.75)]).unwrap(), 3.5, 10.0, LaneKind::Normal).unwrap();
        let map = RoadMap::new(vec![a, b, c]);
        let path = RoutePath::new(&map, &["in".into(), "turn".into(), "out".into()], 2.0, 1.5).unwrap();
        for line in [&path.boundary_left, &path.boundary_right] {
            for w in line.points().windows(2) {
                let mid = (w[0] + w[1]) * 0.5;
                let tangent = path.centerline.tangent_at(path.centerline.project(mid).s);
                assert!((w[1] - w[0]).dot(tangent) > 0.0, "boundary folds back at {:?}", w[0]);
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn projection_finds_the_nearest_segment(
            turns in proptest::collection::vec(-0.8f64..0.8, 2..120),
            px in -20.0f64..60.0,
            py in -40.0f64..40.0,
            lo in 0usize..60,
            span in 1usize..80,
        ) {
            let mut heading = 0.0;
            let mut pts = vec![Vec2::ZERO];
            for t in &turns {
                heading += t;
                let last = *pts.last().unwrap();
                pts.push(last + Vec2::from_angle(heading) * 0.7);
            }
            let line = Polyline::new(pts).unwrap();
            let p = Vec2::new(px, py);
            let first = lo.min(line.num_segments() - 1);
            let last = (first + span).min(line.num_segments());
            let brute = (first..last)
                .map(|k| p.distance(closest_on_segment(p, line.points()[k], line.points()[k + 1]).0))
                .fold(f64::INFINITY, f64::min);
            let proj = line.project_range(p, first, last);
            proptest::prop_assert!((proj.foot.distance(p) - brute).abs() < 1e-9);
            proptest::prop_assert!((proj.d.abs() - brute).abs() < 1e-9);
            proptest::prop_assert!((first..last).contains(&proj.segment));
        }
    }
}
