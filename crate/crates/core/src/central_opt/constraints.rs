//! Inequality constraints `h(ξ) <= 0` of the central problem: free-space
//! boundaries, dynamic obstacles, the spatio-temporal corridor and the
//! acceleration bound.

use serde::{Deserialize, Serialize};

use super::cost::{stencil, window_start};
use crate::geometry::{ConvexPolygon, Vec2};
use crate::road_model::{Polyline, Projection};
use crate::types::{SpatioTemporalCorridor, VehicleState};

/// Radius of the single ego circle placed at the mass center.
pub fn ego_radius(length: f64, width: f64) -> f64 {
    0.5 * (width * width + (length / 3.0).powi(2)).sqrt()
}

/// Footprint grown by `r` on every side with a wedge appended at the rear;
/// the wedge apex sits `tri_length` behind the grown rear edge on the axis.
pub fn resize_and_triangle(vehicle: &VehicleState, r: f64, tri_length: f64) -> ConvexPolygon {
    let grown = ConvexPolygon::rectangle(vehicle.position, vehicle.heading, vehicle.length + 2.0 * r, vehicle.width + 2.0 * r);
    if tri_length <= 0.0 {
        return grown;
    }
    let apex = vehicle.position - vehicle.direction() * (0.5 * vehicle.length + r + tri_length);
    let mut pts = grown.vertices().to_vec();
    pts.push(apex);
    ConvexPolygon::hull(&pts)
}

/// Signed distance from a circle center to an obstacle polygon.
pub fn pseudo_distance(c: Vec2, poly: &ConvexPolygon) -> f64 {
    poly.signed_distance(c).distance
}

/// Predicted polygons of one obstacle, one per time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstaclePrediction {
    pub id: String,
    pub polygons: Vec<ConvexPolygon>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    BoundaryLeft,
    BoundaryRight,
    Dynamic,
    SpatioTemporal,
    Acceleration,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::BoundaryLeft,
        Family::BoundaryRight,
        Family::Dynamic,
        Family::SpatioTemporal,
        Family::Acceleration,
    ];
}

/// Everything the central problem needs to know about its surroundings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub radius: f64,
    pub a_max: f64,
    pub boundary_left: Option<Polyline>,
    pub boundary_right: Option<Polyline>,
    pub obstacles: Vec<ObstaclePrediction>,
    /// Reference path the corridor is measured along.
    pub reference: Option<Polyline>,
    pub corridor: Option<SpatioTemporalCorridor>,
    /// Points before this index are pinned; geometric families skip them.
    pub first_constrained: usize,
}

impl ConstraintSet {
    pub fn acceleration_only(a_max: f64, radius: f64) -> Self {
        ConstraintSet {
            radius,
            a_max,
            boundary_left: None,
            boundary_right: None,
            obstacles: Vec::new(),
            reference: None,
            corridor: None,
            first_constrained: 2,
        }
    }
}

/// One scalar residual with its gradient over at most three consecutive points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    pub family: Family,
    pub value: f64,
    pub start: usize,
    pub count: usize,
    pub grad: [Vec2; 3],
    /// Second-derivative coefficient for the acceleration family:
    /// `∂²h/∂p_j∂p_k = curvature · c_j c_k · I`.
    pub curvature: f64,
}

impl Residual {
    fn single(family: Family, value: f64, i: usize, g: Vec2) -> Self {
        Residual {
            family,
            value,
            start: i,
            count: 1,
            grad: [g, Vec2::ZERO, Vec2::ZERO],
            curvature: 0.0,
        }
    }
}

/// Gradient of the signed lateral offset returned by a projection.
fn offset_gradient(line: &Polyline, proj: &Projection, p: Vec2) -> Vec2 {
    let dir = line.segment_direction(proj.segment);
    let a = line.points()[proj.segment];
    let b = line.points()[proj.segment + 1];
    let interior = proj.foot.distance(a) > 1e-12 && proj.foot.distance(b) > 1e-12;
    let away = p - proj.foot;
    if interior || away.norm() < 1e-9 {
        dir.perp()
    } else {
        away.normalized() * proj.d.signum()
    }
}

/// Per-point left/right clearance residuals `r - clearance`, full projection.
pub fn build_boundary_constraints(points: &[Vec2], left: &Polyline, right: &Polyline, r: f64) -> (Vec<f64>, Vec<f64>) {
    let hl = points.iter().map(|&p| r + left.project(p).d).collect();
    let hr = points.iter().map(|&p| r - right.project(p).d).collect();
    (hl, hr)
}

/// `r - pseudo_distance` per (obstacle, step), grouped by obstacle.
pub fn build_dynamic_constraints(points: &[Vec2], obstacles: &[ObstaclePrediction], r: f64) -> Vec<Vec<f64>> {
    obstacles
        .iter()
        .map(|ob| points.iter().zip(&ob.polygons).map(|(&p, poly)| r - pseudo_distance(p, poly)).collect())
        .collect()
}

/// `(s_min - s, s - s_max)` per step.
pub fn build_st_constraints(points: &[Vec2], corridor: &SpatioTemporalCorridor, path: &Polyline) -> (Vec<f64>, Vec<f64>) {
    let s: Vec<f64> = points.iter().map(|&p| path.project(p).s).collect();
    let lo = s.iter().zip(&corridor.s_min).map(|(s, lo)| lo - s).collect();
    let hi = s.iter().zip(&corridor.s_max).map(|(s, hi)| s - hi).collect();
    (lo, hi)
}

/// `||ẍ_i||² - a_max²` per step.
pub fn build_accel_constraints(points: &[Vec2], dt: f64, a_max: f64) -> Vec<f64> {
    let n = points.len();
    if n < 3 {
        return Vec::new();
    }
    (0..n)
        .map(|i| super::cost::diff_at(points, dt, 2, i).norm_sq() - a_max * a_max)
        .collect()
}

/// Evaluates all families with per-point projection windows fixed at
/// construction, in a fixed order.
#[derive(Debug, Clone)]
pub struct ConstraintEvaluator<'a> {
    set: &'a ConstraintSet,
    dt: f64,
    n: usize,
    left_window: Vec<(f64, f64)>,
    right_window: Vec<(f64, f64)>,
    ref_window: Vec<(f64, f64)>,
    /// (obstacle, step) pairs kept after culling.
    dyn_pairs: Vec<(usize, usize)>,
}

fn windows_for(line: &Polyline, anchors: &[Vec2], half: f64) -> Vec<(f64, f64)> {
    anchors
        .iter()
        .map(|&p| {
            let s = line.project(p).s;
            (s - half, s + half)
        })
        .collect()
}

impl<'a> ConstraintEvaluator<'a> {
    /// `anchors` (normally the behavior trajectory) select the projection
    /// windows and the obstacle culling.
    pub fn new(set: &'a ConstraintSet, anchors: &[Vec2], dt: f64, window: f64, cull_radius: f64) -> Self {
        let n = anchors.len();
        let left_window = set.boundary_left.as_ref().map(|l| windows_for(l, anchors, window)).unwrap_or_default();
        let right_window = set.boundary_right.as_ref().map(|l| windows_for(l, anchors, window)).unwrap_or_default();
        let ref_window = set.reference.as_ref().map(|l| windows_for(l, anchors, window)).unwrap_or_default();
        let mut dyn_pairs = Vec::new();
        for (k, ob) in set.obstacles.iter().enumerate() {
            for i in set.first_constrained..n.min(ob.polygons.len()) {
                if pseudo_distance(anchors[i], &ob.polygons[i]) <= cull_radius {
                    dyn_pairs.push((k, i));
                }
            }
        }
        ConstraintEvaluator {
            set,
            dt,
            n,
            left_window,
            right_window,
            ref_window,
            dyn_pairs,
        }
    }

    pub fn len_hint(&self) -> usize {
        4 * self.n + self.dyn_pairs.len()
    }

    /// Fills `out` with every residual at `points`; the layout only depends
    /// on the evaluator, never on `points`.
    pub fn evaluate(&self, points: &[Vec2], out: &mut Vec<Residual>) {
        out.clear();
        let set = self.set;
        let r = set.radius;
        let first = set.first_constrained.min(self.n);
        if let Some(left) = &set.boundary_left {
            for i in first..self.n {
                let (lo, hi) = self.left_window[i];
                let proj = left.project_window(points[i], lo, hi);
                let g = offset_gradient(left, &proj, points[i]);
                out.push(Residual::single(Family::BoundaryLeft, r + proj.d, i, g));
            }
        }
        if let Some(right) = &set.boundary_right {
            for i in first..self.n {
                let (lo, hi) = self.right_window[i];
                let proj = right.project_window(points[i], lo, hi);
                let g = offset_gradient(right, &proj, points[i]);
                out.push(Residual::single(Family::BoundaryRight, r - proj.d, i, -g));
            }
        }
        for &(k, i) in &self.dyn_pairs {
            let sd = set.obstacles[k].polygons[i].signed_distance(points[i]);
            out.push(Residual::single(Family::Dynamic, r - sd.distance, i, -sd.gradient));
        }
        if let (Some(path), Some(corr)) = (&set.reference, &set.corridor) {
            for i in first..self.n.min(corr.len()) {
                let (lo, hi) = self.ref_window[i];
                let proj = path.project_window(points[i], lo, hi);
                let t = path.segment_direction(proj.segment);
                out.push(Residual::single(Family::SpatioTemporal, corr.s_min[i] - proj.s, i, -t));
                out.push(Residual::single(Family::SpatioTemporal, proj.s - corr.s_max[i], i, t));
            }
        }
        if self.n >= 3 {
            let c = stencil(2);
            let inv = 1.0 / (self.dt * self.dt);
            for i in 0..self.n {
                let start = window_start(i, self.n, 2);
                let a = (points[start] * c[0] + points[start + 1] * c[1] + points[start + 2] * c[2]) * inv;
                let mut grad = [Vec2::ZERO; 3];
                for (j, g) in grad.iter_mut().enumerate() {
                    *g = a * (2.0 * c[j] * inv);
                }
                out.push(Residual {
                    family: Family::Acceleration,
                    value: a.norm_sq() - set.a_max * set.a_max,
                    start,
                    count: 3,
                    grad,
                    curvature: 2.0 * inv * inv,
                });
            }
        }
    }
}

/// Largest residual of each family (negative when all satisfied, `-inf` for
/// an empty family).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyMaxima {
    pub boundary_left: f64,
    pub boundary_right: f64,
    pub dynamic: f64,
    pub spatio_temporal: f64,
    pub acceleration: f64,
}

impl Default for FamilyMaxima {
    fn default() -> Self {
        FamilyMaxima {
            boundary_left: f64::NEG_INFINITY,
            boundary_right: f64::NEG_INFINITY,
            dynamic: f64::NEG_INFINITY,
            spatio_temporal: f64::NEG_INFINITY,
            acceleration: f64::NEG_INFINITY,
        }
    }
}

impl FamilyMaxima {
    pub fn from_residuals(res: &[Residual]) -> Self {
        let mut m = FamilyMaxima::default();
        for r in res {
            let slot = m.slot(r.family);
            *slot = slot.max(r.value);
        }
        m
    }

    fn slot(&mut self, f: Family) -> &mut f64 {
        match f {
            Family::BoundaryLeft => &mut self.boundary_left,
            Family::BoundaryRight => &mut self.boundary_right,
            Family::Dynamic => &mut self.dynamic,
            Family::SpatioTemporal => &mut self.spatio_temporal,
            Family::Acceleration => &mut self.acceleration,
        }
    }

    pub fn get(&self, f: Family) -> f64 {
        match f {
            Family::BoundaryLeft => self.boundary_left,
            Family::BoundaryRight => self.boundary_right,
            Family::Dynamic => self.dynamic,
            Family::SpatioTemporal => self.spatio_temporal,
            Family::Acceleration => self.acceleration,
        }
    }

    pub fn max(&self) -> f64 {
        Family::ALL.iter().map(|&f| self.get(f)).fold(f64::NEG_INFINITY, f64::max)
    }
}
