use serde::{Deserialize, Serialize};
use std::fmt;

use crate::geometry::{ConvexPolygon, Vec2};

/// Pose, motion and footprint of one traffic participant. Positions refer to
/// the mass center, taken as the footprint center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: String,
    pub position: Vec2,
    pub heading: f64,
    pub v: f64,
    pub a: f64,
    pub length: f64,
    pub width: f64,
}

impl VehicleState {
    pub fn footprint(&self) -> ConvexPolygon {
        ConvexPolygon::rectangle(self.position, self.heading, self.length, self.width)
    }

    pub fn direction(&self) -> Vec2 {
        Vec2::from_angle(self.heading)
    }
}

/// Behavior option that produced a trajectory.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Maneuver {
    Free,
    Follow,
    GoBefore,
    YieldTo(String),
    Stop,
    LaneChange,
    Emergency,
    Evasive,
}

impl Maneuver {
    /// Tie-break rank used when candidate costs are equal (lower wins).
    pub fn priority(&self) -> u8 {
        match self {
            Maneuver::Free | Maneuver::Follow | Maneuver::GoBefore | Maneuver::LaneChange => 0,
            Maneuver::YieldTo(_) => 1,
            Maneuver::Stop => 2,
            Maneuver::Emergency | Maneuver::Evasive => 3,
        }
    }
}

impl fmt::Display for Maneuver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Maneuver::Free => f.write_str("free"),
            Maneuver::Follow => f.write_str("follow"),
            Maneuver::GoBefore => f.write_str("go_before"),
            Maneuver::YieldTo(id) => write!(f, "yield_to:{id}"),
            Maneuver::Stop => f.write_str("stop"),
            Maneuver::LaneChange => f.write_str("lane_change"),
            Maneuver::Emergency => f.write_str("emergency"),
            Maneuver::Evasive => f.write_str("evasive"),
        }
    }
}

/// Reference trajectory handed to the central optimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorTrajectory {
    pub points: Vec<Vec2>,
    /// Arc length of each point along the reference path.
    pub s: Vec<f64>,
    pub v: Vec<f64>,
    /// Longitudinal acceleration applied after each point.
    pub a: Vec<f64>,
    pub dt: f64,
    pub maneuver: Maneuver,
}

impl BehaviorTrajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn mean_accel(&self) -> f64 {
        if self.a.is_empty() {
            return 0.0;
        }
        self.a.iter().sum::<f64>() / self.a.len() as f64
    }
}

/// Fixed-step sequence of planned mass-center positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<Vec2>,
    pub dt: f64,
}

impl Trajectory {
    pub fn new(points: Vec<Vec2>, dt: f64) -> Self {
        Trajectory { points, dt }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Time spanned from first to last point.
    pub fn duration(&self) -> f64 {
        self.dt * (self.points.len().saturating_sub(1)) as f64
    }

    /// Forward-difference velocity vector at index `i` (backward at the end).
    pub fn velocity(&self, i: usize) -> Vec2 {
        let n = self.points.len();
        if n < 2 {
            return Vec2::ZERO;
        }
        if i + 1 < n {
            (self.points[i + 1] - self.points[i]) / self.dt
        } else {
            (self.points[n - 1] - self.points[n - 2]) / self.dt
        }
    }
}

/// Per-step arc-length bounds along the reference path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatioTemporalCorridor {
    pub s_min: Vec<f64>,
    pub s_max: Vec<f64>,
}

impl SpatioTemporalCorridor {
    pub fn unbounded(n: usize, path_length: f64) -> Self {
        SpatioTemporalCorridor {
            s_min: vec![0.0; n],
            s_max: vec![path_length; n],
        }
    }

    pub fn len(&self) -> usize {
        self.s_min.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s_min.is_empty()
    }

    pub fn is_feasible(&self) -> bool {
        self.s_min.iter().zip(&self.s_max).all(|(lo, hi)| lo <= hi)
    }

    pub fn contains(&self, s: &[f64], tol: f64) -> bool {
        s.len() == self.len()
            && s.iter()
                .zip(self.s_min.iter().zip(&self.s_max))
                .all(|(&v, (&lo, &hi))| v >= lo - tol && v <= hi + tol)
    }

    pub fn is_monotone(&self) -> bool {
        self.s_min.windows(2).all(|w| w[1] >= w[0]) && self.s_max.windows(2).all(|w| w[1] >= w[0])
    }
}
