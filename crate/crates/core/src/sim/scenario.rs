//! Scenario documents: lanes, vehicles with routes, the ego, conflict
//! annotations and simulation settings, plus their validation.

use std::collections::HashSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::behavior_gen::ConflictAnnotation;
use crate::config::{merge_json, ConfigError, PlannerConfig};
use crate::driver_models::IdmParams;
use crate::geometry::Vec2;
use crate::road_model::{Lane, LaneKind, Polyline, RoadError, RoadMap, RoutePath};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot parse scenario at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error(transparent)]
    Road(#[from] RoadError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid scenario:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaneSpec {
    pub id: String,
    pub centerline: Vec<[f64; 2]>,
    /// Boundaries at half this width on either side; alternatively give
    /// explicit boundary polylines.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary_left: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary_right: Option<Vec<[f64; 2]>>,
    pub speed_limit: f64,
    #[serde(default)]
    pub kind: LaneKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub successors: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left_neighbor: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right_neighbor: Option<String>,
}

fn default_length() -> f64 {
    4.5
}

fn default_width() -> f64 {
    1.8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleSpec {
    pub id: String,
    /// Lane sequence; the vehicle starts on the first lane.
    pub route: Vec<String>,
    /// Start arc length on the first lane [m].
    pub s0: f64,
    pub v0: f64,
    #[serde(default = "default_length")]
    pub length: f64,
    #[serde(default = "default_width")]
    pub width: f64,
    /// Overrides merged over the configured driver model of other vehicles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idm: Option<Value>,
    /// Parked vehicle that never moves.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub stationary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EgoFile {
    pub route: Vec<String>,
    pub s0: f64,
    pub v0: f64,
    pub v_desired: f64,
    #[serde(default = "default_length")]
    pub length: f64,
    #[serde(default = "default_width")]
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSettings {
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    /// Amplitude of a seeded uniform perturbation of the other vehicles'
    /// initial speeds [m/s].
    #[serde(default)]
    pub speed_jitter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub lanes: Vec<LaneSpec>,
    #[serde(default)]
    pub vehicles: Vec<VehicleSpec>,
    pub ego: EgoFile,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub conflicts: Vec<ConflictAnnotation>,
    pub sim: SimSettings,
    /// Planner configuration overrides.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<Value>,
}

/// A vehicle ready for simulation.
#[derive(Debug, Clone)]
pub struct Agent {
    pub id: String,
    pub path: Arc<RoutePath>,
    pub s0: f64,
    pub v0: f64,
    pub length: f64,
    pub width: f64,
    pub idm: IdmParams,
    pub stationary: bool,
}

/// A validated scenario with its road map and resolved configuration.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub map: Arc<RoadMap>,
    pub config: PlannerConfig,
    pub agents: Vec<Agent>,
    pub ego_path: Arc<RoutePath>,
}

fn points(raw: &[[f64; 2]]) -> Vec<Vec2> {
    raw.iter().map(|p| Vec2::new(p[0], p[1])).collect()
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let inner = e.inner();
            ScenarioError::Parse {
                path: e.path().to_string(),
                message: format!("{inner} (line {}, column {})", inner.line(), inner.column()),
            }
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    fn build_map(&self, problems: &mut Vec<String>) -> RoadMap {
        let mut lanes = Vec::new();
        for spec in &self.lanes {
            match build_lane(spec) {
                Ok(l) => lanes.push(l),
                Err(e) => problems.push(format!("lane {}: {e}", spec.id)),
            }
        }
        RoadMap::new(lanes)
    }

    /// Schema-level and geometric problems; empty when the scenario is sound.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut ids = HashSet::new();
        for l in &self.lanes {
            if !ids.insert(l.id.as_str()) {
                out.push(format!("duplicate lane id {}", l.id));
            }
        }
        let map = self.build_map(&mut out);
        for spec in &self.lanes {
            let Ok(lane) = map.lane(&spec.id) else { continue };
            for s in spec.successors.iter().chain(&spec.left_neighbor).chain(&spec.right_neighbor) {
                if !map.contains(s) {
                    out.push(format!("lane {} references unknown lane {s}", spec.id));
                }
            }
            out.extend(sidedness(lane));
        }
        if !(self.sim.duration > 0.0) {
            out.push("sim.duration must be positive".into());
        }
        let mut vids = HashSet::new();
        let routes = self
            .vehicles
            .iter()
            .map(|v| (format!("vehicle {}", v.id), &v.route, v.s0))
            .chain(std::iter::once(("ego".to_string(), &self.ego.route, self.ego.s0)));
        for (who, route, s0) in routes {
            if !vids.insert(who.clone()) {
                out.push(format!("duplicate {who}"));
            }
            out.extend(route_problems(&map, &who, route, s0));
        }
        if !(self.ego.v_desired > 0.0) {
            out.push("ego.v_desired must be positive".into());
        }
        for v in &self.vehicles {
            if !(v.length > 0.0 && v.width > 0.0) {
                out.push(format!("vehicle {} needs positive dimensions", v.id));
            }
        }
        for (i, c) in self.conflicts.iter().enumerate() {
            for (lane, s) in [(&c.lane_a, c.s_a), (&c.lane_b, c.s_b)] {
                match map.lane(lane) {
                    Ok(l) if (0.0..=l.length()).contains(&s) => {}
                    Ok(_) => out.push(format!("conflict {i}: s={s} outside lane {lane}")),
                    Err(_) => out.push(format!("conflict {i}: unknown lane {lane}")),
                }
            }
            if let (Ok(a), Ok(b)) = (map.lane(&c.lane_a), map.lane(&c.lane_b)) {
                let gap = a.centerline.point_at(c.s_a).distance(b.centerline.point_at(c.s_b));
                if gap > 0.5 {
                    out.push(format!("conflict {i}: points on {} and {} are {gap:.2} m apart", c.lane_a, c.lane_b));
                }
            }
        }
        out
    }

    /// Validates and resolves the scenario on top of `base` configuration and
    /// optional further overrides (applied last).
    pub fn build(&self, base: &PlannerConfig, overrides: Option<&Value>) -> Result<Scenario, ScenarioError> {
        let problems = self.problems();
        if !problems.is_empty() {
            return Err(ScenarioError::Invalid(problems));
        }
        let config = base.with_overrides(self.config.iter().chain(overrides))?;
        let map = Arc::new(self.build_map(&mut Vec::new()));
        let mut agents = Vec::new();
        for v in &self.vehicles {
            let mut idm = serde_json::to_value(config.others_idm).expect("serializes");
            if let Some(o) = &v.idm {
                merge_json(&mut idm, o);
            }
            let idm: IdmParams = serde_path_to_error::deserialize(idm).map_err(|e| ScenarioError::Parse {
                path: format!("vehicles.{}.idm.{}", v.id, e.path()),
                message: e.inner().to_string(),
            })?;
            if !idm.is_valid() {
                return Err(ScenarioError::Invalid(vec![format!("vehicle {}: invalid idm parameters", v.id)]));
            }
            let path = Arc::new(RoutePath::new(&map, &v.route, config.a_lat_profile, config.a_lon_profile)?);
            agents.push(Agent {
                id: v.id.clone(),
                path,
                s0: v.s0,
                v0: v.v0,
                length: v.length,
                width: v.width,
                idm,
                stationary: v.stationary,
            });
        }
        let ego_path = Arc::new(RoutePath::new(&map, &self.ego.route, config.a_lat_profile, config.a_lon_profile)?);
        Ok(Scenario {
            file: self.clone(),
            map,
            config,
            agents,
            ego_path,
        })
    }
}

fn build_lane(spec: &LaneSpec) -> Result<Lane, RoadError> {
    let center = Polyline::new_dedup(points(&spec.centerline))?;
    let mut lane = match (&spec.width, &spec.boundary_left, &spec.boundary_right) {
        (Some(w), None, None) => Lane::with_width(&spec.id, center, *w, spec.speed_limit, spec.kind)?,
        (None, Some(l), Some(r)) => Lane::new(
            &spec.id,
            center,
            Polyline::new_dedup(points(l))?,
            Polyline::new_dedup(points(r))?,
            spec.speed_limit,
            spec.kind,
        )?,
        _ => return Err(RoadError::MissingBoundaries(spec.id.clone())),
    };
    lane.successors = spec.successors.clone();
    lane.left_neighbor = spec.left_neighbor.clone();
    lane.right_neighbor = spec.right_neighbor.clone();
    Ok(lane)
}

/// Every 2 m along the centerline the left boundary must lie to the left and
/// the right boundary to the right.
fn sidedness(lane: &Lane) -> Vec<String> {
    let mut out = Vec::new();
    let len = lane.length();
    let mut s = 0.0;
    while s <= len {
        let c = lane.centerline.point_at(s);
        let t = lane.centerline.tangent_at(s);
        let l = lane.boundary_left.project(c).foot - c;
        let r = lane.boundary_right.project(c).foot - c;
        if t.cross(l) <= 0.0 || t.cross(r) >= 0.0 {
            out.push(format!("lane {}: boundaries not on their sides at s={s:.1}", lane.id));
            break;
        }
        s += 2.0;
    }
    out
}

fn route_problems(map: &RoadMap, who: &str, route: &[String], s0: f64) -> Vec<String> {
    let mut out = Vec::new();
    if route.is_empty() {
        out.push(format!("{who}: empty route"));
        return out;
    }
    for (i, id) in route.iter().enumerate() {
        let Ok(lane) = map.lane(id) else {
            out.push(format!("{who}: unknown lane {id}"));
            return out;
        };
        if let Some(next) = route.get(i + 1) {
            if !lane.successors.contains(next) {
                out.push(format!("{who}: route is disconnected between {id} and {next}"));
            }
        }
    }
    if let Ok(first) = map.lane(&route[0]) {
        if !(0.0..=first.length()).contains(&s0) {
            out.push(format!("{who}: s0={s0} outside lane {}", route[0]));
        }
    }
    out
}
