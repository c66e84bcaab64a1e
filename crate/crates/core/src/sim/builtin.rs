//! Built-in parameterized scenarios: a lane change behind a slow leader, a
//! roundabout entry, an unprotected left turn and an emergency stop.

use std::f64::consts::{FRAC_PI_2, PI};

use serde_json::json;

use super::scenario::{EgoFile, LaneSpec, ScenarioFile, SimSettings, VehicleSpec};
use crate::road_model::LaneKind;

pub const NAMES: [&str; 4] = ["lane_change", "roundabout", "left_turn", "emergency"];

pub const LANE_WIDTH: f64 = 3.5;

/// Built-in scenario by name.
pub fn by_name(name: &str) -> Option<ScenarioFile> {
    match name {
        "lane_change" => Some(lane_change()),
        "roundabout" => Some(roundabout()),
        "left_turn" => Some(left_turn()),
        "emergency" => Some(emergency(1.2)),
        _ => None,
    }
}

fn straight(a: [f64; 2], b: [f64; 2], spacing: f64) -> Vec<[f64; 2]> {
    let len = (b[0] - a[0]).hypot(b[1] - a[1]);
    let n = (len / spacing).ceil().max(1.0) as usize;
    (0..=n)
        .map(|i| {
            let t = i as f64 / n as f64;
            [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
        })
        .collect()
}

/// Circular arc from angle `from` to `to` (counter-clockwise when `to > from`).
fn arc(center: [f64; 2], radius: f64, from: f64, to: f64) -> Vec<[f64; 2]> {
    let n = ((to - from).abs() * radius).ceil().max(2.0) as usize;
    (0..=n)
        .map(|i| {
            let th = from + (to - from) * i as f64 / n as f64;
            [center[0] + radius * th.cos(), center[1] + radius * th.sin()]
        })
        .collect()
}

fn join(parts: &[Vec<[f64; 2]>]) -> Vec<[f64; 2]> {
    let mut out: Vec<[f64; 2]> = Vec::new();
    for p in parts {
        let skip = usize::from(out.last().is_some_and(|l| p.first().is_some_and(|f| (l[0] - f[0]).hypot(l[1] - f[1]) < 1e-9)));
        out.extend(p.iter().skip(skip));
    }
    out
}

fn lane(id: &str, centerline: Vec<[f64; 2]>, speed_limit: f64, kind: LaneKind, successors: &[&str]) -> LaneSpec {
    LaneSpec {
        id: id.into(),
        centerline,
        width: Some(LANE_WIDTH),
        boundary_left: None,
        boundary_right: None,
        speed_limit,
        kind,
        successors: successors.iter().map(|s| s.to_string()).collect(),
        left_neighbor: None,
        right_neighbor: None,
    }
}

fn vehicle(id: &str, route: &[&str], s0: f64, v0: f64) -> VehicleSpec {
    VehicleSpec {
        id: id.into(),
        route: route.iter().map(|s| s.to_string()).collect(),
        s0,
        v0,
        length: 4.5,
        width: 1.8,
        idm: None,
        stationary: false,
    }
}

fn ego(route: &[&str], s0: f64, v0: f64, v_desired: f64) -> EgoFile {
    EgoFile {
        route: route.iter().map(|s| s.to_string()).collect(),
        s0,
        v0,
        v_desired,
        length: 4.5,
        width: 1.8,
    }
}

/// Two-lane straight road; the ego closes in on a slow leader with the left
/// lane empty.
pub fn lane_change() -> ScenarioFile {
    let mut right = lane("right", straight([0.0, 0.0], [800.0, 0.0], 10.0), 22.0, LaneKind::Normal, &[]);
    right.left_neighbor = Some("left".into());
    let mut left = lane("left", straight([0.0, LANE_WIDTH], [800.0, LANE_WIDTH], 10.0), 22.0, LaneKind::Normal, &[]);
    left.right_neighbor = Some("right".into());
    let mut slow = vehicle("slow", &["right"], 254.5, 12.0);
    slow.idm = Some(json!({ "v_target": 12.0 }));
    ScenarioFile {
        name: "lane_change".into(),
        lanes: vec![right, left],
        vehicles: vec![slow],
        ego: ego(&["right"], 50.0, 16.7, 16.7),
        conflicts: vec![],
        sim: SimSettings {
            duration: 16.0,
            seed: 0,
            speed_jitter: 0.0,
        },
        config: None,
    }
}

/// Single-lane roundabout of radius 20 m: the ego enters from the south and
/// leaves to the east, one vehicle circulates towards the ego's entry and a
/// second one enters from the north.
pub fn roundabout() -> ScenarioFile {
    const R: f64 = 20.0;
    let ring = |from: f64, to: f64| arc([0.0, 0.0], R, from, to);
    let kind = LaneKind::Roundabout;
    let lanes = vec![
        lane(
            "south_in",
            join(&[straight([-R, -70.0], [-R, -2.0 * R], 5.0), arc([0.0, -2.0 * R], R, PI, FRAC_PI_2)]),
            8.0,
            LaneKind::IntersectionApproach,
            &["ring_se"],
        ),
        lane(
            "north_in",
            join(&[straight([R, 70.0], [R, 2.0 * R], 5.0), arc([0.0, 2.0 * R], R, 0.0, -FRAC_PI_2)]),
            8.0,
            LaneKind::IntersectionApproach,
            &["ring_nw"],
        ),
        lane("ring_se", ring(-FRAC_PI_2, 0.0), 8.0, kind, &["east_out", "ring_ne"]),
        lane("ring_ne", ring(0.0, FRAC_PI_2), 8.0, kind, &["ring_nw"]),
        lane("ring_nw", ring(FRAC_PI_2, 1.5 * PI), 8.0, kind, &["ring_se"]),
        lane(
            "east_out",
            join(&[arc([2.0 * R, 0.0], R, PI, FRAC_PI_2), straight([2.0 * R, R], [120.0, R], 5.0)]),
            8.0,
            LaneKind::Normal,
            &[],
        ),
    ];
    ScenarioFile {
        name: "roundabout".into(),
        lanes,
        vehicles: vec![
            vehicle("circulating", &["ring_nw", "ring_se", "ring_ne"], 13.0, 6.0),
            vehicle("entering", &["north_in", "ring_nw", "ring_se", "east_out"], 5.0, 6.0),
        ],
        ego: ego(&["south_in", "ring_se", "east_out"], 5.0, 6.0, 8.0),
        conflicts: vec![],
        sim: SimSettings {
            duration: 24.0,
            seed: 0,
            speed_jitter: 0.0,
        },
        config: None,
    }
}

/// Half extent of the intersection box [m].
pub const BOX: f64 = 5.0;

/// Four-way intersection. The ego waits at the stop line of the southern
/// approach to turn left; a prioritized vehicle from the right goes straight
/// onto the ego's exit and a prioritized vehicle from the left is on a
/// right-turn-only lane.
pub fn left_turn() -> ScenarioFile {
    let h = 0.5 * LANE_WIDTH;
    let corner = [-BOX, -BOX];
    let approach = LaneKind::IntersectionApproach;
    let lanes = vec![
        lane("south_in", straight([h, -60.0], [h, -BOX], 5.0), 10.0, approach, &["south_left"]),
        lane("south_left", arc(corner, BOX + h, 0.0, FRAC_PI_2), 10.0, LaneKind::Normal, &["west_out"]),
        lane("west_out", straight([-BOX, h], [-80.0, h], 5.0), 10.0, LaneKind::Normal, &[]),
        lane("east_in", straight([80.0, h], [BOX, h], 5.0), 10.0, approach, &["east_straight"]),
        lane("east_straight", straight([BOX, h], [-BOX, h], 1.0), 10.0, LaneKind::Normal, &["west_out"]),
        lane("west_in", straight([-80.0, -h], [-BOX, -h], 5.0), 10.0, approach, &["west_right"]),
        lane("west_right", arc(corner, BOX - h, FRAC_PI_2, 0.0), 10.0, LaneKind::Normal, &["south_out"]),
        lane("south_out", straight([-h, -BOX], [-h, -80.0], 5.0), 10.0, LaneKind::Normal, &[]),
    ];
    let south_in_len = 60.0 - BOX;
    ScenarioFile {
        name: "left_turn".into(),
        lanes,
        vehicles: vec![
            vehicle("from_right", &["east_in", "east_straight", "west_out"], 55.0, 10.0),
            vehicle("from_left", &["west_in", "west_right", "south_out"], 15.0, 8.0),
        ],
        ego: ego(&["south_in", "south_left", "west_out"], south_in_len - 2.25, 0.0, 8.0),
        conflicts: vec![],
        sim: SimSettings {
            duration: 12.0,
            seed: 0,
            speed_jitter: 0.0,
        },
        config: None,
    }
}

/// Ego start arc length in the emergency scenario [m].
pub const EMERGENCY_EGO_S0: f64 = 20.0;
/// Ego speed in the emergency scenario [m/s].
pub const EMERGENCY_V0: f64 = 20.0;
/// Braking bound in the emergency scenario [m/s^2].
pub const EMERGENCY_A_MIN: f64 = -8.0;

/// Kinematic stopping distance of the emergency scenario [m].
pub fn emergency_braking_distance() -> f64 {
    EMERGENCY_V0 * EMERGENCY_V0 / (2.0 * EMERGENCY_A_MIN.abs())
}

/// Straight road with a free left lane; a stationary vehicle stands ahead
/// with `factor` times the kinematic stopping distance between the ego's
/// front and its rear.
pub fn emergency(factor: f64) -> ScenarioFile {
    let mut own = lane("lane", straight([0.0, 0.0], [400.0, 0.0], 10.0), 25.0, LaneKind::Normal, &[]);
    own.left_neighbor = Some("left".into());
    let mut left = lane("left", straight([0.0, LANE_WIDTH], [400.0, LANE_WIDTH], 10.0), 25.0, LaneKind::Normal, &[]);
    left.right_neighbor = Some("lane".into());
    let gap = factor * emergency_braking_distance();
    let mut obstacle = vehicle("obstacle", &["lane"], EMERGENCY_EGO_S0 + 4.5 + gap, 0.0);
    obstacle.stationary = true;
    ScenarioFile {
        name: format!("emergency_{factor}"),
        lanes: vec![own, left],
        vehicles: vec![obstacle],
        ego: ego(&["lane"], EMERGENCY_EGO_S0, EMERGENCY_V0, EMERGENCY_V0),
        conflicts: vec![],
        sim: SimSettings {
            duration: 6.0,
            seed: 0,
            speed_jitter: 0.0,
        },
        config: Some(json!({ "emergency": { "a_min": EMERGENCY_A_MIN } })),
    }
}
