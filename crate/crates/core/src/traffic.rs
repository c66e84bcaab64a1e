//! Locating other vehicles relative to a reference path.

use crate::driver_models::LeaderObservation;
use crate::geometry::normalize_angle;
use crate::road_model::Polyline;
use crate::types::VehicleState;

/// A vehicle whose footprint center lies on a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Occupant {
    /// Index into the vehicle slice the occupant was found in.
    pub index: usize,
    /// Arc length of the mass center along the path.
    pub s: f64,
    pub d: f64,
    pub v: f64,
    pub a: f64,
    pub length: f64,
}

impl Occupant {
    pub fn rear(&self) -> f64 {
        self.s - 0.5 * self.length
    }

    pub fn front(&self) -> f64 {
        self.s + 0.5 * self.length
    }
}

/// Vehicles within `lateral_tol` of the path and heading along it
/// (within `heading_tol`), sorted by arc length. Vehicles projecting onto
/// the path end points are ignored unless actually on the path.
pub fn occupants(path: &Polyline, vehicles: &[VehicleState], lateral_tol: f64, heading_tol: f64) -> Vec<Occupant> {
    let mut out: Vec<Occupant> = vehicles
        .iter()
        .enumerate()
        .filter_map(|(index, veh)| {
            let proj = path.project(veh.position);
            if proj.d.abs() > lateral_tol || proj.foot.distance(veh.position) > lateral_tol {
                return None;
            }
            let path_heading = path.heading_at(proj.s);
            if veh.v > 0.1 && normalize_angle(veh.heading - path_heading).abs() > heading_tol {
                return None;
            }
            Some(Occupant {
                index,
                s: proj.s,
                d: proj.d,
                v: veh.v,
                a: veh.a,
                length: veh.length,
            })
        })
        .collect();
    out.sort_by(|a, b| a.s.total_cmp(&b.s).then(a.index.cmp(&b.index)));
    out
}

/// Nearest occupant ahead of and behind arc length `s` (strictly by center).
pub fn leader_and_follower(occ: &[Occupant], s: f64) -> (Option<Occupant>, Option<Occupant>) {
    let leader = occ.iter().find(|o| o.s > s).copied();
    let follower = occ.iter().rev().find(|o| o.s <= s).copied();
    (leader, follower)
}

/// Observation of `leader` by a follower with center `s`, speed `v` and
/// length `length`.
pub fn observe(leader: &Occupant, s: f64, v: f64, length: f64) -> LeaderObservation {
    LeaderObservation::new(leader.rear() - (s + 0.5 * length), v - leader.v, leader.a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;

    fn car(id: &str, x: f64, y: f64, heading: f64) -> VehicleState {
        VehicleState {
            id: id.into(),
            position: Vec2::new(x, y),
            heading,
            v: 10.0,
            a: 0.0,
            length: 4.0,
            width: 1.8,
        }
    }

    #[test]
    fn finds_leader_and_follower() {
        let path = Polyline::new(vec![Vec2::new(0.0, 0.0), Vec2::new(200.0, 0.0)]).unwrap();
        let cars = vec![
            car("ahead", 60.0, 0.2, 0.0),
            car("behind", 20.0, -0.3, 0.0),
            car("other_lane", 45.0, 3.5, 0.0),
            car("oncoming", 80.0, 0.0, std::f64::consts::PI),
        ];
        let occ = occupants(&path, &cars, 1.5, 1.0);
        assert_eq!(occ.len(), 2);
        let (l, f) = leader_and_follower(&occ, 40.0);
        assert_eq!(cars[l.unwrap().index].id, "ahead");
        assert_eq!(cars[f.unwrap().index].id, "behind");
        let obs = observe(&l.unwrap(), 40.0, 12.0, 4.0);
        assert!((obs.gap - 16.0).abs() < 1e-9);
        assert!((obs.dv - 2.0).abs() < 1e-12);
    }
}
