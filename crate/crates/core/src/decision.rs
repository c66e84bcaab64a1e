//! Situation assessment and the mode state machine.
//!
//! MOBIL decides whether a neighboring lane is attractive and safe, a
//! constant-deceleration check flags imminent rear-end collisions, and a
//! structural gate forbids lane changes near junctions and sharp bends.

use serde::{Deserialize, Serialize};

use crate::driver_models::{eidm_accel, IdmParams, LeaderObservation};
use crate::road_model::{LaneKind, RoadMap, RoutePath};
use crate::traffic::{leader_and_follower, observe, occupants, Occupant};
use crate::types::VehicleState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MobilParams {
    pub politeness: f64,
    /// Minimum acceleration gain for a lane change [m/s^2].
    pub a_threshold: f64,
    /// Maximum deceleration a lane change may impose [m/s^2].
    pub b_safe: f64,
    pub bias: f64,
}

impl Default for MobilParams {
    fn default() -> Self {
        MobilParams {
            politeness: 0.3,
            a_threshold: 0.1,
            b_safe: 4.0,
            bias: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecisionParams {
    /// Required constant deceleration above which a situation is critical [m/s^2].
    pub a_crit: f64,
    pub lookahead: f64,
    pub kappa_gate: f64,
    /// Lane changes start only at or above this speed [m/s].
    pub v_min_lane_change: f64,
    /// Time the criticality flag must stay clear before leaving emergency [s].
    pub dwell: f64,
    pub completion_offset: f64,
    pub completion_heading: f64,
    /// Lateral tolerance for matching vehicles to a lane [m].
    pub lateral_tol: f64,
    pub heading_tol: f64,
}

impl Default for DecisionParams {
    fn default() -> Self {
        DecisionParams {
            a_crit: 5.0,
            lookahead: 150.0,
            kappa_gate: 0.03,
            v_min_lane_change: 5.0,
            dwell: 1.0,
            completion_offset: 0.3,
            completion_heading: 0.05,
            lateral_tol: 1.6,
            heading_tol: 1.0,
        }
    }
}

/// The ego as seen by the assessment.
#[derive(Debug, Clone, Copy)]
pub struct EgoView<'a> {
    pub state: &'a VehicleState,
    pub v_desired: f64,
    pub idm: &'a IdmParams,
}

fn params_at(idm: &IdmParams, path: &RoutePath, s: f64, cap: f64) -> IdmParams {
    idm.with_target(path.target_speed(s).min(cap).max(0.1))
}

struct LaneScene {
    s_ego: f64,
    leader: Option<Occupant>,
    follower: Option<Occupant>,
}

fn scene(path: &RoutePath, ego: &VehicleState, others: &[VehicleState], lateral_tol: f64, heading_tol: f64) -> LaneScene {
    let s_ego = path.project(ego.position).s;
    let occ = occupants(&path.centerline, others, lateral_tol, heading_tol);
    let (leader, follower) = leader_and_follower(&occ, s_ego);
    LaneScene { s_ego, leader, follower }
}

/// Acceleration of `follower` behind `leader` (either may be absent).
fn follower_accel(follower: &Occupant, leader: Option<(f64, f64, f64, f64)>, path: &RoutePath, idm: &IdmParams) -> f64 {
    // leader tuple: (center s, length, v, a)
    let obs = leader.map(|(s, len, v, a)| {
        LeaderObservation::new((s - 0.5 * len) - follower.front(), follower.v - v, a)
    });
    eidm_accel(follower.v, obs.as_ref(), &params_at(idm, path, follower.s, f64::INFINITY))
}

fn as_tuple(o: &Occupant) -> (f64, f64, f64, f64) {
    (o.s, o.length, o.v, o.a)
}

/// Outcome of a MOBIL evaluation for one candidate lane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MobilOutcome {
    pub incentive: bool,
    pub score: f64,
    pub safe: bool,
}

/// MOBIL incentive and safety criteria for moving from `current` to
/// `candidate`. Missing leaders or followers count as free road.
pub fn mobil(
    ego: EgoView<'_>,
    current: &RoutePath,
    candidate: &RoutePath,
    others: &[VehicleState],
    p: &MobilParams,
    dp: &DecisionParams,
) -> MobilOutcome {
    let cur = scene(current, ego.state, others, dp.lateral_tol, dp.heading_tol);
    let cand = scene(candidate, ego.state, others, dp.lateral_tol, dp.heading_tol);
    let e = ego.state;
    let ego_obs = |sc: &LaneScene| sc.leader.map(|l| observe(&l, sc.s_ego, e.v, e.length));
    let a_ego = eidm_accel(e.v, ego_obs(&cur).as_ref(), &params_at(ego.idm, current, cur.s_ego, ego.v_desired));
    let a_ego_new = eidm_accel(e.v, ego_obs(&cand).as_ref(), &params_at(ego.idm, candidate, cand.s_ego, ego.v_desired));
    let ego_tuple_cand = (cand.s_ego, e.length, e.v, a_ego_new);
    let ego_tuple_cur = (cur.s_ego, e.length, e.v, a_ego);

    let mut others_gain = 0.0;
    let mut new_follower_accel = None;
    if let Some(nf) = &cand.follower {
        let before = follower_accel(nf, cand.leader.as_ref().map(as_tuple), candidate, ego.idm);
        let after = follower_accel(nf, Some(ego_tuple_cand), candidate, ego.idm);
        others_gain += after - before;
        new_follower_accel = Some((after, nf.front() < cand.s_ego - 0.5 * e.length));
    }
    if let Some(of) = &cur.follower {
        let before = follower_accel(of, Some(ego_tuple_cur), current, ego.idm);
        let after = follower_accel(of, cur.leader.as_ref().map(as_tuple), current, ego.idm);
        others_gain += after - before;
    }
    let score = (a_ego_new - a_ego) + p.politeness * others_gain - p.bias;
    let follower_ok = new_follower_accel.map_or(true, |(a, behind)| behind && a >= -p.b_safe);
    let leader_ok = cand.leader.map_or(true, |l| l.rear() > cand.s_ego + 0.5 * e.length) && a_ego_new >= -p.b_safe;
    MobilOutcome {
        incentive: score > p.a_threshold,
        score,
        safe: follower_ok && leader_ok,
    }
}

pub fn mobil_incentive(
    ego: EgoView<'_>,
    current: &RoutePath,
    candidate: &RoutePath,
    others: &[VehicleState],
    p: &MobilParams,
    dp: &DecisionParams,
) -> (bool, f64) {
    let m = mobil(ego, current, candidate, others, p, dp);
    (m.incentive, m.score)
}

pub fn lane_change_safety(
    ego: EgoView<'_>,
    current: &RoutePath,
    candidate: &RoutePath,
    others: &[VehicleState],
    p: &MobilParams,
    dp: &DecisionParams,
) -> bool {
    mobil(ego, current, candidate, others, p, dp).safe
}

/// False when a roundabout, an intersection approach or a bend sharper than
/// `kappa_gate` lies within `lookahead` of `s` along the route.
pub fn structural_gate(map: &RoadMap, route: &RoutePath, s: f64, lookahead: f64, kappa_gate: f64) -> bool {
    let end = (s + lookahead).min(route.length());
    let mut x = s.max(0.0);
    while x <= end {
        let kind = map.lane(route.lane_at(x)).map(|l| l.kind).unwrap_or_default();
        if kind != LaneKind::Normal || route.centerline.curvature_at(x).abs() > kappa_gate {
            return false;
        }
        x += 1.0;
    }
    true
}

/// Constant-deceleration rear-end check against the current leader.
pub fn criticality(leader: Option<&LeaderObservation>, a_crit: f64) -> bool {
    match leader {
        None => false,
        Some(l) if l.gap <= 0.0 => true,
        Some(l) => l.dv > 0.0 && l.dv * l.dv / (2.0 * l.gap) > a_crit,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SituationFlags {
    pub incentive_left: bool,
    pub incentive_right: bool,
    pub safe_left: bool,
    pub safe_right: bool,
    pub structural_gate: bool,
    pub critical: bool,
}

impl SituationFlags {
    /// Flags from the low six bits of `bits`, in field order.
    pub fn from_bits(bits: u8) -> Self {
        SituationFlags {
            incentive_left: bits & 1 != 0,
            incentive_right: bits & 2 != 0,
            safe_left: bits & 4 != 0,
            safe_right: bits & 8 != 0,
            structural_gate: bits & 16 != 0,
            critical: bits & 32 != 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Ltm,
    LaneChange,
    Emergency,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Ltm => "LTM",
            Mode::LaneChange => "LaneChange",
            Mode::Emergency => "Emergency",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LaneChangeTarget {
    pub side: Side,
    pub source_lane: String,
    pub target_lane: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerState {
    pub mode: Mode,
    /// Lane followed in longitudinal traffic and emergency modes.
    pub lane: String,
    pub lane_change: Option<LaneChangeTarget>,
    pub mode_since: f64,
    pub critical_clear_since: Option<f64>,
}

impl PlannerState {
    pub fn new(lane: impl Into<String>, now: f64) -> Self {
        PlannerState {
            mode: Mode::Ltm,
            lane: lane.into(),
            lane_change: None,
            mode_since: now,
            critical_clear_since: None,
        }
    }
}

/// Inputs to a transition besides the flags.
#[derive(Debug, Clone, PartialEq)]
pub struct FsmContext {
    pub now: f64,
    pub lane_change_complete: bool,
    /// Lane the ego is currently matched to.
    pub current_lane: String,
    pub left_lane: Option<String>,
    pub right_lane: Option<String>,
    pub dwell: f64,
}

fn enter(mode: Mode, lane: String, lc: Option<LaneChangeTarget>, now: f64) -> PlannerState {
    PlannerState {
        mode,
        lane,
        lane_change: lc,
        mode_since: now,
        critical_clear_since: None,
    }
}

/// One deterministic transition. Priority: emergency, then lane change,
/// then longitudinal traffic.
pub fn step_fsm(state: &PlannerState, flags: &SituationFlags, ctx: &FsmContext) -> PlannerState {
    if flags.critical {
        if state.mode == Mode::Emergency {
            return PlannerState {
                critical_clear_since: None,
                ..state.clone()
            };
        }
        return enter(Mode::Emergency, ctx.current_lane.clone(), None, ctx.now);
    }
    match state.mode {
        Mode::Emergency => {
            let since = state.critical_clear_since.unwrap_or(ctx.now);
            if ctx.now - since >= ctx.dwell {
                enter(Mode::Ltm, ctx.current_lane.clone(), None, ctx.now)
            } else {
                PlannerState {
                    critical_clear_since: Some(since),
                    ..state.clone()
                }
            }
        }
        Mode::LaneChange => {
            let lc = state.lane_change.clone().expect("lane change mode carries a target");
            let safe = match lc.side {
                Side::Left => flags.safe_left,
                Side::Right => flags.safe_right,
            };
            if ctx.lane_change_complete {
                enter(Mode::Ltm, lc.target_lane, None, ctx.now)
            } else if !safe {
                enter(Mode::Ltm, lc.source_lane, None, ctx.now)
            } else {
                state.clone()
            }
        }
        Mode::Ltm => {
            if flags.structural_gate {
                let options = [
                    (flags.incentive_left && flags.safe_left, &ctx.left_lane, Side::Left),
                    (flags.incentive_right && flags.safe_right, &ctx.right_lane, Side::Right),
                ];
                for (ok, lane, side) in options {
                    if let (true, Some(target)) = (ok, lane) {
                        let lc = LaneChangeTarget {
                            side,
                            source_lane: state.lane.clone(),
                            target_lane: target.clone(),
                        };
                        return enter(Mode::LaneChange, state.lane.clone(), Some(lc), ctx.now);
                    }
                }
            }
            state.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;
    use crate::road_model::{Lane, Polyline};
    use proptest::prelude::*;

    fn two_lane_map() -> RoadMap {
        let mk = |id: &str, y: f64| {
            let line = Polyline::new(vec![Vec2::new(0.0, y), Vec2::new(500.0, y)]).unwrap();
            Lane::with_width(id, line, 3.5, 30.0, LaneKind::Normal).unwrap()
        };
        let mut right = mk("right", 0.0);
        let mut left = mk("left", 3.5);
        right.left_neighbor = Some("left".into());
        left.right_neighbor = Some("right".into());
        RoadMap::new(vec![right, left])
    }

    fn path(map: &RoadMap, id: &str) -> RoutePath {
        RoutePath::new(map, &[id.to_string()], 2.0, 1.5).unwrap()
    }

    fn car(id: &str, x: f64, y: f64, v: f64) -> VehicleState {
        VehicleState {
            id: id.into(),
            position: Vec2::new(x, y),
            heading: 0.0,
            v,
            a: 0.0,
            length: 4.5,
            width: 1.8,
        }
    }

    #[test]
    fn empty_road_has_no_incentive() {
        let map = two_lane_map();
        let ego = car("ego", 100.0, 0.0, 20.0);
        let idm = IdmParams::default();
        let view = EgoView { state: &ego, v_desired: 25.0, idm: &idm };
        let (inc, score) = mobil_incentive(view, &path(&map, "right"), &path(&map, "left"), &[], &MobilParams::default(), &DecisionParams::default());
        assert!(!inc);
        assert_eq!(score, 0.0);
        assert!(lane_change_safety(view, &path(&map, "right"), &path(&map, "left"), &[], &MobilParams::default(), &DecisionParams::default()));
    }

    #[test]
    fn slow_leader_creates_incentive() {
        let map = two_lane_map();
        let ego = car("ego", 100.0, 0.0, 15.0);
        let idm = IdmParams::default();
        let view = EgoView { state: &ego, v_desired: 25.0, idm: &idm };
        let leader = car("lead", 125.0, 0.0, 10.0);
        let mp = MobilParams { politeness: 0.0, ..MobilParams::default() };
        let cur = path(&map, "right");
        let cand = path(&map, "left");
        let (inc, score) = mobil_incentive(view, &cur, &cand, &[leader.clone()], &mp, &DecisionParams::default());
        // oracle: two direct model evaluations
        let obs = LeaderObservation::new(125.0 - 2.25 - 102.25, 5.0, 0.0);
        let a_now = eidm_accel(15.0, Some(&obs), &idm.with_target(25.0));
        let a_free = eidm_accel(15.0, None, &idm.with_target(25.0));
        assert!((score - (a_free - a_now)).abs() < 1e-9);
        assert!(a_now < -1.0 && inc);
    }

    #[test]
    fn closing_follower_is_unsafe() {
        let map = two_lane_map();
        let ego = car("ego", 100.0, 0.0, 15.0);
        let idm = IdmParams::default();
        let view = EgoView { state: &ego, v_desired: 25.0, idm: &idm };
        // rear bumper gap of 2 m, closing at 5 m/s
        let follower = car("f", 100.0 - 4.5 - 2.0, 3.5, 20.0);
        let safe = lane_change_safety(view, &path(&map, "right"), &path(&map, "left"), &[follower], &MobilParams::default(), &DecisionParams::default());
        assert!(!safe);
        let far_leader = car("l", 300.0, 3.5, 10.0);
        assert!(lane_change_safety(view, &path(&map, "right"), &path(&map, "left"), &[far_leader], &MobilParams::default(), &DecisionParams::default()));
    }

    #[test]
    fn criticality_examples() {
        assert!(!criticality(None, 5.0));
        assert!(!criticality(Some(&LeaderObservation::new(20.0, 0.0, 0.0)), 5.0));
        assert!(criticality(Some(&LeaderObservation::new(5.0, 10.0, 0.0)), 5.0));
        assert!(!criticality(Some(&LeaderObservation::new(50.0, 5.0, 0.0)), 5.0));
        assert!(criticality(Some(&LeaderObservation::new(0.0, 0.0, 0.0)), 5.0));
    }

    #[test]
    fn gate_examples() {
        let map = two_lane_map();
        assert!(structural_gate(&map, &path(&map, "right"), 10.0, 150.0, 0.03));
        // straight approach followed by a roundabout lane
        let approach = Lane::with_width("a", Polyline::new(vec![Vec2::new(0.0, 0.0), Vec2::new(100.0, 0.0)]).unwrap(), 3.5, 14.0, LaneKind::Normal).unwrap();
        let ring = Lane::with_width("r", Polyline::new(vec![Vec2::new(100.0, 0.0), Vec2::new(140.0, 0.0)]).unwrap(), 3.5, 8.0, LaneKind::Roundabout).unwrap();
        let mut approach = approach;
        approach.successors = vec!["r".into()];
        let m2 = RoadMap::new(vec![approach, ring]);
        let route = RoutePath::new(&m2, &["a".into(), "r".into()], 2.0, 1.5).unwrap();
        assert!(!structural_gate(&m2, &route, 20.0, 100.0, 0.03));
        assert!(structural_gate(&m2, &route, 0.0, 50.0, 0.03));
        // bend of curvature 0.04 ahead
        let pts: Vec<Vec2> = (0..=200)
            .map(|i| {
                let s = i as f64;
                if s < 100.0 {
                    Vec2::new(s, 0.0)
                } else {
                    let th = (s - 100.0) * 0.04;
                    Vec2::new(100.0 + th.sin() / 0.04, (1.0 - th.cos()) / 0.04)
                }
            })
            .collect();
        let bend = Lane::with_width("b", Polyline::new(pts).unwrap(), 3.5, 14.0, LaneKind::Normal).unwrap();
        let m3 = RoadMap::new(vec![bend]);
        let route = RoutePath::new(&m3, &["b".into()], 2.0, 1.5).unwrap();
        assert!(!structural_gate(&m3, &route, 0.0, 150.0, 0.03));
    }

    fn ctx(now: f64, complete: bool) -> FsmContext {
        FsmContext {
            now,
            lane_change_complete: complete,
            current_lane: "mid".into(),
            left_lane: Some("left".into()),
            right_lane: Some("right".into()),
            dwell: 1.0,
        }
    }

    fn states() -> Vec<PlannerState> {
        let ltm = PlannerState::new("mid", 0.0);
        let lc = PlannerState {
            mode: Mode::LaneChange,
            lane_change: Some(LaneChangeTarget {
                side: Side::Left,
                source_lane: "mid".into(),
                target_lane: "left".into(),
            }),
            ..ltm.clone()
        };
        let em = PlannerState {
            mode: Mode::Emergency,
            ..ltm.clone()
        };
        vec![ltm, lc, em]
    }

    #[test]
    fn fsm_examples() {
        let [ltm, lc, _]: [PlannerState; 3] = states().try_into().unwrap();
        assert_eq!(step_fsm(&ltm, &SituationFlags::default(), &ctx(1.0, false)).mode, Mode::Ltm);
        let go = SituationFlags {
            incentive_left: true,
            safe_left: true,
            structural_gate: true,
            ..Default::default()
        };
        let next = step_fsm(&ltm, &go, &ctx(1.0, false));
        assert_eq!(next.mode, Mode::LaneChange);
        assert_eq!(next.lane_change.as_ref().unwrap().target_lane, "left");
        let crit = SituationFlags { critical: true, ..go };
        assert_eq!(step_fsm(&lc, &crit, &ctx(1.0, false)).mode, Mode::Emergency);
        let done = step_fsm(&lc, &go, &ctx(2.0, true));
        assert_eq!((done.mode, done.lane.as_str()), (Mode::Ltm, "left"));
        let abort = step_fsm(&lc, &SituationFlags { safe_left: false, ..go }, &ctx(2.0, false));
        assert_eq!((abort.mode, abort.lane.as_str()), (Mode::Ltm, "mid"));
    }

    #[test]
    fn emergency_dwell() {
        let mut s = step_fsm(&PlannerState::new("mid", 0.0), &SituationFlags { critical: true, ..Default::default() }, &ctx(0.0, false));
        let calm = SituationFlags::default();
        // clear from t = 0.25 on, exits once 1 s has elapsed
        for k in 1..=4 {
            let t = 0.25 * k as f64;
            s = step_fsm(&s, &calm, &ctx(t, false));
            assert_eq!(s.mode, Mode::Emergency, "left emergency early at {t}");
        }
        s = step_fsm(&s, &calm, &ctx(1.25, false));
        assert_eq!(s.mode, Mode::Ltm);
    }

    #[test]
    fn fsm_exhaustive_invariants() {
        for state in states() {
            for bits in 0u8..64 {
                let flags = SituationFlags::from_bits(bits);
                for complete in [false, true] {
                    let c = ctx(5.0, complete);
                    let next = step_fsm(&state, &flags, &c);
                    assert_eq!(next, step_fsm(&state, &flags, &c));
                    if flags.critical {
                        assert_eq!(next.mode, Mode::Emergency);
                    }
                    if state.mode != Mode::LaneChange && next.mode == Mode::LaneChange {
                        assert!(flags.structural_gate);
                        assert_eq!(state.mode, Mode::Ltm);
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn mirrored_scenes_score_equal(dx in 10.0..60.0f64, dv in -5.0..5.0f64, fx in 5.0..40.0f64, fv in -5.0..5.0f64) {
            let mk = |id: &str, y: f64| {
                let line = Polyline::new(vec![Vec2::new(0.0, y), Vec2::new(500.0, y)]).unwrap();
                Lane::with_width(id, line, 3.5, 30.0, LaneKind::Normal).unwrap()
            };
            let map = RoadMap::new(vec![mk("mid", 0.0), mk("left", 3.5), mk("right", -3.5)]);
            let ego = car("ego", 200.0, 0.0, 15.0);
            let idm = IdmParams::default();
            let view = EgoView { state: &ego, v_desired: 25.0, idm: &idm };
            let traffic = |y: f64| vec![car("l", 200.0 + dx, y, 15.0 + dv), car("f", 200.0 - fx, y, 15.0 + fv)];
            let mut others = traffic(3.5);
            others.extend(traffic(-3.5));
            let mp = MobilParams::default();
            let dp = DecisionParams::default();
            let left = mobil(view, &path(&map, "mid"), &path(&map, "left"), &others, &mp, &dp);
            let right = mobil(view, &path(&map, "mid"), &path(&map, "right"), &others, &mp, &dp);
            prop_assert!((left.score - right.score).abs() < 1e-9);
            prop_assert_eq!(left.safe, right.safe);
        }
    }
}
