//! One replanning cycle: assess the situation, step the mode machine, build
//! the behavior trajectory of the active mode and refine it with the central
//! optimization.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::behavior_gen::{
    find_conflicts, generate_candidates, predict_hypotheses, select_behavior, BehaviorContext, ConflictAnnotation,
    EgoContext, Hypothesis, PredictionSettings,
};
use crate::central_opt::{
    ego_radius, resize_and_triangle, solve, ConstraintSet, ObstaclePrediction, OptError, OptProblem, SolveReport,
    SolveStatus,
};
use crate::config::PlannerConfig;
use crate::decision::{
    criticality, mobil, step_fsm, structural_gate, EgoView, FsmContext, Mode, PlannerState, Side, SituationFlags,
};
use crate::driver_models::{LeaderObservation, LeaderTrace};
use crate::emergency::{plan_emergency, EmergencyInput, EmergencyOutcome, ObstacleSpan};
use crate::geometry::{normalize_angle, Vec2};
use crate::lane_change::{generate_lane_change, PathLeader, SingleTrackState};
use crate::road_model::{Polyline, RoadError, RoadMap, RoutePath};
use crate::traffic::{leader_and_follower, observe, occupants, Occupant};
use crate::types::{BehaviorTrajectory, Maneuver, SpatioTemporalCorridor, Trajectory, VehicleState};

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error(transparent)]
    Road(#[from] RoadError),
    #[error(transparent)]
    Optimizer(#[from] OptError),
    #[error("ego route has no lane continuing from `{0}`")]
    NoRoute(String),
}

/// Ego body and desired speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoSpec {
    pub length: f64,
    pub width: f64,
    pub v_desired: f64,
}

/// How the executed trajectory of a cycle came about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanStatus {
    /// Central optimization returned this status.
    Optimized(SolveStatus),
    /// Optimization failed once; the previous plan is continued.
    Held,
    /// Planning has failed; braking at the emergency deceleration along the
    /// last feasible plan.
    Braking,
}

impl PlanStatus {
    pub fn is_feasible(self) -> bool {
        matches!(self, PlanStatus::Optimized(SolveStatus::Success | SolveStatus::MaxIterations))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmergencyInfo {
    pub outcome: EmergencyOutcome,
    pub lon_infeasible: bool,
    pub evasion_attempted: bool,
}

/// Everything one cycle produced; the constraint set allows independent
/// re-evaluation of the solution.
#[derive(Debug, Clone)]
pub struct PlanRecord {
    pub t: f64,
    pub mode: Mode,
    pub lane: String,
    pub flags: SituationFlags,
    pub maneuver: Maneuver,
    pub status: PlanStatus,
    pub behavior: BehaviorTrajectory,
    pub trajectory: Trajectory,
    pub report: Option<SolveReport>,
    pub constraints: ConstraintSet,
    pub emergency: Option<EmergencyInfo>,
    /// Set when behavior selection found no admissible candidate.
    pub behavior_fallback: bool,
    pub warnings: Vec<String>,
}

/// Persistent planner: mode machine state, route and the last feasible plan.
#[derive(Debug, Clone)]
pub struct Planner {
    cfg: PlannerConfig,
    map: Arc<RoadMap>,
    annotations: Vec<ConflictAnnotation>,
    ego: EgoSpec,
    path: Arc<RoutePath>,
    s_hint: f64,
    state: PlannerState,
    neighbor_paths: HashMap<String, Arc<RoutePath>>,
    last_feasible: Option<(f64, Trajectory)>,
    infeasible_streak: usize,
    failed: bool,
}

/// Back and ahead extent of the boundary and reference windows [m].
const WINDOW_BACK: f64 = 20.0;
const WINDOW_EXTRA: f64 = 40.0;

struct Scene {
    leader: Option<Occupant>,
    follower: Option<Occupant>,
}

fn scene(path: &RoutePath, s: f64, others: &[VehicleState], cfg: &PlannerConfig) -> Scene {
    let occ = occupants(&path.centerline, others, cfg.decision.lateral_tol, cfg.decision.heading_tol);
    let (leader, follower) = leader_and_follower(&occ, s);
    Scene { leader, follower }
}

/// Sub-line around `p` and the arc length at which it starts.
fn window(line: &Polyline, s: f64, back: f64, ahead: f64) -> (Polyline, f64) {
    let lo = (s - back).max(0.0);
    let sub = line.slice(lo, s + ahead);
    (sub, lo)
}

fn boundary_window(line: &Polyline, p: Vec2, back: f64, ahead: f64) -> Polyline {
    window(line, line.project(p).s, back, ahead).0
}

/// Corridor tolerance around an emergency braking profile [m].
const EMERGENCY_SLACK: f64 = 0.05;

fn obstacle(h: &Hypothesis, r: f64, tri: f64, n: usize) -> ObstaclePrediction {
    ObstaclePrediction {
        id: h.vehicle_id.clone(),
        polygons: (0..n).map(|k| resize_and_triangle(&h.state(k.min(h.s.len() - 1)), r, tri)).collect(),
    }
}

/// Predicted positions of one vehicle's hypotheses mapped onto `path`; per
/// step the closest hypothesis still on the path counts.
fn leader_trace_on(path: &RoutePath, hyps: &[&Hypothesis], lateral_tol: f64, s_near: f64, n: usize) -> Option<LeaderTrace> {
    const GONE: f64 = 1e6;
    let mut trace = LeaderTrace {
        rear_s: vec![GONE; n],
        v: vec![0.0; n],
        a: vec![0.0; n],
    };
    let mut any = false;
    for h in hyps {
        let mut hint = s_near;
        for k in 0..n {
            let st = h.state(k.min(h.s.len() - 1));
            let proj = path.centerline.project_window(st.position, hint - 10.0, hint + 60.0);
            if proj.d.abs() > lateral_tol || proj.foot.distance(st.position) > lateral_tol {
                continue;
            }
            hint = proj.s;
            let rear = proj.s - 0.5 * h.length;
            if rear < trace.rear_s[k] {
                trace.rear_s[k] = rear;
                trace.v[k] = h.v[k.min(h.v.len() - 1)];
                trace.a[k] = h.a[k.min(h.a.len() - 1)];
                any = true;
            }
        }
    }
    // steps where no hypothesis is on the path keep the far sentinel: no leader then
    any.then_some(trace)
}

impl Planner {
    pub fn new(
        cfg: PlannerConfig,
        map: Arc<RoadMap>,
        annotations: Vec<ConflictAnnotation>,
        ego: EgoSpec,
        route: &[String],
        start: Vec2,
        t0: f64,
    ) -> Result<Self, PlannerError> {
        let path = Arc::new(RoutePath::new(&map, route, cfg.a_lat_profile, cfg.a_lon_profile)?);
        let s = path.project(start).s;
        let lane = path.lane_at(s).to_string();
        Ok(Planner {
            cfg,
            map,
            annotations,
            ego,
            path,
            s_hint: s,
            state: PlannerState::new(lane, t0),
            neighbor_paths: HashMap::new(),
            last_feasible: None,
            infeasible_streak: 0,
            failed: false,
        })
    }

    pub fn config(&self) -> &PlannerConfig {
        &self.cfg
    }

    pub fn state(&self) -> &PlannerState {
        &self.state
    }

    pub fn path(&self) -> &RoutePath {
        &self.path
    }

    pub fn failed(&self) -> bool {
        self.failed
    }

    pub fn radius(&self) -> f64 {
        ego_radius(self.ego.length, self.ego.width)
    }

    /// Extra front-bumper gap to physical leaders so that following at the
    /// model gap never touches the enlarged obstacle shape.
    pub fn leader_buffer(&self) -> f64 {
        2.0 * self.radius() + self.cfg.optimizer.triangle_length - 0.5 * self.ego.length + self.cfg.leader_margin
    }

    /// Path starting on `lane` near `p`, following the first successor chain.
    fn lane_path(&mut self, lane: &str, p: Vec2) -> Result<Arc<RoutePath>, PlannerError> {
        if let Some(path) = self.neighbor_paths.get(lane) {
            return Ok(path.clone());
        }
        let l = self.map.lane(lane)?;
        let s = l.centerline.project(p).s;
        let reach = self.cfg.decision.lookahead + 200.0;
        let route = self
            .map
            .route_options(lane, s, reach)
            .into_iter()
            .next()
            .ok_or_else(|| PlannerError::NoRoute(lane.to_string()))?;
        let path = Arc::new(RoutePath::new(&self.map, &route, self.cfg.a_lat_profile, self.cfg.a_lon_profile)?);
        self.neighbor_paths.insert(lane.to_string(), path.clone());
        Ok(path)
    }

    fn neighbors(&self, lane: &str) -> (Option<String>, Option<String>) {
        match self.map.lane(lane) {
            Ok(l) => (l.left_neighbor.clone(), l.right_neighbor.clone()),
            Err(_) => (None, None),
        }
    }

    fn pins(&self, ego: &VehicleState) -> [Vec2; 2] {
        [ego.position, ego.position + ego.direction() * (ego.v * self.cfg.dt)]
    }

    /// Runs one cycle at time `t` for the ego state and the other vehicles.
    pub fn plan(&mut self, t: f64, ego: &VehicleState, others: &[VehicleState]) -> Result<PlanRecord, PlannerError> {
        let cfg = self.cfg.clone();
        let n = cfg.n;
        let dt = cfg.dt;
        let r = self.radius();
        let pins = self.pins(ego);
        let w = cfg.optimizer.projection_window;
        let proj = self.path.centerline.project_window(ego.position, self.s_hint - w, self.s_hint + w);
        self.s_hint = proj.s;
        let s = proj.s;
        let current_lane = self.path.lane_at(s).to_string();
        let mut warnings = Vec::new();

        if self.failed {
            let trajectory = self.braking_plan(t, ego);
            return Ok(self.fallback_record(t, current_lane, SituationFlags::default(), trajectory, PlanStatus::Braking, warnings));
        }

        // situation assessment
        let (left_lane, right_lane) = self.neighbors(&current_lane);
        let own = scene(&self.path, s, others, &cfg);
        let view = EgoView {
            state: ego,
            v_desired: self.ego.v_desired,
            idm: &cfg.ego_idm,
        };
        let mut flags = SituationFlags {
            structural_gate: ego.v >= cfg.decision.v_min_lane_change
                && structural_gate(&self.map, &self.path, s, cfg.decision.lookahead, cfg.decision.kappa_gate),
            ..SituationFlags::default()
        };
        // during a lane change the safety of the target side is re-checked
        let sides = match &self.state.lane_change {
            Some(lc) if self.state.mode == Mode::LaneChange => {
                let (l, r) = match lc.side {
                    Side::Left => (Some(lc.target_lane.clone()), None),
                    Side::Right => (None, Some(lc.target_lane.clone())),
                };
                (l, r)
            }
            _ => (left_lane.clone(), right_lane.clone()),
        };
        if let Some(l) = &sides.0 {
            let target = self.lane_path(l, ego.position)?;
            let m = mobil(view, &self.path, &target, others, &cfg.mobil, &cfg.decision);
            flags.incentive_left = m.incentive;
            flags.safe_left = m.safe;
        }
        if let Some(l) = &sides.1 {
            let target = self.lane_path(l, ego.position)?;
            let m = mobil(view, &self.path, &target, others, &cfg.mobil, &cfg.decision);
            flags.incentive_right = m.incentive;
            flags.safe_right = m.safe;
        }
        let mut leader_obs = own.leader.map(|l| observe(&l, s, ego.v, self.ego.length));
        let mut complete = false;
        let mut target_path = None;
        if let (Mode::LaneChange, Some(lc)) = (self.state.mode, &self.state.lane_change) {
            let tp = self.lane_path(&lc.target_lane.clone(), ego.position)?;
            let tproj = tp.project(ego.position);
            let dh = normalize_angle(ego.heading - tp.centerline.heading_at(tproj.s));
            complete = tproj.d.abs() < cfg.decision.completion_offset && dh.abs() < cfg.decision.completion_heading;
            let ts = scene(&tp, tproj.s, others, &cfg);
            leader_obs = LeaderObservation::closest(leader_obs, ts.leader.map(|l| observe(&l, tproj.s, ego.v, self.ego.length)));
            target_path = Some(tp);
        }
        // measured to where the optimizer must stop: the resized leader with its rear triangle
        let clearance = 2.0 * self.radius() + cfg.optimizer.triangle_length - 0.5 * self.ego.length;
        let crit_obs = leader_obs.map(|o| LeaderObservation { gap: o.gap - clearance, ..o });
        flags.critical = criticality(crit_obs.as_ref(), cfg.decision.a_crit);

        // mode machine
        if self.state.mode == Mode::Ltm {
            self.state.lane = current_lane.clone();
        }
        let ctx = FsmContext {
            now: t,
            lane_change_complete: complete,
            current_lane: current_lane.clone(),
            left_lane,
            right_lane,
            dwell: cfg.decision.dwell,
        };
        let prev = self.state.clone();
        self.state = step_fsm(&prev, &flags, &ctx);
        if prev.mode == Mode::LaneChange && self.state.mode != Mode::LaneChange {
            if let (Some(lc), Some(tp)) = (&prev.lane_change, &target_path) {
                if self.state.lane == lc.target_lane {
                    self.path = tp.clone();
                    self.s_hint = tp.project(ego.position).s;
                    self.neighbor_paths.clear();
                }
            }
        }
        if self.state.mode == Mode::LaneChange && target_path.is_none() {
            let lc = self.state.lane_change.clone().expect("lane change carries a target");
            target_path = Some(self.lane_path(&lc.target_lane, ego.position)?);
        }
        let s = self.s_hint;
        let lane = self.path.lane_at(s).to_string();

        // behavior and constraints of the active mode
        let ahead = cfg.horizon() * cfg.v_max + WINDOW_EXTRA;
        let settings = PredictionSettings {
            n,
            dt,
            reach: ahead + 60.0,
            a_lat_max: cfg.a_lat_profile,
            a_lon_comf: cfg.a_lon_profile,
            lateral_tol: cfg.decision.lateral_tol,
            heading_tol: cfg.decision.heading_tol,
        };
        let (hyps, warn) = predict_hypotheses(others, &self.map, &cfg.others_idm, &settings);
        warnings.extend(warn);
        let tri = cfg.optimizer.triangle_length;
        let hyps_of = |vehicle: usize| -> Vec<&Hypothesis> { hyps.iter().filter(|h| h.vehicle == vehicle).collect() };
        let mut obstacles: Vec<ObstaclePrediction> = Vec::new();
        let add_vehicle = |obstacles: &mut Vec<ObstaclePrediction>, vehicle: usize| {
            for h in hyps.iter().filter(|h| h.vehicle == vehicle) {
                if !obstacles.iter().any(|o| o.id == format!("{}#{}", h.vehicle_id, h.option)) {
                    let mut o = obstacle(h, r, tri, n);
                    o.id = format!("{}#{}", h.vehicle_id, h.option);
                    obstacles.push(o);
                }
            }
        };
        let mut emergency = None;
        let mut behavior_fallback = false;
        let (behavior, reference_path, corridor, left, right) = match self.state.mode {
            Mode::Ltm => {
                let leader = own.leader.and_then(|l| {
                    let hs = hyps_of(l.index);
                    if hs.is_empty() {
                        Some(LeaderTrace::constant_speed(l.rear(), l.v, dt, n - 1))
                    } else {
                        leader_trace_on(&self.path, &hs, cfg.decision.lateral_tol, l.s, n)
                    }
                });
                let conflicts = find_conflicts(&self.path, &hyps, &self.annotations, &cfg.behavior);
                let bctx = BehaviorContext {
                    ego: EgoContext {
                        path: &self.path,
                        s,
                        v: ego.v,
                        length: self.ego.length,
                        v_desired: self.ego.v_desired,
                        idm: &cfg.ego_idm,
                        leader: leader.as_ref(),
                        leader_buffer: self.leader_buffer(),
                    },
                    hypotheses: &hyps,
                    conflicts: &conflicts,
                    params: &cfg.behavior,
                    n,
                    dt,
                };
                let candidates = generate_candidates(&bctx);
                let sel = select_behavior(&bctx, candidates);
                behavior_fallback = sel.fallback;
                if let Some(l) = own.leader {
                    add_vehicle(&mut obstacles, l.index);
                }
                for &h in &sel.predecessors {
                    add_vehicle(&mut obstacles, hyps[h].vehicle);
                }
                let path = self.path.clone();
                (sel.behavior, path.clone(), sel.corridor, path.boundary_left.clone(), path.boundary_right.clone())
            }
            Mode::LaneChange => {
                let lc = self.state.lane_change.clone().expect("lane change carries a target");
                let tp = target_path.clone().expect("target path resolved");
                let ts_ego = tp.project(ego.position).s;
                let ts = scene(&tp, ts_ego, others, &cfg);
                let leader = ts.leader.map(|l| PathLeader {
                    rear_s: (0..n).map(|k| l.rear() + l.v * dt * k as f64).collect(),
                    v: vec![l.v; n],
                    a: vec![0.0; n],
                });
                let start = SingleTrackState {
                    x: ego.position.x,
                    y: ego.position.y,
                    theta: ego.heading,
                    v: ego.v,
                };
                let bt = generate_lane_change(
                    start,
                    self.ego.length,
                    self.ego.v_desired,
                    &tp,
                    leader.as_ref(),
                    &cfg.ego_idm,
                    &cfg.lane_change,
                    n,
                    dt,
                );
                for o in [own.leader, ts.leader, ts.follower].into_iter().flatten() {
                    add_vehicle(&mut obstacles, o.index);
                }
                let len = tp.length();
                let corridor = SpatioTemporalCorridor {
                    s_min: vec![0.0; n],
                    s_max: bt.s.iter().map(|&x| (x + cfg.behavior.corridor_slack).min(len)).collect(),
                };
                let (l, r) = match lc.side {
                    Side::Left => (tp.boundary_left.clone(), self.path.boundary_right.clone()),
                    Side::Right => (self.path.boundary_left.clone(), tp.boundary_right.clone()),
                };
                (bt, tp, corridor, l, r)
            }
            Mode::Emergency => {
                let (plan, obstacle_vehicle) = self.emergency_behavior(ego, s, &own, target_path.as_deref(), others);
                emergency = Some(EmergencyInfo {
                    outcome: plan.outcome,
                    lon_infeasible: plan.lon_infeasible,
                    evasion_attempted: plan.evasion_attempted,
                });
                if let Some(v) = obstacle_vehicle {
                    add_vehicle(&mut obstacles, v);
                }
                let path = self.path.clone();
                let len = path.length();
                // no slack: the optimizer may not brake softer than the braking profile
                let corridor = SpatioTemporalCorridor {
                    s_min: vec![0.0; n],
                    s_max: plan.behavior.s.iter().map(|&x| (x + EMERGENCY_SLACK).min(len)).collect(),
                };
                let (l, r) = self.outer_boundaries(&lane, ego.position)?;
                (plan.behavior, path, corridor, l, r)
            }
        };

        // central optimization
        let s_ref = if Arc::ptr_eq(&reference_path, &self.path) {
            s
        } else {
            reference_path.project(ego.position).s
        };
        let (reference, offset) = window(&reference_path.centerline, s_ref, WINDOW_BACK, ahead);
        let corridor = SpatioTemporalCorridor {
            s_min: corridor.s_min.iter().map(|&x| (x - offset).max(0.0)).collect(),
            s_max: corridor.s_max.iter().map(|&x| x - offset).collect(),
        };
        let constraints = ConstraintSet {
            radius: r,
            a_max: cfg.optimizer.a_max,
            boundary_left: Some(boundary_window(&left, ego.position, WINDOW_BACK, ahead)),
            boundary_right: Some(boundary_window(&right, ego.position, WINDOW_BACK, ahead)),
            obstacles,
            reference: Some(reference),
            corridor: Some(corridor),
            first_constrained: 2,
        };
        let problem = OptProblem {
            behavior: &behavior.points,
            pinned: pins,
            dt,
            weights: cfg.weights,
            constraints: &constraints,
        };
        let sol = solve(&problem, &cfg.optimizer, None)?;
        let status = sol.report.status;
        let (trajectory, plan_status) = if status == SolveStatus::Infeasible {
            self.infeasible_streak += 1;
            if self.infeasible_streak >= 2 {
                self.failed = true;
                warnings.push("planner infeasible twice in a row".into());
                (self.braking_plan(t, ego), PlanStatus::Braking)
            } else {
                (self.held_plan(t, ego, &sol.points), PlanStatus::Held)
            }
        } else {
            self.infeasible_streak = 0;
            let traj = Trajectory::new(sol.points, dt);
            self.last_feasible = Some((t, traj.clone()));
            (traj, PlanStatus::Optimized(status))
        };
        for wmsg in &warnings {
            log::warn!("t={t:.2}: {wmsg}");
        }
        log::debug!(
            "t={t:.2} mode={:?} maneuver={} status={:?} violation={:.3e} families={:?} fallback={behavior_fallback}",
            self.state.mode,
            behavior.maneuver,
            status,
            sol.report.max_violation,
            sol.report.family_max
        );
        Ok(PlanRecord {
            t,
            mode: self.state.mode,
            lane,
            flags,
            maneuver: behavior.maneuver.clone(),
            status: plan_status,
            behavior,
            trajectory,
            report: Some(sol.report),
            constraints,
            emergency,
            behavior_fallback,
            warnings,
        })
    }

    /// Left and right outer boundaries of the lane including its neighbors.
    fn outer_boundaries(&mut self, lane: &str, p: Vec2) -> Result<(Polyline, Polyline), PlannerError> {
        let (l, r) = self.neighbors(lane);
        let left = match l {
            Some(id) => self.lane_path(&id, p)?.boundary_left.clone(),
            None => self.path.boundary_left.clone(),
        };
        let right = match r {
            Some(id) => self.lane_path(&id, p)?.boundary_right.clone(),
            None => self.path.boundary_right.clone(),
        };
        Ok((left, right))
    }

    /// Emergency behavior against the nearest leader on the own path or,
    /// during a lane change, the target path.
    fn emergency_behavior(
        &mut self,
        ego: &VehicleState,
        s: f64,
        own: &Scene,
        target: Option<&RoutePath>,
        others: &[VehicleState],
    ) -> (crate::emergency::EmergencyPlan, Option<usize>) {
        let cfg = &self.cfg;
        let n = cfg.n;
        let dt = cfg.dt;
        let r = self.radius();
        let half = 0.5 * self.ego.length;
        let tri = cfg.optimizer.triangle_length;
        // the obstacle in own path coordinates
        let mut lead = own.leader;
        if let Some(tp) = target {
            let ts = tp.project(ego.position).s;
            let tsc = scene(tp, ts, others, cfg);
            if let Some(l) = tsc.leader {
                let veh = &others[l.index];
                let p = self.path.project(veh.position);
                let cand = Occupant { s: p.s, d: p.d, ..l };
                if lead.is_none_or(|x| cand.rear() < x.rear()) {
                    lead = Some(cand);
                }
            }
        }
        let (s_stop, span) = match lead {
            Some(l) => {
                let veh = &others[l.index];
                let lat = 0.5 * veh.width + 2.0 * r;
                (
                    l.rear() - self.leader_buffer() - half,
                    Some(ObstacleSpan {
                        s_from: l.rear() - 2.0 * r - tri,
                        s_to: l.front() + 2.0 * r,
                        d_lo: l.d - lat,
                        d_hi: l.d + lat,
                    }),
                )
            }
            None => (self.path.length(), None),
        };
        let d0 = self.path.centerline.project_window(ego.position, s - 5.0, s + 5.0).d;
        let p1 = ego.position + ego.direction() * (ego.v * dt);
        let d1 = self.path.centerline.project_window(p1, s - 5.0, s + 10.0).d;
        let map = self.map.clone();
        let path = self.path.clone();
        let bounds_at = move |x: f64| -> (f64, f64) {
            let id = path.lane_at(x);
            let Ok(lane) = map.lane(id) else { return (-1.0, 1.0) };
            let local = x - path.offset_of(id).unwrap_or(0.0);
            let half_w = 0.5 * lane.width_at(local);
            let mut lo = -half_w;
            let mut hi = half_w;
            if let Some(nl) = lane.left_neighbor.as_ref().and_then(|id| map.lane(id).ok()) {
                hi += nl.width_at(local.min(nl.length()));
            }
            if let Some(nr) = lane.right_neighbor.as_ref().and_then(|id| map.lane(id).ok()) {
                lo -= nr.width_at(local.min(nr.length()));
            }
            (lo + r, hi - r)
        };
        let input = EmergencyInput {
            path: &self.path,
            s0: s,
            d0,
            d1,
            v0: ego.v,
            a0: ego.a,
            first_step: ego.v * dt,
            s_stop,
            obstacle: span,
            bounds_at: &bounds_at,
            n,
            dt,
        };
        (plan_emergency(&input, &cfg.emergency), lead.map(|l| l.index))
    }

    /// Index of the current time in the last feasible plan and that plan.
    fn last_plan_from(&self, t: f64) -> Option<(usize, &Trajectory)> {
        self.last_feasible.as_ref().map(|(t0, traj)| {
            let k = ((t - t0) / self.cfg.dt).round().max(0.0) as usize;
            (k.min(traj.len() - 1), traj)
        })
    }

    /// The last feasible plan from the current time on, extended at its final
    /// velocity. Without one, the least violating solver output is used.
    fn held_plan(&self, t: f64, ego: &VehicleState, fallback: &[Vec2]) -> Trajectory {
        let n = self.cfg.n;
        let mut pts: Vec<Vec2> = match self.last_plan_from(t) {
            Some((k, traj)) => {
                let mut p = vec![ego.position];
                p.extend_from_slice(&traj.points[(k + 1).min(traj.len())..]);
                p
            }
            None => fallback.to_vec(),
        };
        if pts.len() < 2 {
            pts.push(ego.position + ego.direction() * (ego.v * self.cfg.dt));
        }
        while pts.len() < n {
            let m = pts.len();
            let step = pts[m - 1] - pts[m - 2];
            pts.push(pts[m - 1] + step);
        }
        pts.truncate(n);
        Trajectory::new(pts, self.cfg.dt)
    }

    /// Full braking at the emergency deceleration along the geometry of the
    /// last feasible plan (or straight ahead).
    fn braking_plan(&self, t: f64, ego: &VehicleState) -> Trajectory {
        let n = self.cfg.n;
        let dt = self.cfg.dt;
        let mut geom = vec![ego.position];
        if let Some((k, traj)) = self.last_plan_from(t) {
            geom.extend_from_slice(&traj.points[(k + 1).min(traj.len())..]);
        }
        let last = *geom.last().unwrap();
        let dir = if geom.len() >= 2 {
            (last - geom[geom.len() - 2]).normalized()
        } else {
            ego.direction()
        };
        let dir = if dir.norm() > 0.5 { dir } else { ego.direction() };
        geom.push(last + dir * 200.0);
        let line = Polyline::new_dedup(geom).ok();
        let a = self.cfg.emergency.a_min;
        let mut pts = Vec::with_capacity(n);
        let (mut x, mut v) = (0.0, ego.v);
        // the first step keeps the current speed, like the pinned points of every other plan
        for _ in 0..n {
            pts.push(line.as_ref().map_or(ego.position, |l| l.point_at(x)));
            x += v * dt;
            v = (v + a * dt).max(0.0);
        }
        Trajectory::new(pts, dt)
    }

    fn fallback_record(
        &self,
        t: f64,
        lane: String,
        flags: SituationFlags,
        trajectory: Trajectory,
        status: PlanStatus,
        warnings: Vec<String>,
    ) -> PlanRecord {
        let behavior = BehaviorTrajectory {
            points: trajectory.points.clone(),
            s: vec![0.0; trajectory.len()],
            v: vec![0.0; trajectory.len()],
            a: vec![self.cfg.emergency.a_min; trajectory.len()],
            dt: trajectory.dt,
            maneuver: Maneuver::Emergency,
        };
        PlanRecord {
            t,
            mode: self.state.mode,
            lane,
            flags,
            maneuver: Maneuver::Emergency,
            status,
            behavior,
            trajectory,
            report: None,
            constraints: ConstraintSet::acceleration_only(self.cfg.optimizer.a_max, self.radius()),
            emergency: None,
            behavior_fallback: false,
            warnings,
        }
    }
}
