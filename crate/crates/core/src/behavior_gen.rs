//! Longitudinal behavior generation: prediction of other vehicles, candidate
//! trajectories along the ego path, the social cost that rates them and the
//! spatio-temporal corridor handed to the central problem.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::driver_models::{
    integrate_along_lane, virtual_leader, DriverModel, IdmParams, LeaderObservation, LeaderTrace,
    VirtualLeaderInput,
};
use crate::geometry::normalize_angle;
use crate::road_model::{RoadMap, RoutePath};
use crate::types::{BehaviorTrajectory, Maneuver, SpatioTemporalCorridor, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BehaviorParams {
    /// Weight of the ego term of the social cost.
    pub w_ego: f64,
    /// Weight of the reaction term of the social cost.
    pub w_others: f64,
    /// Allowed progress beyond the behavior trajectory [m].
    pub corridor_slack: f64,
    /// Clearance kept to a conflict entry while yielding [m].
    pub corridor_margin: f64,
    /// How far the optimizer may close in on a physical leader beyond the
    /// behavior's standstill buffer [m].
    pub leader_slack: f64,
    /// Margin used when placing virtual leaders at crossings [m].
    pub virtual_margin: f64,
    /// Half extent of a crossing conflict region along each path [m].
    pub half_region: f64,
    /// Distance of the stop line before the conflict entry [m].
    pub stop_offset: f64,
    /// Paths closer than this are treated as merged [m].
    pub merge_width: f64,
    /// Tolerance for the corridor containment check [m].
    pub containment_tol: f64,
}

impl Default for BehaviorParams {
    fn default() -> Self {
        BehaviorParams {
            w_ego: 1.0,
            w_others: 1.0,
            corridor_slack: 10.0,
            corridor_margin: 2.0,
            leader_slack: 0.25,
            virtual_margin: 3.0,
            half_region: 2.5,
            stop_offset: 1.0,
            merge_width: 3.0,
            containment_tol: 1e-6,
        }
    }
}

/// Predicted motion of one vehicle along one of its route options.
#[derive(Debug, Clone)]
pub struct Hypothesis {
    /// Index into the slice of other vehicles.
    pub vehicle: usize,
    pub vehicle_id: String,
    pub option: usize,
    pub probability: f64,
    pub path: Arc<RoutePath>,
    /// Mass-center arc length, speed and applied acceleration per step.
    pub s: Vec<f64>,
    pub v: Vec<f64>,
    pub a: Vec<f64>,
    pub length: f64,
    pub width: f64,
    pub idm: IdmParams,
    /// Physical leader on the hypothesis path, if any.
    pub leader: Option<LeaderTrace>,
}

impl Hypothesis {
    pub fn front(&self, k: usize) -> f64 {
        self.s[k.min(self.s.len() - 1)] + 0.5 * self.length
    }

    pub fn rear(&self, k: usize) -> f64 {
        self.s[k.min(self.s.len() - 1)] - 0.5 * self.length
    }

    /// Predicted pose at step `k`.
    pub fn state(&self, k: usize) -> VehicleState {
        let k = k.min(self.s.len() - 1);
        VehicleState {
            id: self.vehicle_id.clone(),
            position: self.path.centerline.point_at(self.s[k]),
            heading: self.path.centerline.heading_at(self.s[k]),
            v: self.v[k],
            a: self.a[k],
            length: self.length,
            width: self.width,
        }
    }
}

/// Lanes a vehicle plausibly drives on: close to the centerline and heading
/// along it. Falls back to the nearest lane containing the vehicle.
pub fn match_lanes(map: &RoadMap, vehicle: &VehicleState, strict_tol: f64, heading_tol: f64) -> Vec<(String, f64)> {
    let mut strict = Vec::new();
    let mut best: Option<(f64, String, f64)> = None;
    for lane in map.lanes() {
        let proj = lane.centerline.project(vehicle.position);
        let inside = proj.foot.distance(vehicle.position) <= 0.5 * lane.width_at(proj.s);
        let aligned = vehicle.v < 0.1
            || normalize_angle(vehicle.heading - lane.centerline.heading_at(proj.s)).abs() <= heading_tol;
        if !inside || !aligned {
            continue;
        }
        let dist = proj.foot.distance(vehicle.position);
        if dist <= strict_tol {
            strict.push((lane.id.clone(), proj.s));
        }
        if best.as_ref().is_none_or(|b| dist < b.0) {
            best = Some((dist, lane.id.clone(), proj.s));
        }
    }
    if strict.is_empty() {
        best.map(|(_, id, s)| vec![(id, s)]).unwrap_or_default()
    } else {
        strict
    }
}

/// Settings shared by all predictions of one planning cycle.
#[derive(Debug, Clone, Copy)]
pub struct PredictionSettings {
    pub n: usize,
    pub dt: f64,
    pub reach: f64,
    pub a_lat_max: f64,
    pub a_lon_comf: f64,
    pub lateral_tol: f64,
    pub heading_tol: f64,
}

/// One hypothesis per route option reachable from each matched lane,
/// propagated with IDM behind the physical leader on that route (predicted at
/// constant speed). Unmatched vehicles are skipped and reported.
pub fn predict_hypotheses(
    others: &[VehicleState],
    map: &RoadMap,
    idm: &IdmParams,
    settings: &PredictionSettings,
) -> (Vec<Hypothesis>, Vec<String>) {
    let mut out = Vec::new();
    let mut warnings = Vec::new();
    for (index, veh) in others.iter().enumerate() {
        let matched = match_lanes(map, veh, 0.5, settings.heading_tol);
        if matched.is_empty() {
            warnings.push(format!("vehicle {} is not on any lane", veh.id));
            continue;
        }
        let mut routes: Vec<Vec<String>> = Vec::new();
        for (lane, s) in &matched {
            for r in map.route_options(lane, *s, settings.reach) {
                if !routes.contains(&r) {
                    routes.push(r);
                }
            }
        }
        let mut hyps = Vec::new();
        for (option, route) in routes.iter().enumerate() {
            let Ok(path) = RoutePath::new(map, route, settings.a_lat_max, settings.a_lon_comf) else {
                warnings.push(format!("route of vehicle {} is not drivable", veh.id));
                continue;
            };
            let path = Arc::new(path);
            hyps.push(propagate(index, veh, others, option, path, idm, settings));
        }
        let p = 1.0 / hyps.len().max(1) as f64;
        for mut h in hyps {
            h.probability = p;
            out.push(h);
        }
    }
    (out, warnings)
}

fn propagate(
    index: usize,
    veh: &VehicleState,
    others: &[VehicleState],
    option: usize,
    path: Arc<RoutePath>,
    idm: &IdmParams,
    settings: &PredictionSettings,
) -> Hypothesis {
    let s0 = path.project(veh.position).s;
    let occ = crate::traffic::occupants(&path.centerline, others, settings.lateral_tol, settings.heading_tol);
    let leader = occ
        .iter()
        .find(|o| o.index != index && o.s > s0)
        .map(|o| LeaderTrace::constant_speed(o.rear(), o.v, settings.dt, settings.n));
    let trace = integrate_along_lane(
        (s0, veh.v),
        |k, s, v| leader.as_ref().map(|l| l.observe(k, s + 0.5 * veh.length, v)),
        |s| path.target_speed(s).min(idm.v_target),
        DriverModel::Idm,
        idm,
        settings.dt,
        settings.n - 1,
    );
    Hypothesis {
        vehicle: index,
        vehicle_id: veh.id.clone(),
        option,
        probability: 1.0,
        path,
        s: trace.iter().map(|x| x.s).collect(),
        v: trace.iter().map(|x| x.v).collect(),
        a: trace.iter().map(|x| x.a).collect(),
        length: veh.length,
        width: veh.width,
        idm: *idm,
        leader,
    }
}

/// Crossing point of two lanes given in each lane's own arc length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConflictAnnotation {
    pub lane_a: String,
    pub s_a: f64,
    pub lane_b: String,
    pub s_b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConflictKind {
    Crossing,
    Merge,
}

/// Conflict between the ego path and one hypothesis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conflict {
    pub hypothesis: usize,
    pub kind: ConflictKind,
    pub s_ego: f64,
    pub s_other: f64,
}

impl Conflict {
    fn half(&self, p: &BehaviorParams) -> f64 {
        match self.kind {
            ConflictKind::Crossing => p.half_region,
            ConflictKind::Merge => 0.0,
        }
    }

    pub fn entry_ego(&self, p: &BehaviorParams) -> f64 {
        self.s_ego - self.half(p)
    }

    pub fn exit_ego(&self, p: &BehaviorParams) -> f64 {
        self.s_ego + self.half(p)
    }

    pub fn entry_other(&self, p: &BehaviorParams) -> f64 {
        self.s_other - self.half(p)
    }

    pub fn exit_other(&self, p: &BehaviorParams) -> f64 {
        self.s_other + self.half(p)
    }
}

/// Point where two paths sharing `lane` start to overlap, found by walking
/// back from the lane start while the paths stay within `width`.
fn merge_point(ego: &RoutePath, other: &RoutePath, lane: &str, width: f64) -> Option<(f64, f64)> {
    let me = ego.offset_of(lane)?;
    let mo = other.offset_of(lane)?;
    let limit = me.min(mo);
    let mut back = 0.0;
    while back + 0.25 <= limit {
        let next = back + 0.25;
        if ego.centerline.point_at(me - next).distance(other.centerline.point_at(mo - next)) >= width {
            break;
        }
        back = next;
    }
    Some((me - back, mo - back))
}

/// Conflicts between the ego path and every hypothesis: annotated crossings
/// and merges onto a shared lane. Vehicles already driving on the ego path
/// are leaders or followers, not conflicts.
pub fn find_conflicts(
    ego_path: &RoutePath,
    hypotheses: &[Hypothesis],
    annotations: &[ConflictAnnotation],
    params: &BehaviorParams,
) -> Vec<Conflict> {
    let mut out = Vec::new();
    for (h_idx, h) in hypotheses.iter().enumerate() {
        let hp = &h.path;
        let shared = hp.lane_ids.iter().position(|l| ego_path.lane_ids.contains(l));
        if shared == Some(0) {
            continue;
        }
        for a in annotations {
            let pairs = [(&a.lane_a, a.s_a, &a.lane_b, a.s_b), (&a.lane_b, a.s_b, &a.lane_a, a.s_a)];
            for (le, se, lo, so) in pairs {
                if let (Some(oe), Some(oo)) = (ego_path.offset_of(le), hp.offset_of(lo)) {
                    out.push(Conflict {
                        hypothesis: h_idx,
                        kind: ConflictKind::Crossing,
                        s_ego: oe + se,
                        s_other: oo + so,
                    });
                }
            }
        }
        if let Some(j) = shared {
            if let Some((se, so)) = merge_point(ego_path, hp, &hp.lane_ids[j], params.merge_width) {
                out.push(Conflict {
                    hypothesis: h_idx,
                    kind: ConflictKind::Merge,
                    s_ego: se,
                    s_other: so,
                });
            }
        }
    }
    out
}

/// Ego-side inputs of one generation cycle.
#[derive(Debug, Clone, Copy)]
pub struct EgoContext<'a> {
    pub path: &'a RoutePath,
    pub s: f64,
    pub v: f64,
    pub length: f64,
    pub v_desired: f64,
    pub idm: &'a IdmParams,
    /// Physical leader on the ego path (rear-bumper arc lengths).
    pub leader: Option<&'a LeaderTrace>,
    /// Gap the ego keeps to physical leaders on top of the model gap [m].
    pub leader_buffer: f64,
}

/// Everything generation, rating and corridor construction share.
#[derive(Debug, Clone, Copy)]
pub struct BehaviorContext<'a> {
    pub ego: EgoContext<'a>,
    pub hypotheses: &'a [Hypothesis],
    pub conflicts: &'a [Conflict],
    pub params: &'a BehaviorParams,
    pub n: usize,
    pub dt: f64,
}

impl BehaviorContext<'_> {
    fn relevant(&self, c: &Conflict) -> bool {
        let h = &self.hypotheses[c.hypothesis];
        let p = self.params;
        let ego_rear = self.ego.s - 0.5 * self.ego.length;
        let other_clear = match c.kind {
            ConflictKind::Crossing => h.rear(0) - c.exit_other(p) > h.length,
            ConflictKind::Merge => false,
        };
        ego_rear <= c.exit_ego(p) && !other_clear
    }

    /// Conflicts the ego has not entered yet and can still yield at.
    fn yieldable(&self) -> Vec<&Conflict> {
        let front = self.ego.s + 0.5 * self.ego.length;
        self.conflicts
            .iter()
            .filter(|c| self.relevant(c) && front <= c.entry_ego(self.params))
            .collect()
    }

    fn virtual_obs(&self, c: &Conflict, k: usize, front: f64, v: f64) -> Option<LeaderObservation> {
        let h = &self.hypotheses[c.hypothesis];
        let p = self.params;
        let k = k.min(h.s.len() - 1);
        let input = match c.kind {
            ConflictKind::Crossing => VirtualLeaderInput {
                ego_front_s: front,
                ego_v: v,
                other_rear_s: h.rear(k),
                other_v: h.v[k],
                other_accel: h.a[k],
                other_length: h.length,
                conflict_ego_s: c.entry_ego(p),
                conflict_other_s: c.exit_other(p),
                margin: p.virtual_margin,
            },
            ConflictKind::Merge => VirtualLeaderInput {
                ego_front_s: front,
                ego_v: v,
                other_rear_s: h.rear(k),
                other_v: h.v[k],
                other_accel: h.a[k],
                other_length: f64::INFINITY,
                conflict_ego_s: c.s_ego,
                conflict_other_s: c.s_other,
                // same clearance as behind a physical leader, so nothing jumps once merged
                margin: self.ego.leader_buffer,
            },
        };
        virtual_leader(&input)
    }

    fn rollout(&self, maneuver: Maneuver, yield_to: &[&Conflict], stop_line: Option<f64>) -> BehaviorTrajectory {
        let e = self.ego;
        let half = 0.5 * e.length;
        let trace = integrate_along_lane(
            (e.s, e.v),
            |k, s, v| {
                let front = s + half;
                let mut obs = e.leader.map(|l| {
                    let o = l.observe(k, front, v);
                    LeaderObservation::new(o.gap - e.leader_buffer, o.dv, o.leader_accel)
                });
                for c in yield_to {
                    obs = LeaderObservation::closest(obs, self.virtual_obs(c, k, front, v));
                }
                if let Some(line) = stop_line {
                    obs = LeaderObservation::closest(obs, Some(LeaderObservation::new(line - front, v, 0.0)));
                }
                obs
            },
            |s| e.path.target_speed(s).min(e.v_desired),
            DriverModel::Eidm,
            e.idm,
            self.dt,
            self.n - 1,
        );
        let s: Vec<f64> = trace.iter().map(|x| x.s).collect();
        BehaviorTrajectory {
            points: s.iter().map(|&si| e.path.centerline.point_at(si)).collect(),
            s,
            v: trace.iter().map(|x| x.v).collect(),
            a: trace.iter().map(|x| x.a).collect(),
            dt: self.dt,
            maneuver,
        }
    }

    fn arrival_other(&self, c: &Conflict) -> Option<usize> {
        let h = &self.hypotheses[c.hypothesis];
        let entry = c.entry_other(self.params);
        (0..h.s.len()).find(|&k| h.front(k) >= entry)
    }

    fn arrival_ego(&self, cand: &BehaviorTrajectory, c: &Conflict) -> Option<usize> {
        let entry = c.entry_ego(self.params);
        let half = 0.5 * self.ego.length;
        cand.s.iter().position(|&s| s + half >= entry)
    }

    /// Front-bumper stop position before the given conflicts: the first one
    /// minus the stop offset, or an earlier stop line the ego has not passed.
    fn stop_line(&self, conflicts: &[&Conflict]) -> f64 {
        let entry = conflicts.iter().map(|c| c.entry_ego(self.params)).fold(f64::INFINITY, f64::min);
        self.marked_stop_line(entry).unwrap_or(f64::INFINITY).min(entry - self.params.stop_offset)
    }

    /// Stop line of the path not yet passed by the ego front and not beyond `entry`.
    fn marked_stop_line(&self, entry: f64) -> Option<f64> {
        let front = self.ego.s + 0.5 * self.ego.length;
        self.ego.path.stop_lines.iter().copied().find(|&l| front <= l + STOP_LINE_TOL && l <= entry)
    }

    /// True when some vehicle reaches a conflict ahead within the horizon
    /// before the candidate does.
    fn loses_race(&self, cand: &BehaviorTrajectory) -> bool {
        self.yieldable()
            .into_iter()
            .any(|c| self.arrival_other(c).is_some() && !self.ego_first(cand, c))
    }

    /// True when the ego reaches the conflict strictly before the hypothesis.
    fn ego_first(&self, cand: &BehaviorTrajectory, c: &Conflict) -> bool {
        match (self.arrival_ego(cand, c), self.arrival_other(c)) {
            (Some(te), Some(to)) => te < to,
            (Some(_), None) => true,
            _ => false,
        }
    }
}

/// Candidate set: free or follow always; with conflicts ahead additionally
/// one yield candidate per conflicting vehicle and a stop candidate.
pub fn generate_candidates(ctx: &BehaviorContext<'_>) -> Vec<BehaviorTrajectory> {
    let yieldable = ctx.yieldable();
    let base = if !yieldable.is_empty() {
        Maneuver::GoBefore
    } else if ctx.ego.leader.is_some() {
        Maneuver::Follow
    } else {
        Maneuver::Free
    };
    let mut out = vec![ctx.rollout(base, &[], None)];
    if yieldable.is_empty() {
        return out;
    }
    let mut vehicles: Vec<usize> = yieldable.iter().map(|c| ctx.hypotheses[c.hypothesis].vehicle).collect();
    vehicles.dedup();
    vehicles.sort_unstable();
    vehicles.dedup();
    for veh in vehicles {
        let own: Vec<&Conflict> = yieldable
            .iter()
            .copied()
            .filter(|c| ctx.hypotheses[c.hypothesis].vehicle == veh)
            .collect();
        let latest = own
            .iter()
            .map(|c| ctx.arrival_other(c).unwrap_or(usize::MAX))
            .max()
            .unwrap_or(usize::MAX);
        let set: Vec<&Conflict> = yieldable
            .iter()
            .copied()
            .filter(|c| {
                ctx.hypotheses[c.hypothesis].vehicle == veh || ctx.arrival_other(c).unwrap_or(usize::MAX) <= latest
            })
            .collect();
        let id = ctx.hypotheses[own[0].hypothesis].vehicle_id.clone();
        out.push(ctx.rollout(Maneuver::YieldTo(id), &set, None));
    }
    let line = ctx.stop_line(&yieldable);
    out.push(ctx.rollout(Maneuver::Stop, &[], Some(line)));
    out
}

/// Social cost from its ingredients: the ego's mean acceleration and, per
/// hypothesis, its probability with reacted and unimpeded accelerations.
pub fn social_cost(ego_mean_accel: f64, reactions: &[(f64, &[f64], &[f64])], w_e: f64, w_o: f64) -> f64 {
    let mut others = 0.0;
    for &(p, reacted, unimpeded) in reactions {
        let n = reacted.len().min(unimpeded.len());
        if n == 0 {
            continue;
        }
        let dev: f64 = reacted.iter().zip(unimpeded).map(|(r, u)| (r - u).abs()).sum::<f64>() / n as f64;
        others += p * dev;
    }
    w_e * (-ego_mean_accel) + w_o * others
}

/// Accelerations of a hypothesis vehicle re-propagated with the candidate as
/// its leader wherever the ego reaches the shared conflict first.
pub fn reacted_accels(ctx: &BehaviorContext<'_>, cand: &BehaviorTrajectory, h_idx: usize) -> Vec<f64> {
    let h = &ctx.hypotheses[h_idx];
    let p = ctx.params;
    let half_e = 0.5 * ctx.ego.length;
    let lead: Vec<&Conflict> = ctx
        .conflicts
        .iter()
        .filter(|c| c.hypothesis == h_idx && ctx.relevant(c) && ctx.ego_first(cand, c))
        .collect();
    if lead.is_empty() {
        return h.a.clone();
    }
    let trace = integrate_along_lane(
        (h.s[0], h.v[0]),
        |k, s, v| {
            let front = s + 0.5 * h.length;
            let mut obs = h.leader.as_ref().map(|l| l.observe(k, front, v));
            let ke = k.min(cand.s.len() - 1);
            for c in &lead {
                let input = match c.kind {
                    ConflictKind::Crossing => VirtualLeaderInput {
                        ego_front_s: front,
                        ego_v: v,
                        other_rear_s: cand.s[ke] - half_e,
                        other_v: cand.v[ke],
                        other_accel: cand.a[ke],
                        other_length: ctx.ego.length,
                        conflict_ego_s: c.entry_other(p),
                        conflict_other_s: c.exit_ego(p),
                        margin: p.virtual_margin,
                    },
                    ConflictKind::Merge => VirtualLeaderInput {
                        ego_front_s: front,
                        ego_v: v,
                        other_rear_s: cand.s[ke] - half_e,
                        other_v: cand.v[ke],
                        other_accel: cand.a[ke],
                        other_length: f64::INFINITY,
                        conflict_ego_s: c.s_other,
                        conflict_other_s: c.s_ego,
                        margin: 0.0,
                    },
                };
                obs = LeaderObservation::closest(obs, virtual_leader(&input));
            }
            obs
        },
        |s| h.path.target_speed(s).min(h.idm.v_target),
        DriverModel::Idm,
        &h.idm,
        ctx.dt,
        ctx.n - 1,
    );
    trace.iter().map(|x| x.a).collect()
}

/// Social cost of one candidate.
pub fn behavior_cost(ctx: &BehaviorContext<'_>, cand: &BehaviorTrajectory) -> f64 {
    let mut involved: Vec<usize> = ctx.conflicts.iter().filter(|c| ctx.relevant(c)).map(|c| c.hypothesis).collect();
    involved.sort_unstable();
    involved.dedup();
    let reacted: Vec<Vec<f64>> = involved.iter().map(|&h| reacted_accels(ctx, cand, h)).collect();
    let items: Vec<(f64, &[f64], &[f64])> = involved
        .iter()
        .zip(&reacted)
        .map(|(&h, r)| (ctx.hypotheses[h].probability, r.as_slice(), ctx.hypotheses[h].a.as_slice()))
        .collect();
    social_cost(cand.mean_accel(), &items, ctx.params.w_ego, ctx.params.w_others)
}

fn clamp_monotone(c: &mut SpatioTemporalCorridor) {
    for i in 1..c.s_min.len() {
        c.s_min[i] = c.s_min[i].max(c.s_min[i - 1]);
    }
    for i in (0..c.s_max.len().saturating_sub(1)).rev() {
        c.s_max[i] = c.s_max[i].min(c.s_max[i + 1]);
    }
}

/// How far past a stop line the ego front may be and still wait at it [m].
const STOP_LINE_TOL: f64 = 0.05;

/// Deceleration bounding the corridor's reachable progress [m/s^2].
const HARD_BRAKE: f64 = 8.0;

/// Corridor for a candidate: progress at most `corridor_slack` beyond the
/// candidate, held behind conflicts whose vehicles pass first and pushed past
/// conflicts the ego passes first before the other vehicle arrives.
pub fn build_corridor(ctx: &BehaviorContext<'_>, cand: &BehaviorTrajectory) -> SpatioTemporalCorridor {
    let p = ctx.params;
    let n = cand.s.len();
    let len = ctx.ego.path.length();
    let half = 0.5 * ctx.ego.length;
    let mut corr = SpatioTemporalCorridor {
        s_min: vec![0.0; n],
        s_max: cand.s.iter().map(|&s| (s + p.corridor_slack).min(len)).collect(),
    };
    if let Some(l) = ctx.ego.leader {
        // never below what hard braking still allows, so the corridor stays nonempty
        let (mut reach, mut v) = (ctx.ego.s, ctx.ego.v);
        for (k, s) in corr.s_max.iter_mut().enumerate() {
            let rear = l.rear_s[k.min(l.rear_s.len() - 1)];
            *s = s.min((rear - half - ctx.ego.leader_buffer + p.leader_slack).max(reach));
            let v_next = if k == 0 { v } else { (v - HARD_BRAKE * ctx.dt).max(0.0) };
            reach += 0.5 * (v + v_next) * ctx.dt;
            v = v_next;
        }
    }
    let front0 = ctx.ego.s + half;
    for c in ctx.conflicts.iter().filter(|c| ctx.relevant(c)) {
        let h = &ctx.hypotheses[c.hypothesis];
        if ctx.ego_first(cand, c) {
            let reacted = reacted_accels(ctx, cand, c.hypothesis);
            let arrival = arrival_from_accels(h, &reacted, ctx.dt, c.entry_other(p));
            if let Some(ta) = arrival {
                for s in corr.s_min.iter_mut().skip(ta) {
                    *s = s.max(c.exit_ego(p) + half);
                }
            }
        } else if front0 <= c.entry_ego(p) {
            let clear = (0..h.s.len()).find(|&k| h.rear(k) >= c.exit_other(p)).unwrap_or(n);
            let cap = c.entry_ego(p) - p.corridor_margin - half;
            for s in corr.s_max.iter_mut().take(clear.min(n)) {
                *s = s.min(cap);
            }
            // a yielding ego that has not passed the stop line waits there
            // until the other vehicle reaches the conflict
            let line = ctx.marked_stop_line(c.entry_ego(p));
            if let Some(line) = line {
                let arrival = ctx.arrival_other(c).unwrap_or(n).min(clear);
                for s in corr.s_max.iter_mut().take(arrival.min(n)) {
                    *s = s.min(line - half);
                }
            }
        }
    }
    if cand.maneuver == Maneuver::Stop {
        let yieldable = ctx.yieldable();
        if !yieldable.is_empty() {
            let line = ctx.stop_line(&yieldable);
            for s in corr.s_max.iter_mut() {
                *s = s.min(line - half);
            }
        }
    }
    clamp_monotone(&mut corr);
    corr
}

/// First step at which a vehicle following `accels` from its hypothesis start
/// state reaches `entry` with its front.
fn arrival_from_accels(h: &Hypothesis, accels: &[f64], dt: f64, entry: f64) -> Option<usize> {
    let (mut s, mut v) = (h.s[0], h.v[0]);
    for (k, &a) in accels.iter().enumerate() {
        if s + 0.5 * h.length >= entry {
            return Some(k);
        }
        let v_next = (v + a * dt).max(0.0);
        s += 0.5 * (v + v_next) * dt;
        v = v_next;
    }
    None
}

/// Rated candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct RatedCandidate {
    pub trajectory: BehaviorTrajectory,
    pub cost: f64,
    pub corridor: SpatioTemporalCorridor,
    pub admissible: bool,
}

/// Outcome of the selection.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub behavior: BehaviorTrajectory,
    pub corridor: SpatioTemporalCorridor,
    pub cost: f64,
    /// Hypotheses the chosen behavior lets pass first.
    pub predecessors: Vec<usize>,
    pub candidates: Vec<RatedCandidate>,
    /// Set when no candidate fit its corridor.
    pub fallback: bool,
}

/// Cheapest candidate whose corridor is feasible and contains it; ties go to
/// the maneuver priority. Without an admissible candidate the stop candidate
/// (or else the first one) is used with the plain progress corridor.
pub fn select_behavior(ctx: &BehaviorContext<'_>, candidates: Vec<BehaviorTrajectory>) -> Selection {
    let tol = ctx.params.containment_tol;
    let mut rated: Vec<RatedCandidate> = candidates
        .into_iter()
        .map(|t| {
            let cost = behavior_cost(ctx, &t);
            let corridor = build_corridor(ctx, &t);
            // going before means winning every race, not creeping up to the conflict
            let admissible = corridor.is_feasible()
                && corridor.contains(&t.s, tol)
                && !(t.maneuver == Maneuver::GoBefore && ctx.loses_race(&t));
            RatedCandidate {
                trajectory: t,
                cost,
                corridor,
                admissible,
            }
        })
        .collect();
    rated.sort_by(|a, b| {
        a.cost
            .total_cmp(&b.cost)
            .then(a.trajectory.maneuver.priority().cmp(&b.trajectory.maneuver.priority()))
    });
    let (chosen, fallback) = match rated.iter().position(|r| r.admissible) {
        Some(i) => (i, false),
        None => (
            rated.iter().position(|r| r.trajectory.maneuver == Maneuver::Stop).unwrap_or(0),
            true,
        ),
    };
    let pick = &rated[chosen];
    let corridor = if fallback {
        let len = ctx.ego.path.length();
        SpatioTemporalCorridor {
            s_min: vec![0.0; pick.trajectory.s.len()],
            s_max: pick.trajectory.s.iter().map(|&s| (s + ctx.params.corridor_slack).min(len)).collect(),
        }
    } else {
        pick.corridor.clone()
    };
    let predecessors = ctx
        .conflicts
        .iter()
        .filter(|c| ctx.relevant(c) && !ctx.ego_first(&pick.trajectory, c))
        .map(|c| c.hypothesis)
        .fold(Vec::new(), |mut acc, h| {
            if !acc.contains(&h) {
                acc.push(h);
            }
            acc
        });
    Selection {
        behavior: pick.trajectory.clone(),
        corridor,
        cost: pick.cost,
        predecessors,
        candidates: rated.clone(),
        fallback,
    }
}
