//! Acceptance suite. Every criterion prints one PASS/FAIL line; the process
//! exits nonzero when any criterion fails. Tolerances are pinned below.

mod common;

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use motion_planner::central_opt::{cost, cost_gradient, solve, ConstraintSet, CostWeights, OptProblem, OptimizerParams, SolveStatus};
use motion_planner::decision::{step_fsm, FsmContext, LaneChangeTarget, Mode, PlannerState, Side, SituationFlags};
use motion_planner::driver_models::{eidm_accel, idm_accel, integrate_along_lane, DriverModel, IdmParams, LeaderObservation};
use motion_planner::geometry::{ConvexPolygon, Vec2};
use motion_planner::planner::{PlanRecord, PlanStatus};
use motion_planner::road_model::Polyline;
use motion_planner::sim::{builtin, SimRun};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const HORIZON_POINTS: usize = 60;
const HORIZON_DT: f64 = 0.05;
const HORIZON_T: f64 = 2.95;
const ORACLE_TOL: f64 = 1e-6;
const ORACLE_BUDGET: Duration = Duration::from_secs(5);
const GRADIENT_REL_TOL: f64 = 1e-5;
const CONSTRAINT_TOL: f64 = 1e-3;
const LANE_OFFSET_TOL: f64 = 0.3;
const A_LAT_MAX: f64 = 2.5;
const A_LON_MAX: f64 = 3.0;
const LANE_CHANGE_BUDGET: Duration = Duration::from_secs(60);
const STANDSTILL: f64 = 0.1;
const HYSTERESIS: f64 = 0.5;
const EQUILIBRIUM_REL_TOL: f64 = 0.01;
const VEHICLE_HALF_LENGTH: f64 = 2.25;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

/// Builtin runs shared by the scenario criteria, with the wall time of each.
struct Runs {
    runs: BTreeMap<String, (SimRun, Duration)>,
    emergency_short: SimRun,
}

impl Runs {
    fn new() -> Self {
        let runs = builtin::NAMES
            .iter()
            .map(|&name| {
                let start = Instant::now();
                let run = common::run_builtin(name);
                (name.to_string(), (run, start.elapsed()))
            })
            .collect();
        Runs {
            runs,
            emergency_short: common::run_file(&builtin::emergency(0.8)),
        }
    }

    fn get(&self, name: &str) -> &SimRun {
        &self.runs[name].0
    }

    fn all_plans(&self) -> impl Iterator<Item = (&str, &PlanRecord)> {
        self.runs
            .iter()
            .map(|(name, (run, _))| (name.as_str(), run))
            .chain(std::iter::once(("emergency_0.8", &self.emergency_short)))
            .flat_map(|(name, run)| run.plans.iter().map(move |p| (name, p)))
    }
}

// ---------------------------------------------------------------- 1

fn trajectory_interface(runs: &Runs) -> Verdict {
    let mut count = 0;
    for (name, plan) in runs.all_plans() {
        count += 1;
        let t = plan.trajectory.points.len().saturating_sub(1) as f64 * plan.trajectory.dt;
        if plan.trajectory.points.len() != HORIZON_POINTS || plan.trajectory.dt != HORIZON_DT || t != HORIZON_T {
            return verdict(
                false,
                format!("{name} t={}: {} points, dt {}, T {t}", plan.t, plan.trajectory.points.len(), plan.trajectory.dt),
            );
        }
    }
    verdict(count > 0, format!("{count} plans, all N=60 dt=0.05 T=2.95"))
}

// ---------------------------------------------------------------- 2, 3

const STENCILS: [(usize, &[f64]); 3] = [(2, &[1.0, -2.0, 1.0]), (3, &[-1.0, 3.0, -3.0, 1.0]), (4, &[1.0, -4.0, 6.0, -4.0, 1.0])];

fn stencil_start(i: usize, n: usize, order: usize) -> usize {
    (i as isize - (order / 2) as isize).clamp(0, (n - order - 1) as isize) as usize
}

fn order_weight(w: &CostWeights, order: usize) -> f64 {
    match order {
        2 => w.acceleration,
        3 => w.jerk,
        _ => w.snap,
    }
}

/// Minimizer with the first two points fixed. The cost is a sum of squared
/// affine residuals `A z - c`, so the minimizer solves the normal equations
/// `AᵀA z = Aᵀc`; they are solved through an SVD of `A` because assembling
/// `AᵀA` squares a condition number near 1e11. Returns the solution and the
/// relative residual of the normal equations.
fn normal_equations(xb: &[Vec2], pins: [Vec2; 2], w: &CostWeights, dt: f64) -> (Vec<Vec2>, f64) {
    let n = xb.len();
    let free = n - 2;
    let mut out = vec![pins[0], pins[1]];
    let mut cols = Vec::new();
    let mut residual: f64 = 0.0;
    for axis in 0..2 {
        let comp = |p: Vec2| if axis == 0 { p.x } else { p.y };
        let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
        // term k * (a · x - b)^2 becomes the row sqrt(k) * (a, b)
        let mut add = |coef: &[(usize, f64)], b: f64, k: f64| {
            let sk = k.sqrt();
            let mut row = vec![0.0; free];
            let mut rhs = sk * b;
            for &(j, c) in coef {
                if j < 2 {
                    rhs -= sk * c * comp(pins[j]);
                } else {
                    row[j - 2] += sk * c;
                }
            }
            rows.push((row, rhs));
        };
        for (i, p) in xb.iter().enumerate() {
            add(&[(i, 1.0)], comp(*p), w.behavior);
        }
        for (order, st) in STENCILS {
            let k = order_weight(w, order) / dt.powi(2 * order as i32);
            for i in 0..n {
                let s = stencil_start(i, n, order);
                let coef: Vec<(usize, f64)> = st.iter().enumerate().map(|(m, &c)| (s + m, c)).collect();
                add(&coef, 0.0, k);
            }
        }
        let a = DMatrix::from_fn(rows.len(), free, |r, c| rows[r].0[c]);
        let c = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
        let z = a.clone().svd(true, true).solve(&c, 0.0).expect("full rank");
        let (ata, atc) = (a.transpose() * &a, a.transpose() * &c);
        residual = residual.max((&ata * &z - &atc).norm() / (ata.norm() * z.norm() + atc.norm()));
        cols.push(z);
    }
    for i in 0..free {
        out.push(Vec2::new(cols[0][i], cols[1][i]));
    }
    (out, residual)
}

fn random_instance(rng: &mut ChaCha8Rng, n: usize) -> (Vec<Vec2>, CostWeights) {
    let speed = rng.gen_range(0.0..1.0);
    let xb = (0..n)
        .map(|i| Vec2::new(i as f64 * speed + rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)))
        .collect();
    let w = CostWeights {
        behavior: rng.gen_range(0.5..2.0),
        acceleration: rng.gen_range(0.0..4.0),
        jerk: rng.gen_range(0.0..6.0),
        snap: rng.gen_range(0.0..4.0),
    };
    (xb, w)
}

fn optimizer_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let set = ConstraintSet::acceleration_only(1e9, 1.0);
    let params = OptimizerParams {
        a_max: 1e9,
        ..OptimizerParams::default()
    };
    let mut worst: f64 = 0.0;
    let mut worst_residual: f64 = 0.0;
    let mut elapsed = Duration::ZERO;
    for k in 0..50 {
        let n = rng.gen_range(5..=12);
        let (xb, w) = random_instance(&mut rng, n);
        let pins = [xb[0] + Vec2::new(0.0, rng.gen_range(-0.1..0.1)), xb[1] + Vec2::new(rng.gen_range(-0.1..0.1), 0.0)];
        let problem = OptProblem {
            behavior: &xb,
            pinned: pins,
            dt: HORIZON_DT,
            weights: w,
            constraints: &set,
        };
        let start = Instant::now();
        let sol = match solve(&problem, &params, None) {
            Ok(s) => s,
            Err(e) => return verdict(false, format!("instance {k}: {e}")),
        };
        elapsed += start.elapsed();
        if sol.report.status != SolveStatus::Success {
            return verdict(false, format!("instance {k}: {:?}", sol.report.status));
        }
        let (oracle, residual) = normal_equations(&xb, pins, &w, HORIZON_DT);
        worst_residual = worst_residual.max(residual);
        for (a, b) in sol.points.iter().zip(&oracle) {
            worst = worst.max((a.x - b.x).abs()).max((a.y - b.y).abs());
        }
    }
    verdict(
        worst < ORACLE_TOL && worst_residual < 1e-12 && elapsed < ORACLE_BUDGET,
        format!(
            "50 instances, max coordinate error {worst:.2e}, oracle normal-equation residual {worst_residual:.1e}, solve time {:.3} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn gradient_check() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let n = rng.gen_range(5..=60);
        let (xb, w) = random_instance(&mut rng, n);
        let x: Vec<Vec2> = xb.iter().map(|p| *p + Vec2::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5))).collect();
        let g = cost_gradient(&x, &xb, &w, HORIZON_DT);
        // the cost is quadratic, so central differences are exact up to
        // rounding and a coarse step keeps rounding small
        let h = 1e-3;
        let (mut num, mut den) = (0.0_f64, 0.0_f64);
        for i in 0..n {
            for axis in 0..2 {
                let e = if axis == 0 { Vec2::new(h, 0.0) } else { Vec2::new(0.0, h) };
                let mut plus = x.clone();
                let mut minus = x.clone();
                plus[i] = plus[i] + e;
                minus[i] = minus[i] - e;
                let fd = (cost(&plus, &xb, &w, HORIZON_DT) - cost(&minus, &xb, &w, HORIZON_DT)) / (2.0 * h);
                let an = if axis == 0 { g[i].x } else { g[i].y };
                num += (an - fd).powi(2);
                den += fd * fd;
            }
        }
        worst = worst.max(num.sqrt() / den.sqrt().max(1e-12));
    }
    verdict(worst < GRADIENT_REL_TOL, format!("20 instances, max relative error {worst:.2e}"))
}

// ---------------------------------------------------------------- 4

fn segment_foot(p: Vec2, a: Vec2, b: Vec2) -> (Vec2, f64) {
    let ab = b - a;
    let len2 = ab.dot(ab);
    let t = if len2 > 0.0 { ((p - a).dot(ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (a + ab * t, t)
}

/// Arc length and signed lateral offset (positive to the left) of the
/// nearest point on the polyline.
fn frenet(line: &Polyline, p: Vec2) -> (f64, f64) {
    let pts = line.points();
    let mut best = (f64::INFINITY, 0.0, 0.0);
    let mut s_acc = 0.0;
    for w in pts.windows(2) {
        let (foot, t) = segment_foot(p, w[0], w[1]);
        let dist = (p - foot).norm();
        let seg_len = (w[1] - w[0]).norm();
        if dist < best.0 {
            let side = (w[1] - w[0]).cross(p - w[0]);
            best = (dist, s_acc + t * seg_len, if side < 0.0 { -dist } else { dist });
        }
        s_acc += seg_len;
    }
    (best.1, best.2)
}

/// Signed distance to a convex polygon, negative inside.
fn polygon_distance(poly: &ConvexPolygon, p: Vec2) -> f64 {
    let v = poly.vertices();
    let n = v.len();
    let area: f64 = (0..n).map(|i| v[i].cross(v[(i + 1) % n])).sum();
    let orient = area.signum();
    let mut outside_dist = f64::INFINITY;
    let mut inside = true;
    let mut depth = f64::INFINITY;
    for i in 0..n {
        let (a, b) = (v[i], v[(i + 1) % n]);
        let (foot, _) = segment_foot(p, a, b);
        outside_dist = outside_dist.min((p - foot).norm());
        let edge = b - a;
        let inward = orient * edge.cross(p - a) / edge.norm();
        if inward < 0.0 {
            inside = false;
        }
        depth = depth.min(inward);
    }
    if inside {
        -depth
    } else {
        outside_dist
    }
}

/// Largest residual of each family: left boundary, right boundary, dynamic,
/// corridor, acceleration.
fn residual_maxima(plan: &PlanRecord) -> [f64; 5] {
    let set = &plan.constraints;
    let pts = &plan.trajectory.points;
    let n = pts.len();
    let r = set.radius;
    let first = set.first_constrained.min(n);
    let mut m = [f64::NEG_INFINITY; 5];
    for (i, &p) in pts.iter().enumerate().skip(first) {
        if let Some(left) = &set.boundary_left {
            m[0] = m[0].max(r + frenet(left, p).1);
        }
        if let Some(right) = &set.boundary_right {
            m[1] = m[1].max(r - frenet(right, p).1);
        }
        for ob in &set.obstacles {
            if let Some(poly) = ob.polygons.get(i) {
                m[2] = m[2].max(r - polygon_distance(poly, p));
            }
        }
        if let (Some(path), Some(corr)) = (&set.reference, &set.corridor) {
            if i < corr.s_min.len() {
                let s = frenet(path, p).0;
                m[3] = m[3].max(corr.s_min[i] - s).max(s - corr.s_max[i]);
            }
        }
    }
    let dt2 = plan.trajectory.dt * plan.trajectory.dt;
    for i in 0..n {
        let s = stencil_start(i, n, 2);
        let a = (pts[s] - pts[s + 1] * 2.0 + pts[s + 2]) / dt2;
        m[4] = m[4].max(a.dot(a) - set.a_max * set.a_max);
    }
    m
}

fn constraint_soundness(runs: &Runs) -> Verdict {
    const NAMES: [&str; 5] = ["boundary_left", "boundary_right", "dynamic", "corridor", "acceleration"];
    let mut solves = 0;
    let mut worst = [f64::NEG_INFINITY; 5];
    let mut failures = Vec::new();
    for (name, plan) in runs.all_plans() {
        if plan.status != PlanStatus::Optimized(SolveStatus::Success) {
            continue;
        }
        solves += 1;
        let m = residual_maxima(plan);
        for f in 0..5 {
            worst[f] = worst[f].max(m[f]);
            if m[f] > CONSTRAINT_TOL {
                failures.push(format!("{name} t={} {} {:.4}", plan.t, NAMES[f], m[f]));
            }
        }
    }
    let worst_text: Vec<String> = NAMES.iter().zip(worst).map(|(n, w)| format!("{n} {w:.2e}")).collect();
    if failures.is_empty() {
        verdict(solves > 0, format!("{solves} successful solves; worst residuals: {}", worst_text.join(", ")))
    } else {
        verdict(false, format!("{} violations, first: {}", failures.len(), failures[0]))
    }
}

// ---------------------------------------------------------------- 5..8

fn mode_sequence(run: &SimRun) -> Vec<Mode> {
    let mut seq: Vec<Mode> = Vec::new();
    for r in &run.log.rows {
        if seq.last() != Some(&r.mode) {
            seq.push(r.mode);
        }
    }
    seq
}

fn min_gap(run: &SimRun) -> f64 {
    run.log.rows.iter().map(|r| r.min_gap).fold(f64::INFINITY, f64::min)
}

fn lane_change_scenario(runs: &Runs) -> Verdict {
    let (run, elapsed) = &runs.runs["lane_change"];
    let seq = mode_sequence(run);
    let last = run.log.rows.last().expect("rows");
    let offset = (last.y - builtin::LANE_WIDTH).abs();
    let a_lat = run.log.rows.iter().map(|r| r.a_lat.abs()).fold(0.0, f64::max);
    let a_lon = run.log.rows.iter().map(|r| r.a_lon.abs()).fold(0.0, f64::max);
    let gap = min_gap(run);
    let pass = seq == [Mode::Ltm, Mode::LaneChange, Mode::Ltm]
        && offset < LANE_OFFSET_TOL
        && a_lat <= A_LAT_MAX
        && a_lon <= A_LON_MAX
        && gap > 0.0
        && *elapsed < LANE_CHANGE_BUDGET;
    verdict(
        pass,
        format!(
            "modes {seq:?}, final offset {offset:.3} m, max |a_lat| {a_lat:.2}, max |a_lon| {a_lon:.2}, min gap {gap:.2} m, {:.2} s",
            elapsed.as_secs_f64()
        ),
    )
}

/// Times of local speed minima: a minimum counts once speed has fallen by
/// at least `band` from the preceding maximum and risen by `band` again.
fn hysteresis_minima(samples: &[(f64, f64)], band: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let Some(&(t0, v0)) = samples.first() else { return out };
    let mut falling = false;
    let mut peak = v0;
    let mut low = (t0, v0);
    for &(t, v) in samples {
        if falling {
            if v < low.1 {
                low = (t, v);
            } else if v >= low.1 + band {
                out.push(low);
                falling = false;
                peak = v;
            }
        } else if v > peak {
            peak = v;
        } else if v <= peak - band {
            falling = true;
            low = (t, v);
        }
    }
    out
}

fn roundabout_scenario(runs: &Runs) -> Verdict {
    let run = runs.get("roundabout");
    let circ = common::vehicle_index(run, "circulating");
    let Some(entry) = run.log.rows.iter().find(|r| r.lane == "ring_se") else {
        return verdict(false, "ego never entered the ring");
    };
    let (cx, cy, _) = entry.others[circ];
    // angle travelled past the ego's entry point at the bottom of the ring
    let mut ahead = cy.atan2(cx) + FRAC_PI_2;
    if ahead > PI {
        ahead -= 2.0 * PI;
    }
    let speeds: Vec<(f64, f64)> = run.log.rows.iter().map(|r| (r.t, r.v)).collect();
    let minima = hysteresis_minima(&speeds, HYSTERESIS);
    let gap = min_gap(run);
    let pass = ahead > 0.0 && gap > 0.0 && minima.len() == 1 && minima[0].0 < entry.t;
    verdict(
        pass,
        format!(
            "ring entry at t={:.2} with circulating vehicle {:.2} rad ahead, min gap {gap:.2} m, speed minima {minima:?}",
            entry.t, ahead
        ),
    )
}

fn left_turn_scenario(runs: &Runs) -> Verdict {
    let run = runs.get("left_turn");
    let right = common::vehicle_index(run, "from_right");
    let left = common::vehicle_index(run, "from_left");
    let ego_axis = 0.5 * builtin::LANE_WIDTH;
    let blocked: Vec<_> = run.log.rows.iter().filter(|r| r.others[right].0 - VEHICLE_HALF_LENGTH > ego_axis).collect();
    let moved_while_blocked = blocked.iter().find(|r| r.v >= STANDSTILL);
    let Some(departure) = run.log.rows.iter().find(|r| r.v >= STANDSTILL) else {
        return verdict(false, "ego never departed");
    };
    let left_front = departure.others[left].0 + VEHICLE_HALF_LENGTH;
    let gap = min_gap(run);
    let pass = !blocked.is_empty() && moved_while_blocked.is_none() && left_front < -builtin::BOX && gap > 0.0;
    verdict(
        pass,
        format!(
            "standstill over {} blocked ticks{}, departure t={:.2} with left vehicle front at x={left_front:.2}, min gap {gap:.2} m",
            blocked.len(),
            moved_while_blocked.map_or(String::new(), |r| format!(" (moved at t={})", r.t)),
            departure.t
        ),
    )
}

fn emergency_scenarios(runs: &Runs) -> Verdict {
    let oracle = builtin::EMERGENCY_V0.powi(2) / (2.0 * builtin::EMERGENCY_A_MIN.abs());
    let run = runs.get("emergency");
    let obstacle = common::vehicle_index(run, "obstacle");
    let first = &run.log.rows[0];
    let placed = (first.others[obstacle].0 - VEHICLE_HALF_LENGTH) - (first.x + VEHICLE_HALF_LENGTH);
    let entered = run.log.rows.iter().any(|r| r.mode == Mode::Emergency);
    let stopped = run.log.rows.iter().any(|r| r.v < STANDSTILL);
    let last = run.log.rows.last().expect("rows");
    let gap = min_gap(run);
    let long_ok = (oracle - 25.0).abs() < 1e-12
        && (placed - 1.2 * oracle).abs() < 1e-6
        && entered
        && stopped
        && gap > 0.0
        && last.min_gap > 0.0;

    let short = &runs.emergency_short;
    let info = short.plans.iter().find(|p| p.mode == Mode::Emergency).and_then(|p| p.emergency);
    let short_ok = info.is_some_and(|i| i.lon_infeasible && i.evasion_attempted);
    verdict(
        long_ok && short_ok,
        format!(
            "braking distance {oracle} m; 1.2x: obstacle at {placed:.3} m, emergency {entered}, stopped {stopped}, final gap {:.2} m, min gap {gap:.2} m; 0.8x: {}",
            last.min_gap,
            info.map_or("no emergency plan".to_string(), |i| format!(
                "longitudinal infeasible {}, evasion attempted {}, outcome {:?}",
                i.lon_infeasible, i.evasion_attempted, i.outcome
            ))
        ),
    )
}

// ---------------------------------------------------------------- 9, 10

fn eidm_dominance() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut violations = 0;
    let mut first = String::new();
    for _ in 0..10_000 {
        let p = IdmParams {
            a: rng.gen_range(0.3..4.0),
            b: rng.gen_range(0.5..5.0),
            v_target: rng.gen_range(2.0..40.0),
            t_headway: rng.gen_range(0.5..3.0),
            s0: rng.gen_range(0.5..5.0),
            zeta: rng.gen_range(1.0..8.0),
            c: rng.gen_range(0.0..=1.0),
            b_emergency: rng.gen_range(5.0..12.0),
        };
        let v = rng.gen_range(0.0..40.0);
        let leader = LeaderObservation::new(rng.gen_range(-1.0..150.0), rng.gen_range(-20.0..20.0), rng.gen_range(-9.0..4.0));
        let (e, i) = (eidm_accel(v, Some(&leader), &p), idm_accel(v, Some(&leader), &p));
        if e < i {
            violations += 1;
            if first.is_empty() {
                first = format!(" (first: v={v}, {leader:?}: {e} < {i})");
            }
        }
    }
    verdict(violations == 0, format!("10000 samples, {violations} exceptions{first}"))
}

/// Gap at which IDM acceleration vanishes at speed `v`, by bisection.
fn equilibrium_gap(v: f64, p: &IdmParams) -> f64 {
    let accel = |s: f64| 1.0 - (v / p.v_target).powf(p.zeta) - ((p.s0 + v * p.t_headway) / s).powi(2);
    let (mut lo, mut hi) = (1e-3, 1e4);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if accel(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn idm_equilibrium() -> Verdict {
    let p = IdmParams::default();
    let (dt, steps) = (0.05, 2400);
    let v_lead = 10.0;
    let rear0 = 60.0;
    let samples = integrate_along_lane(
        (0.0, 5.0),
        |step, front, v| Some(LeaderObservation::new(rear0 + v_lead * dt * step as f64 - front, v - v_lead, 0.0)),
        |_| p.v_target,
        DriverModel::Idm,
        &p,
        dt,
        steps,
    );
    let last = samples.last().expect("samples");
    let gap = rear0 + v_lead * dt * steps as f64 - last.s;
    let oracle = equilibrium_gap(v_lead, &p);
    let rel = (gap - oracle).abs() / oracle;
    verdict(
        rel < EQUILIBRIUM_REL_TOL,
        format!("after 120 s gap {gap:.3} m vs equilibrium {oracle:.3} m (relative error {rel:.2e}), speed {:.3}", last.v),
    )
}

// ---------------------------------------------------------------- 11

fn fsm_exhaustive() -> Verdict {
    let now = 10.0;
    let dwell = 1.0;
    let lc = LaneChangeTarget {
        side: Side::Left,
        source_lane: "mid".into(),
        target_lane: "left".into(),
    };
    let mut states = vec![PlannerState::new("mid", 0.0)];
    states.push(PlannerState {
        mode: Mode::LaneChange,
        lane_change: Some(lc),
        ..PlannerState::new("mid", 0.0)
    });
    for clear in [None, Some(now - 0.5 * dwell), Some(now - 2.0 * dwell)] {
        states.push(PlannerState {
            mode: Mode::Emergency,
            critical_clear_since: clear,
            ..PlannerState::new("mid", 0.0)
        });
    }
    let mut checked = 0;
    for state in &states {
        for complete in [false, true] {
            for bits in 0..64u8 {
                let flags = SituationFlags::from_bits(bits);
                let ctx = FsmContext {
                    now,
                    lane_change_complete: complete,
                    current_lane: "mid".into(),
                    left_lane: Some("left".into()),
                    right_lane: Some("right".into()),
                    dwell,
                };
                let next = step_fsm(state, &flags, &ctx);
                checked += 1;
                let fail = |why: &str| verdict(false, format!("{why}: {:?} with {flags:?} -> {:?}", state.mode, next.mode));
                if flags.critical && next.mode != Mode::Emergency {
                    return fail("critical without emergency");
                }
                if next.mode == Mode::LaneChange && state.mode != Mode::LaneChange {
                    let wanted = (flags.incentive_left && flags.safe_left) || (flags.incentive_right && flags.safe_right);
                    if state.mode != Mode::Ltm || !flags.structural_gate || !wanted {
                        return fail("ungated lane change");
                    }
                }
                if state.mode == Mode::Emergency && !flags.critical {
                    let since = state.critical_clear_since.unwrap_or(now);
                    let expected = if now - since >= dwell { Mode::Ltm } else { Mode::Emergency };
                    if next.mode != expected {
                        return fail("dwell violated");
                    }
                }
                if next.mode == Mode::LaneChange && next.lane_change.is_none() {
                    return fail("lane change without target");
                }
            }
        }
    }
    verdict(true, format!("{checked} transitions from {} states", states.len()))
}

// ---------------------------------------------------------------- 12

fn determinism(runs: &Runs) -> Verdict {
    let mut sizes = Vec::new();
    for name in builtin::NAMES {
        let a = common::csv_bytes(runs.get(name));
        let b = common::csv_bytes(&common::run_builtin(name));
        if a != b {
            return verdict(false, format!("{name}: logs differ"));
        }
        sizes.push(format!("{name} {} B", a.len()));
    }
    verdict(true, format!("identical logs: {}", sizes.join(", ")))
}

fn main() -> ExitCode {
    let runs = Runs::new();
    let criteria: Vec<(&str, Box<dyn Fn() -> Verdict + '_>)> = vec![
        ("trajectory interface", Box::new(|| trajectory_interface(&runs))),
        ("optimizer matches dense oracle", Box::new(optimizer_oracle)),
        ("cost gradient", Box::new(gradient_check)),
        ("constraint soundness", Box::new(|| constraint_soundness(&runs))),
        ("lane change scenario", Box::new(|| lane_change_scenario(&runs))),
        ("roundabout scenario", Box::new(|| roundabout_scenario(&runs))),
        ("left turn scenario", Box::new(|| left_turn_scenario(&runs))),
        ("emergency scenarios", Box::new(|| emergency_scenarios(&runs))),
        ("EIDM dominates IDM", Box::new(eidm_dominance)),
        ("IDM equilibrium gap", Box::new(idm_equilibrium)),
        ("mode machine enumeration", Box::new(fsm_exhaustive)),
        ("determinism", Box::new(|| determinism(&runs))),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let v = check();
        if !v.pass {
            failed += 1;
        }
        println!("criterion {:>2} {} {name}: {}", k + 1, if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
