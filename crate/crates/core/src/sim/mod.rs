//! Fixed-step closed-loop simulation: the ego replans periodically and tracks
//! its plan exactly, other vehicles follow their routes with IDM behind
//! whatever is physically ahead of them.

pub mod builtin;
pub mod log;
pub mod metrics;
pub mod plot;
pub mod scenario;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decision::Mode;
use crate::driver_models::{idm_accel, LeaderObservation};
use crate::geometry::Vec2;
use crate::planner::{EgoSpec, PlanRecord, Planner, PlannerError};
use crate::road_model::menger_curvature;
use crate::traffic::occupants;
use crate::types::VehicleState;

pub use log::{round9, LogRow, SimLog};
pub use metrics::{metrics, Metrics};
pub use scenario::{Scenario, ScenarioError, ScenarioFile};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunStatus {
    #[serde(rename = "OK")]
    Ok,
    #[serde(rename = "FAILED")]
    Failed,
}

impl std::fmt::Display for RunStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RunStatus::Ok => "OK",
            RunStatus::Failed => "FAILED",
        })
    }
}

/// Log plus every planning record of a run.
#[derive(Debug, Clone)]
pub struct SimRun {
    pub log: SimLog,
    pub plans: Vec<PlanRecord>,
}

#[derive(Debug, Clone, Copy)]
struct AgentState {
    s: f64,
    v: f64,
    a: f64,
}

/// Pose on a path, continued straight beyond its end.
fn pose_on(path: &crate::road_model::RoutePath, s: f64) -> (Vec2, f64) {
    let line = &path.centerline;
    let len = line.length();
    if s <= len {
        (line.point_at(s.max(0.0)), line.heading_at(s.max(0.0)))
    } else {
        let h = line.heading_at(len);
        (line.point_at(len) + Vec2::from_angle(h) * (s - len), h)
    }
}

impl scenario::Agent {
    /// Vehicle state at arc length `s` of the agent's route.
    pub fn state(&self, s: f64, v: f64, a: f64) -> VehicleState {
        let (position, heading) = pose_on(&self.path, s);
        VehicleState {
            id: self.id.clone(),
            position,
            heading,
            v,
            a,
            length: self.length,
            width: self.width,
        }
    }
}

impl Scenario {
    /// Other vehicles at their configured start states.
    pub fn initial_others(&self) -> Vec<VehicleState> {
        self.agents
            .iter()
            .map(|ag| ag.state(ag.s0, if ag.stationary { 0.0 } else { ag.v0 }, 0.0))
            .collect()
    }

    /// Ego start pose on its route.
    pub fn ego_start(&self) -> (Vec2, f64) {
        pose_on(&self.ego_path, self.file.ego.s0)
    }
}

pub fn run(scenario: &Scenario) -> Result<SimRun, SimError> {
    let cfg = &scenario.config;
    let dt = cfg.dt;
    let file = &scenario.file;
    let ego_spec = EgoSpec {
        length: file.ego.length,
        width: file.ego.width,
        v_desired: file.ego.v_desired,
    };
    let (mut pos, mut heading) = scenario.ego_start();
    let mut v = file.ego.v0;
    let mut a = 0.0;
    let mut planner = Planner::new(
        cfg.clone(),
        scenario.map.clone(),
        file.conflicts.clone(),
        ego_spec,
        &file.ego.route,
        pos,
        0.0,
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(file.sim.seed);
    let mut agents: Vec<AgentState> = scenario
        .agents
        .iter()
        .map(|ag| {
            let jitter: f64 = rng.gen_range(-1.0..=1.0);
            AgentState {
                s: ag.s0,
                v: if ag.stationary { 0.0 } else { (ag.v0 + file.sim.speed_jitter * jitter).max(0.0) },
                a: 0.0,
            }
        })
        .collect();

    let ticks = (file.sim.duration / dt).round() as usize;
    let replan = cfg.replan_ticks.max(1);
    let wheelbase = cfg.lane_change.wheelbase();
    let mut rows = Vec::with_capacity(ticks + 1);
    let mut plans: Vec<PlanRecord> = Vec::new();
    let mut current: Option<(usize, usize)> = None; // (start tick, index into plans)
    let mut prev_pos: Option<Vec2> = None;

    for tick in 0..=ticks {
        let t = tick as f64 * dt;
        let others: Vec<VehicleState> = scenario.agents.iter().zip(&agents).map(|(ag, st)| ag.state(st.s, st.v, st.a)).collect();
        let ego = VehicleState {
            id: "ego".into(),
            position: pos,
            heading,
            v,
            a,
            length: ego_spec.length,
            width: ego_spec.width,
        };

        if tick % replan == 0 || current.is_none() {
            let rec = planner.plan(t, &ego, &others)?;
            plans.push(rec);
            current = Some((tick, plans.len() - 1));
        }
        let (start, idx) = current.expect("a plan exists");
        let rec = &plans[idx];
        let p = &rec.trajectory.points;
        let j = (tick - start).min(p.len() - 3);
        let here = p[j];
        let next = p[j + 1];
        let vel = (next - here) / dt;
        let acc = match prev_pos {
            Some(q) => (next - here * 2.0 + q) / (dt * dt),
            None => (p[j + 2] - p[j + 1] * 2.0 + here) / (dt * dt),
        };
        let speed = vel.norm();
        if speed > 1e-9 {
            heading = vel.angle();
        }
        let dir = Vec2::from_angle(heading);
        let kappa = match prev_pos {
            Some(q) => menger_curvature(q, here, next),
            None => menger_curvature(p[j], p[j + 1], p[j + 2]),
        };
        let footprint = VehicleState { position: here, heading, ..ego.clone() }.footprint();
        let min_gap = others
            .iter()
            .map(|o| footprint.signed_gap(&o.footprint()))
            .fold(f64::INFINITY, f64::min);
        let report = rec.report.as_ref();
        rows.push(LogRow::new(
            t,
            here,
            heading,
            speed,
            acc.dot(dir),
            acc.dot(dir.perp()),
            (wheelbase * kappa).atan(),
            rec.mode,
            rec.maneuver.to_string(),
            report.map_or(f64::NAN, |r| r.cost),
            report.map_or(f64::NAN, |r| r.max_violation),
            min_gap,
            rec.lane.clone(),
            others.iter().map(|o| (o.position.x, o.position.y, o.heading)).collect(),
        ));

        // advance the ego along the plan
        let after = p[j + 2];
        let vel_next = (after - next) / dt;
        let v_next = vel_next.norm();
        a = (v_next - speed) / dt;
        v = v_next;
        if v_next > 1e-9 {
            heading = vel_next.angle();
        }
        prev_pos = Some(here);
        pos = next;

        // other vehicles react to whatever is physically ahead, ego included
        let mut everyone = others.clone();
        everyone.push(ego.clone());
        let accels: Vec<f64> = scenario
            .agents
            .iter()
            .zip(&agents)
            .enumerate()
            .map(|(i, (ag, st))| {
                if ag.stationary {
                    return 0.0;
                }
                let occ = occupants(&ag.path.centerline, &everyone, cfg.decision.lateral_tol, cfg.decision.heading_tol);
                let leader = occ.iter().find(|o| o.index != i && o.s > st.s).map(|o| {
                    LeaderObservation::new(o.rear() - (st.s + 0.5 * ag.length), st.v - o.v, o.a)
                });
                let p = ag.idm.with_target(ag.path.target_speed(st.s).min(ag.idm.v_target).max(0.1));
                idm_accel(st.v, leader.as_ref(), &p)
            })
            .collect();
        for (st, acc) in agents.iter_mut().zip(accels) {
            let v_next = (st.v + acc * dt).max(0.0);
            st.a = (v_next - st.v) / dt;
            st.s += 0.5 * (st.v + v_next) * dt;
            st.v = v_next;
        }
    }

    let status = if planner.failed() { RunStatus::Failed } else { RunStatus::Ok };
    Ok(SimRun {
        log: SimLog {
            vehicle_ids: scenario.agents.iter().map(|a| a.id.clone()).collect(),
            rows,
            status,
        },
        plans,
    })
}

/// Mode of each row, collapsed to its sequence of distinct consecutive values.
pub fn mode_sequence(rows: &[LogRow]) -> Vec<Mode> {
    let mut out: Vec<Mode> = Vec::new();
    for r in rows {
        if out.last() != Some(&r.mode) {
            out.push(r.mode);
        }
    }
    out
}
