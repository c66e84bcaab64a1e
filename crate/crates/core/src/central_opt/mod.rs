//! Central trajectory optimization: minimize the quadratic cost over the
//! support points subject to all inequality constraints.
//!
//! The solver is an augmented Lagrangian (Powell-Hestenes-Rockafellar form for
//! inequalities) around a damped Gauss-Newton inner loop. The inner Hessian
//! is the exact cost Hessian plus outer products of the active constraint
//! gradients, which keeps it banded and positive definite. The nearest
//! feature of each distance function is re-selected at every inner
//! iteration.

pub mod banded;
pub mod constraints;
pub mod cost;

use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

pub use constraints::{
    build_accel_constraints, build_boundary_constraints, build_dynamic_constraints, build_st_constraints, ego_radius,
    pseudo_distance, resize_and_triangle, ConstraintEvaluator, ConstraintSet, Family, FamilyMaxima, ObstaclePrediction,
    Residual,
};
pub use cost::{cost, cost_gradient, finite_diff, CostWeights};

use crate::geometry::Vec2;
use banded::BandMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptError {
    #[error("difference order {0} is not supported")]
    UnsupportedOrder(usize),
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite input")]
    NonFinite,
    #[error("invalid cost weights")]
    BadWeights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerParams {
    /// Feasibility tolerance on every residual.
    pub tol_h: f64,
    /// Stationarity tolerance: infinity norm of the inner Newton step [m].
    pub tol_g: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Bound on the norm of the planned acceleration [m/s^2].
    pub a_max: f64,
    /// Length of the wedge appended to obstacle rears [m].
    pub triangle_length: f64,
    /// Half width of the arc-length window used for per-point projections [m].
    pub projection_window: f64,
    /// Obstacle steps farther than this from the behavior point are dropped [m].
    pub cull_radius: f64,
    pub mu_init: f64,
    pub mu_growth: f64,
    pub mu_max: f64,
    /// Keep per-iteration cost and violation in the report.
    pub record_history: bool,
}

impl Default for OptimizerParams {
    fn default() -> Self {
        OptimizerParams {
            tol_h: 1e-3,
            tol_g: 1e-4,
            max_outer: 50,
            max_inner: 100,
            a_max: 9.0,
            triangle_length: 3.0,
            projection_window: 25.0,
            cull_radius: 2.0 * 2.95 * 30.0,
            mu_init: 10.0,
            mu_growth: 10.0,
            mu_max: 1e9,
            record_history: false,
        }
    }
}

/// One instance of the central problem.
#[derive(Debug, Clone, Copy)]
pub struct OptProblem<'a> {
    pub behavior: &'a [Vec2],
    /// The first two support points, kept fixed.
    pub pinned: [Vec2; 2],
    pub dt: f64,
    pub weights: CostWeights,
    pub constraints: &'a ConstraintSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Success,
    /// Iteration budget exhausted; the best feasible iterate is returned.
    MaxIterations,
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub outer: usize,
    pub inner: usize,
    pub cost: f64,
    pub max_violation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ActiveCounts {
    pub boundary_left: usize,
    pub boundary_right: usize,
    pub dynamic: usize,
    pub spatio_temporal: usize,
    pub acceleration: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub cost: f64,
    /// Largest positive residual at the returned point.
    pub max_violation: f64,
    /// Last inner Newton step length.
    pub stationarity: f64,
    pub active: ActiveCounts,
    pub family_max: FamilyMaxima,
    pub history: Vec<IterationRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub points: Vec<Vec2>,
    pub report: SolveReport,
}

/// Writes the iteration history as `outer,inner,cost,max_violation` rows.
pub fn write_history_csv(report: &SolveReport, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "outer,inner,cost,max_violation")?;
    for r in &report.history {
        writeln!(w, "{},{},{:e},{:e}", r.outer, r.inner, r.cost, r.max_violation)?;
    }
    Ok(())
}

const KD: usize = 2 * cost::SCALAR_HALF_BANDWIDTH + 1;

fn scale_of(f: Family, a_max: f64) -> f64 {
    match f {
        // brings |a|² - a_max² to roughly |a| - a_max
        Family::Acceleration => 0.5 / a_max.max(1e-3),
        _ => 1.0,
    }
}

struct Workspace<'p> {
    problem: &'p OptProblem<'p>,
    evaluator: ConstraintEvaluator<'p>,
    base_hessian: BandMatrix,
    residuals: Vec<Residual>,
    n: usize,
}

impl<'p> Workspace<'p> {
    fn augmented(&mut self, pts: &[Vec2], lambda: &[f64], mu: f64) -> (f64, f64) {
        self.evaluator.evaluate(pts, &mut self.residuals);
        let j = cost::cost(pts, self.problem.behavior, &self.problem.weights, self.problem.dt);
        let a_max = self.problem.constraints.a_max;
        let mut l = j;
        for (k, r) in self.residuals.iter().enumerate() {
            let h = r.value * scale_of(r.family, a_max);
            let lam = lambda.get(k).copied().unwrap_or(0.0);
            let t = h + lam / mu;
            if t > 0.0 {
                l += 0.5 * mu * t * t;
            }
            l -= lam * lam / (2.0 * mu);
        }
        (l, j)
    }

    /// Gradient and Gauss-Newton Hessian over the free variables at the
    /// point last passed to `augmented`.
    fn newton_system(&self, pts: &[Vec2], lambda: &[f64], mu: f64) -> (Vec<f64>, BandMatrix) {
        let n = self.n;
        let gp = cost::cost_gradient(pts, self.problem.behavior, &self.problem.weights, self.problem.dt);
        let mut g: Vec<f64> = (2..n).flat_map(|i| [gp[i].x, gp[i].y]).collect();
        let mut h = self.base_hessian.clone();
        let a_max = self.problem.constraints.a_max;
        let c2 = cost::stencil(2);
        for (k, r) in self.residuals.iter().enumerate() {
            let sc = scale_of(r.family, a_max);
            let t = r.value * sc + lambda.get(k).copied().unwrap_or(0.0) / mu;
            if t <= 0.0 {
                continue;
            }
            let m = mu * t * sc;
            for a in 0..r.count {
                let i = r.start + a;
                if i < 2 {
                    continue;
                }
                let vi = 2 * (i - 2);
                let ga = r.grad[a];
                g[vi] += m * ga.x;
                g[vi + 1] += m * ga.y;
                for b in 0..r.count {
                    let j = r.start + b;
                    if j < 2 || j > i {
                        continue;
                    }
                    let vj = 2 * (j - 2);
                    let gb = r.grad[b];
                    let w = mu * sc * sc;
                    let curv = if r.curvature != 0.0 { m * r.curvature * c2[a] * c2[b] } else { 0.0 };
                    if i == j {
                        h.add(vi, vi, w * ga.x * ga.x + curv);
                        h.add(vi + 1, vi + 1, w * ga.y * ga.y + curv);
                        h.add(vi + 1, vi, w * ga.x * ga.y);
                    } else {
                        h.add(vi, vj, w * ga.x * gb.x + curv);
                        h.add(vi + 1, vj + 1, w * ga.y * gb.y + curv);
                        h.add(vi, vj + 1, w * ga.x * gb.y);
                        h.add(vi + 1, vj, w * ga.y * gb.x);
                    }
                }
            }
        }
        (g, h)
    }
}

fn base_hessian(n: usize, w: &CostWeights, dt: f64) -> BandMatrix {
    let hs = cost::hessian_scalar(n, w, dt);
    let mut h = BandMatrix::zeros(2 * (n - 2), KD);
    for i in 2..n {
        for j in i.saturating_sub(cost::SCALAR_HALF_BANDWIDTH).max(2)..=i {
            let v = hs[i * n + j];
            if v != 0.0 {
                h.add(2 * (i - 2), 2 * (j - 2), v);
                h.add(2 * (i - 2) + 1, 2 * (j - 2) + 1, v);
            }
        }
    }
    h
}

fn max_violation(res: &[Residual]) -> f64 {
    res.iter().fold(0.0, |m, r| m.max(r.value))
}

fn active_counts(res: &[Residual], tol: f64) -> ActiveCounts {
    let mut c = ActiveCounts::default();
    for r in res.iter().filter(|r| r.value >= -tol) {
        match r.family {
            Family::BoundaryLeft => c.boundary_left += 1,
            Family::BoundaryRight => c.boundary_right += 1,
            Family::Dynamic => c.dynamic += 1,
            Family::SpatioTemporal => c.spatio_temporal += 1,
            Family::Acceleration => c.acceleration += 1,
        }
    }
    c
}

fn validate(problem: &OptProblem<'_>, warm: Option<&[Vec2]>) -> Result<usize, OptError> {
    let n = problem.behavior.len();
    if n < 5 {
        return Err(OptError::TooFewPoints { needed: 5, got: n });
    }
    if !problem.weights.is_valid() {
        return Err(OptError::BadWeights);
    }
    if let Some(w) = warm {
        if w.len() != n {
            return Err(OptError::LengthMismatch { expected: n, got: w.len() });
        }
        if !w.iter().all(|p| p.is_finite()) {
            return Err(OptError::NonFinite);
        }
    }
    if let Some(c) = &problem.constraints.corridor {
        if c.len() != n {
            return Err(OptError::LengthMismatch { expected: n, got: c.len() });
        }
    }
    let finite = problem.behavior.iter().chain(problem.pinned.iter()).all(|p| p.is_finite())
        && problem.dt.is_finite()
        && problem.dt > 0.0;
    if !finite {
        return Err(OptError::NonFinite);
    }
    Ok(n)
}

/// Solves the central problem. The warm start defaults to the behavior
/// trajectory; the pinned points are always imposed.
pub fn solve(problem: &OptProblem<'_>, params: &OptimizerParams, warm_start: Option<&[Vec2]>) -> Result<Solution, OptError> {
    let n = validate(problem, warm_start)?;
    let mut pts: Vec<Vec2> = warm_start.unwrap_or(problem.behavior).to_vec();
    pts[0] = problem.pinned[0];
    pts[1] = problem.pinned[1];

    let mut ws = Workspace {
        problem,
        evaluator: ConstraintEvaluator::new(problem.constraints, problem.behavior, problem.dt, params.projection_window, params.cull_radius),
        base_hessian: base_hessian(n, &problem.weights, problem.dt),
        residuals: Vec::new(),
        n,
    };
    ws.evaluator.evaluate(&pts, &mut ws.residuals);
    let mut lambda = vec![0.0; ws.residuals.len()];
    let mut mu = params.mu_init;
    let mut prev_violation = f64::INFINITY;
    let mut best_feasible: Option<(f64, Vec<Vec2>)> = None;
    let mut least_violating: (f64, Vec<Vec2>) = (f64::INFINITY, pts.clone());
    let mut history = Vec::new();
    let mut inner_total = 0;
    let mut outer_done = 0;
    let mut status = SolveStatus::MaxIterations;
    let mut last_step = f64::INFINITY;
    let a_max = problem.constraints.a_max;

    for outer in 0..params.max_outer {
        outer_done = outer + 1;
        let mut converged = false;
        let (mut l_cur, _) = ws.augmented(&pts, &lambda, mu);
        for _ in 0..params.max_inner {
            inner_total += 1;
            let (g, h) = ws.newton_system(&pts, &lambda, mu);
            let step = match h.cholesky() {
                Ok(f) => f.solve(&g),
                Err(_) => {
                    // fall back to the cost Hessian alone, which is positive definite
                    ws.base_hessian.clone().cholesky().expect("cost Hessian is positive definite").solve(&g)
                }
            };
            let step_norm = step.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let slope: f64 = -g.iter().zip(&step).map(|(a, b)| a * b).sum::<f64>();
            last_step = step_norm;
            let mut alpha = 1.0;
            let mut trial = pts.clone();
            let mut accepted = false;
            // the full step always gets a try (it refines a converged
            // iterate); halving below the stationarity tolerance cannot help
            while alpha == 1.0 || step_norm * alpha >= 1e-2 * params.tol_g {
                for i in 2..n {
                    trial[i] = pts[i] - Vec2::new(step[2 * (i - 2)], step[2 * (i - 2) + 1]) * alpha;
                }
                let (l_new, _) = ws.augmented(&trial, &lambda, mu);
                if l_new <= l_cur + 1e-4 * alpha * slope || (step_norm * alpha <= params.tol_g && l_new <= l_cur + 1e-12 * l_cur.abs()) {
                    l_cur = l_new;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if accepted {
                std::mem::swap(&mut pts, &mut trial);
            }
            if step_norm <= params.tol_g {
                converged = true;
                break;
            }
            if !accepted {
                break;
            }
        }
        ws.evaluator.evaluate(&pts, &mut ws.residuals);
        let violation = max_violation(&ws.residuals);
        let j = cost::cost(&pts, problem.behavior, &problem.weights, problem.dt);
        if params.record_history {
            history.push(IterationRecord {
                outer,
                inner: inner_total,
                cost: j,
                max_violation: violation,
            });
        }
        if violation <= params.tol_h {
            if best_feasible.as_ref().map_or(true, |(bj, _)| j < *bj) {
                best_feasible = Some((j, pts.clone()));
            }
            if converged {
                status = SolveStatus::Success;
                break;
            }
        }
        if violation < least_violating.0 {
            least_violating = (violation, pts.clone());
        }
        for (k, r) in ws.residuals.iter().enumerate() {
            lambda[k] = (lambda[k] + mu * r.value * scale_of(r.family, a_max)).max(0.0);
        }
        if violation > 0.25 * prev_violation {
            mu = (mu * params.mu_growth).min(params.mu_max);
        }
        prev_violation = violation;
    }

    let points = match status {
        SolveStatus::Success => pts,
        _ => match best_feasible {
            Some((_, p)) => {
                status = SolveStatus::MaxIterations;
                p
            }
            None => {
                status = SolveStatus::Infeasible;
                least_violating.1
            }
        },
    };
    ws.evaluator.evaluate(&points, &mut ws.residuals);
    let report = SolveReport {
        status,
        outer_iterations: outer_done,
        inner_iterations: inner_total,
        cost: cost::cost(&points, problem.behavior, &problem.weights, problem.dt),
        max_violation: max_violation(&ws.residuals),
        stationarity: last_step,
        active: active_counts(&ws.residuals, params.tol_h),
        family_max: FamilyMaxima::from_residuals(&ws.residuals),
        history,
    };
    Ok(Solution { points, report })
}
