//! Quadratic trajectory cost: deviation from the behavior trajectory plus
//! squared finite-difference acceleration, jerk and snap.

use serde::{Deserialize, Serialize};

use super::OptError;
use crate::geometry::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostWeights {
    pub behavior: f64,
    pub acceleration: f64,
    pub jerk: f64,
    pub snap: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        CostWeights {
            behavior: 1.0,
            acceleration: 2.0,
            jerk: 4.0,
            snap: 2.0,
        }
    }
}

impl CostWeights {
    pub fn is_valid(&self) -> bool {
        self.behavior > 0.0 && self.acceleration >= 0.0 && self.jerk >= 0.0 && self.snap >= 0.0
    }

    pub(crate) fn derivative_terms(&self) -> [(usize, f64); 3] {
        [(2, self.acceleration), (3, self.jerk), (4, self.snap)]
    }
}

const D2: [f64; 3] = [1.0, -2.0, 1.0];
const D3: [f64; 4] = [-1.0, 3.0, -3.0, 1.0];
const D4: [f64; 5] = [1.0, -4.0, 6.0, -4.0, 1.0];

/// Forward-difference coefficients of the given order.
pub fn stencil(order: usize) -> &'static [f64] {
    match order {
        2 => &D2,
        3 => &D3,
        4 => &D4,
        _ => panic!("unsupported difference order {order}"),
    }
}

/// First index of the stencil window used for the derivative at `i`. Interior
/// points get a centered window, boundary points a shifted one.
pub fn window_start(i: usize, n: usize, order: usize) -> usize {
    i.saturating_sub(order / 2).min(n - order - 1)
}

/// Derivative estimate of `order` at every point.
pub fn finite_diff(points: &[Vec2], dt: f64, order: usize) -> Result<Vec<Vec2>, OptError> {
    let n = points.len();
    if !(2..=4).contains(&order) {
        return Err(OptError::UnsupportedOrder(order));
    }
    if n < order + 1 {
        return Err(OptError::TooFewPoints { needed: order + 1, got: n });
    }
    Ok((0..n).map(|i| diff_at(points, dt, order, i)).collect())
}

#[inline]
pub(crate) fn diff_at(points: &[Vec2], dt: f64, order: usize, i: usize) -> Vec2 {
    let c = stencil(order);
    let start = window_start(i, points.len(), order);
    let mut acc = Vec2::ZERO;
    for (j, &cj) in c.iter().enumerate() {
        acc += points[start + j] * cj;
    }
    acc / dt.powi(order as i32)
}

/// Cost value. Summation order is fixed (term by term, point by point).
pub fn cost(points: &[Vec2], behavior: &[Vec2], w: &CostWeights, dt: f64) -> f64 {
    let n = points.len();
    let mut j = 0.0;
    for i in 0..n {
        j += w.behavior * (points[i] - behavior[i]).norm_sq();
    }
    for (order, wk) in w.derivative_terms() {
        if wk == 0.0 || n < order + 1 {
            continue;
        }
        for i in 0..n {
            j += wk * diff_at(points, dt, order, i).norm_sq();
        }
    }
    j
}

/// Analytic gradient, one 2-D entry per point.
pub fn cost_gradient(points: &[Vec2], behavior: &[Vec2], w: &CostWeights, dt: f64) -> Vec<Vec2> {
    let n = points.len();
    let mut g: Vec<Vec2> = (0..n).map(|i| (points[i] - behavior[i]) * (2.0 * w.behavior)).collect();
    for (order, wk) in w.derivative_terms() {
        if wk == 0.0 || n < order + 1 {
            continue;
        }
        let c = stencil(order);
        let scale = 2.0 * wk / dt.powi(order as i32);
        for i in 0..n {
            let d = diff_at(points, dt, order, i) * scale;
            let start = window_start(i, n, order);
            for (k, &ck) in c.iter().enumerate() {
                g[start + k] += d * ck;
            }
        }
    }
    g
}

/// Per-coordinate Hessian of the cost (x and y decouple and share it), in
/// dense row-major form. Entries beyond the band are zero.
pub fn hessian_scalar(n: usize, w: &CostWeights, dt: f64) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] += 2.0 * w.behavior;
    }
    for (order, wk) in w.derivative_terms() {
        if wk == 0.0 || n < order + 1 {
            continue;
        }
        let c = stencil(order);
        let scale = 2.0 * wk / dt.powi(2 * order as i32);
        for i in 0..n {
            let start = window_start(i, n, order);
            for (a, &ca) in c.iter().enumerate() {
                for (b, &cb) in c.iter().enumerate() {
                    h[(start + a) * n + start + b] += scale * ca * cb;
                }
            }
        }
    }
    h
}

/// Half bandwidth of [`hessian_scalar`].
pub const SCALAR_HALF_BANDWIDTH: usize = 4;
