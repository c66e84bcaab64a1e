//! Run summary computed from log rows alone, so the same numbers follow from
//! a log read back from disk.

use serde::{Deserialize, Serialize};

use super::log::SimLog;
use super::RunStatus;
use crate::decision::Mode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSpan {
    pub mode: Mode,
    pub t_start: f64,
    pub t_end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub status: RunStatus,
    pub ticks: usize,
    pub duration: f64,
    pub max_abs_a_lon: f64,
    pub max_abs_a_lat: f64,
    /// Largest norm of the finite-difference derivative of (a_lon, a_lat).
    pub max_abs_jerk: f64,
    pub max_v: f64,
    /// Smallest signed footprint gap to any other vehicle; absent without traffic.
    pub min_gap: Option<f64>,
    pub collision: bool,
    pub mode_timeline: Vec<ModeSpan>,
    pub final_lane: Option<String>,
}

pub fn metrics(log: &SimLog) -> Metrics {
    let rows = &log.rows;
    let max_abs = |f: &dyn Fn(&super::LogRow) -> f64| rows.iter().map(|r| f(r).abs()).fold(0.0, f64::max);
    let max_abs_jerk = rows
        .windows(2)
        .filter(|w| w[1].t > w[0].t)
        .map(|w| {
            let dt = w[1].t - w[0].t;
            (w[1].a_lon - w[0].a_lon).hypot(w[1].a_lat - w[0].a_lat) / dt
        })
        .fold(0.0, f64::max);
    let min_gap = rows.iter().map(|r| r.min_gap).filter(|g| g.is_finite()).reduce(f64::min);

    let mut mode_timeline: Vec<ModeSpan> = Vec::new();
    for r in rows {
        match mode_timeline.last_mut() {
            Some(span) if span.mode == r.mode => span.t_end = r.t,
            _ => mode_timeline.push(ModeSpan { mode: r.mode, t_start: r.t, t_end: r.t }),
        }
    }

    Metrics {
        status: log.status,
        ticks: rows.len(),
        duration: rows.last().map_or(0.0, |r| r.t) - rows.first().map_or(0.0, |r| r.t),
        max_abs_a_lon: max_abs(&|r| r.a_lon),
        max_abs_a_lat: max_abs(&|r| r.a_lat),
        max_abs_jerk,
        max_v: max_abs(&|r| r.v),
        min_gap,
        collision: min_gap.is_some_and(|g| g <= 0.0),
        mode_timeline,
        final_lane: rows.last().map(|r| r.lane.clone()),
    }
}
