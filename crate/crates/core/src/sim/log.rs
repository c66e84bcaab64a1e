//! Per-tick CSV log. Values are rounded to nine significant digits when a row
//! is created, so a log read back from disk is identical to the one in memory.

use std::io::{Read, Write};

use thiserror::Error;

use super::RunStatus;
use crate::decision::Mode;
use crate::geometry::Vec2;

const FIXED_COLUMNS: [&str; 14] = [
    "t",
    "x",
    "y",
    "heading",
    "v",
    "a_lon",
    "a_lat",
    "steer",
    "mode",
    "maneuver",
    "cost",
    "max_violation",
    "min_gap",
    "lane",
];

#[derive(Debug, Error)]
pub enum LogError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("malformed log: {0}")]
    Malformed(String),
}

/// Rounds to nine significant digits.
pub fn round9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return if x == 0.0 { 0.0 } else { x };
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

fn fmt(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        x.to_string()
    }
}

fn parse_f(s: &str) -> Result<f64, LogError> {
    match s {
        "nan" => Ok(f64::NAN),
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => s.parse().map_err(|_| LogError::Malformed(format!("`{s}` is not a number"))),
    }
}

fn parse_mode(s: &str) -> Result<Mode, LogError> {
    match s {
        "LTM" => Ok(Mode::Ltm),
        "LaneChange" => Ok(Mode::LaneChange),
        "Emergency" => Ok(Mode::Emergency),
        _ => Err(LogError::Malformed(format!("unknown mode `{s}`"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub v: f64,
    pub a_lon: f64,
    pub a_lat: f64,
    pub steer: f64,
    pub mode: Mode,
    pub maneuver: String,
    pub cost: f64,
    pub max_violation: f64,
    pub min_gap: f64,
    pub lane: String,
    /// x, y, heading of every other vehicle, in log column order.
    pub others: Vec<(f64, f64, f64)>,
}

impl LogRow {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        t: f64,
        position: Vec2,
        heading: f64,
        v: f64,
        a_lon: f64,
        a_lat: f64,
        steer: f64,
        mode: Mode,
        maneuver: String,
        cost: f64,
        max_violation: f64,
        min_gap: f64,
        lane: String,
        others: Vec<(f64, f64, f64)>,
    ) -> Self {
        LogRow {
            t: round9(t),
            x: round9(position.x),
            y: round9(position.y),
            heading: round9(heading),
            v: round9(v),
            a_lon: round9(a_lon),
            a_lat: round9(a_lat),
            steer: round9(steer),
            mode,
            maneuver,
            cost: round9(cost),
            max_violation: round9(max_violation),
            min_gap: round9(min_gap),
            lane,
            others: others.into_iter().map(|(x, y, h)| (round9(x), round9(y), round9(h))).collect(),
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimLog {
    pub vehicle_ids: Vec<String>,
    pub rows: Vec<LogRow>,
    pub status: RunStatus,
}

impl SimLog {
    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = FIXED_COLUMNS.iter().map(|c| c.to_string()).collect();
        for id in &self.vehicle_ids {
            h.extend([format!("{id}_x"), format!("{id}_y"), format!("{id}_heading")]);
        }
        h
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), LogError> {
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
        w.write_record(self.header())?;
        for r in &self.rows {
            let mut rec = vec![
                fmt(r.t),
                fmt(r.x),
                fmt(r.y),
                fmt(r.heading),
                fmt(r.v),
                fmt(r.a_lon),
                fmt(r.a_lat),
                fmt(r.steer),
                r.mode.to_string(),
                r.maneuver.clone(),
                fmt(r.cost),
                fmt(r.max_violation),
                fmt(r.min_gap),
                r.lane.clone(),
            ];
            for &(x, y, h) in &r.others {
                rec.extend([fmt(x), fmt(y), fmt(h)]);
            }
            w.write_record(&rec)?;
        }
        w.write_record(["STATUS", &self.status.to_string()])?;
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<SimLog, LogError> {
        let mut rd = csv::ReaderBuilder::new().flexible(true).from_reader(input);
        let header = rd.headers()?.clone();
        if header.len() < FIXED_COLUMNS.len() || (header.len() - FIXED_COLUMNS.len()) % 3 != 0 {
            return Err(LogError::Malformed("unexpected header".into()));
        }
        let vehicle_ids: Vec<String> = header
            .iter()
            .skip(FIXED_COLUMNS.len())
            .step_by(3)
            .map(|c| c.trim_end_matches("_x").to_string())
            .collect();
        let mut rows = Vec::new();
        let mut status = None;
        for rec in rd.records() {
            let rec = rec?;
            if rec.get(0) == Some("STATUS") {
                status = Some(match rec.get(1) {
                    Some("OK") => RunStatus::Ok,
                    Some("FAILED") => RunStatus::Failed,
                    other => return Err(LogError::Malformed(format!("bad status {other:?}"))),
                });
                continue;
            }
            if rec.len() != header.len() {
                return Err(LogError::Malformed(format!("row with {} fields", rec.len())));
            }
            let f = |i: usize| parse_f(&rec[i]);
            let mut others = Vec::with_capacity(vehicle_ids.len());
            for k in 0..vehicle_ids.len() {
                let b = FIXED_COLUMNS.len() + 3 * k;
                others.push((f(b)?, f(b + 1)?, f(b + 2)?));
            }
            rows.push(LogRow {
                t: f(0)?,
                x: f(1)?,
                y: f(2)?,
                heading: f(3)?,
                v: f(4)?,
                a_lon: f(5)?,
                a_lat: f(6)?,
                steer: f(7)?,
                mode: parse_mode(&rec[8])?,
                maneuver: rec[9].to_string(),
                cost: f(10)?,
                max_violation: f(11)?,
                min_gap: f(12)?,
                lane: rec[13].to_string(),
                others,
            });
        }
        let status = status.ok_or_else(|| LogError::Malformed("missing STATUS trailer".into()))?;
        Ok(SimLog { vehicle_ids, rows, status })
    }
}
