//! Static SVG plots of a run: the driven paths and the ego signals over time.

use std::path::Path;

use plotters::prelude::*;
use thiserror::Error;

use super::log::SimLog;

#[derive(Debug, Error)]
#[error("cannot draw plot: {0}")]
pub struct PlotError(String);

fn err<E: std::fmt::Debug>(e: E) -> PlotError {
    PlotError(format!("{e:?}"))
}

const PALETTE: [RGBColor; 4] = [RED, GREEN, MAGENTA, CYAN];

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (-1.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(0.5);
    (lo - pad, hi + pad)
}

/// Top view of the ego path and the other vehicles' paths, equal axis scale.
pub fn write_path_svg(log: &SimLog, file: &Path) -> Result<(), PlotError> {
    let xs = log.rows.iter().flat_map(|r| std::iter::once(r.x).chain(r.others.iter().map(|o| o.0)));
    let ys = log.rows.iter().flat_map(|r| std::iter::once(r.y).chain(r.others.iter().map(|o| o.1)));
    let (x0, x1) = range(xs);
    let (y0, y1) = range(ys);
    let half = 0.5 * (x1 - x0).max(y1 - y0);
    let (cx, cy) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));

    let root = SVGBackend::new(file, (800, 800)).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("path", ("sans-serif", 20))
        .margin(15)
        .x_label_area_size(35)
        .y_label_area_size(45)
        .build_cartesian_2d(cx - half..cx + half, cy - half..cy + half)
        .map_err(err)?;
    chart.configure_mesh().x_desc("x [m]").y_desc("y [m]").draw().map_err(err)?;
    chart
        .draw_series(LineSeries::new(log.rows.iter().map(|r| (r.x, r.y)), BLUE.stroke_width(2)))
        .map_err(err)?
        .label("ego")
        .legend(|(x, y)| PathElement::new([(x, y), (x + 20, y)], BLUE));
    for (k, id) in log.vehicle_ids.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        chart
            .draw_series(LineSeries::new(log.rows.iter().map(|r| (r.others[k].0, r.others[k].1)), color))
            .map_err(err)?
            .label(id.as_str())
            .legend(move |(x, y)| PathElement::new([(x, y), (x + 20, y)], color));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(err)?;
    root.present().map_err(err)
}

/// Speed, longitudinal and lateral acceleration, and steering angle over time.
pub fn write_signals_svg(log: &SimLog, file: &Path) -> Result<(), PlotError> {
    let t: Vec<f64> = log.rows.iter().map(|r| r.t).collect();
    let (t0, t1) = (t.first().copied().unwrap_or(0.0), t.last().copied().unwrap_or(1.0).max(1e-3));
    let root = SVGBackend::new(file, (900, 900)).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    let panels = root.split_evenly((3, 1));

    type Series<'a> = (&'a str, RGBColor, Vec<f64>);
    let groups: [(&str, &str, Vec<Series>); 3] = [
        ("speed", "v [m/s]", vec![("v", BLUE, log.rows.iter().map(|r| r.v).collect())]),
        (
            "acceleration",
            "a [m/s^2]",
            vec![
                ("a_lon", BLUE, log.rows.iter().map(|r| r.a_lon).collect()),
                ("a_lat", RED, log.rows.iter().map(|r| r.a_lat).collect()),
            ],
        ),
        (
            "steering angle",
            "steer [deg]",
            vec![("steer", BLUE, log.rows.iter().map(|r| r.steer.to_degrees()).collect())],
        ),
    ];
    for (area, (title, unit, series)) in panels.iter().zip(groups) {
        let (lo, hi) = range(series.iter().flat_map(|s| s.2.iter().copied()));
        let mut chart = ChartBuilder::on(area)
            .caption(title, ("sans-serif", 18))
            .margin(10)
            .x_label_area_size(30)
            .y_label_area_size(50)
            .build_cartesian_2d(t0..t1, lo..hi)
            .map_err(err)?;
        chart.configure_mesh().x_desc("t [s]").y_desc(unit).draw().map_err(err)?;
        for (name, color, values) in series {
            chart
                .draw_series(LineSeries::new(t.iter().copied().zip(values), color.stroke_width(2)))
                .map_err(err)?
                .label(name)
                .legend(move |(x, y)| PathElement::new([(x, y), (x + 20, y)], color));
        }
        chart.configure_series_labels().border_style(BLACK).draw().map_err(err)?;
    }
    root.present().map_err(err)
}
