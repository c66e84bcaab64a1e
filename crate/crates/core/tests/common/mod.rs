#![allow(dead_code)]

use motion_planner::config::PlannerConfig;
use motion_planner::sim::{self, builtin, ScenarioFile, SimRun};

pub fn run_file(file: &ScenarioFile) -> SimRun {
    let scenario = file.build(&PlannerConfig::default(), None).expect("builtin scenario builds");
    sim::run(&scenario).expect("simulation runs")
}

pub fn run_builtin(name: &str) -> SimRun {
    run_file(&builtin::by_name(name).expect("known builtin"))
}

pub fn csv_bytes(run: &SimRun) -> Vec<u8> {
    let mut out = Vec::new();
    run.log.write_csv(&mut out).expect("csv to memory");
    out
}

/// Column index of another vehicle in the log rows.
pub fn vehicle_index(run: &SimRun, id: &str) -> usize {
    run.log.vehicle_ids.iter().position(|v| v == id).unwrap_or_else(|| panic!("no vehicle {id} in log"))
}
