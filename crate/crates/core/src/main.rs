use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use motion_planner::config::PlannerConfig;
use motion_planner::planner::{EgoSpec, Planner};
use motion_planner::sim::{self, builtin, plot, RunStatus, Scenario, ScenarioFile};
use motion_planner::types::VehicleState;

#[derive(Parser)]
#[command(name = "motion-planner", version, about = "Closed-loop motion planning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write log.csv, metrics.json and SVG plots.
    Run(RunArgs),
    /// Run a single planning cycle and dump its intermediate results.
    PlanOnce(PlanOnceArgs),
    /// Check a scenario without running it.
    Validate(Source),
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Built-in scenario.
    #[arg(long, value_parser = builtin::NAMES)]
    builtin: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Planner configuration overrides (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed replacing the scenario's own.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct PlanOnceArgs {
    #[command(flatten)]
    source: Source,
    /// Ego state as `x,y,heading,v`; defaults to the scenario start.
    #[arg(long)]
    state: Option<String>,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Planner configuration overrides (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Source {
    fn load(&self) -> Result<ScenarioFile> {
        match (&self.scenario, &self.builtin) {
            (Some(path), _) => {
                let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
                ScenarioFile::from_json(&text).with_context(|| format!("in {}", path.display()))
            }
            (None, Some(name)) => builtin::by_name(name).with_context(|| format!("unknown builtin `{name}`")),
            (None, None) => bail!("either --scenario or --builtin is required"),
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<Option<Value>> {
    path.map(|p| {
        let text = fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
        serde_json::from_str(&text).with_context(|| format!("{} is not valid JSON", p.display()))
    })
    .transpose()
}

#[derive(Serialize)]
struct RunReport {
    status: RunStatus,
    metrics: sim::Metrics,
    artifacts: Vec<PathBuf>,
}

fn cmd_run(args: &RunArgs) -> Result<RunStatus> {
    let mut file = args.source.load()?;
    if let Some(seed) = args.seed {
        file.sim.seed = seed;
    }
    let overrides = load_config(args.config.as_deref())?;
    let scenario = file.build(&PlannerConfig::default(), overrides.as_ref())?;
    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;

    let result = sim::run(&scenario)?;
    let log = &result.log;
    let metrics = sim::metrics(log);
    let log_path = args.out.join("log.csv");
    let metrics_path = args.out.join("metrics.json");
    let path_svg = args.out.join("path.svg");
    let signals_svg = args.out.join("signals.svg");
    log.write_csv(fs::File::create(&log_path).with_context(|| format!("cannot create {}", log_path.display()))?)?;
    fs::write(&metrics_path, serde_json::to_string_pretty(&metrics)?)?;
    plot::write_path_svg(log, &path_svg)?;
    plot::write_signals_svg(log, &signals_svg)?;

    let report = RunReport {
        status: log.status,
        metrics,
        artifacts: vec![log_path, metrics_path, path_svg, signals_svg],
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(log.status)
}

fn parse_state(text: &str) -> Result<[f64; 4]> {
    let values: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("state `{text}` is not a comma separated list of numbers"))?;
    match values.as_slice() {
        &[x, y, h, v] if values.iter().all(|x| x.is_finite()) && v >= 0.0 => Ok([x, y, h, v]),
        _ => bail!("state must be `x,y,heading,v` with finite values and v >= 0"),
    }
}

fn cmd_plan_once(args: &PlanOnceArgs) -> Result<()> {
    let file = args.source.load()?;
    let overrides = load_config(args.config.as_deref())?;
    let scenario: Scenario = file.build(&PlannerConfig::default(), overrides.as_ref())?;
    let ego_spec = EgoSpec {
        length: file.ego.length,
        width: file.ego.width,
        v_desired: file.ego.v_desired,
    };
    let (start, start_heading) = scenario.ego_start();
    let [x, y, heading, v] = match &args.state {
        Some(s) => parse_state(s)?,
        None => [start.x, start.y, start_heading, file.ego.v0],
    };
    let ego = VehicleState {
        id: "ego".into(),
        position: motion_planner::geometry::Vec2::new(x, y),
        heading,
        v,
        a: 0.0,
        length: ego_spec.length,
        width: ego_spec.width,
    };
    let mut planner = Planner::new(
        scenario.config.clone(),
        scenario.map.clone(),
        file.conflicts.clone(),
        ego_spec,
        &file.ego.route,
        ego.position,
        0.0,
    )?;
    let rec = planner.plan(0.0, &ego, &scenario.initial_others())?;
    let xy = |pts: &[motion_planner::geometry::Vec2]| pts.iter().map(|p| [p.x, p.y]).collect::<Vec<_>>();
    let dump = json!({
        "mode": rec.mode,
        "lane": rec.lane,
        "maneuver": rec.maneuver.to_string(),
        "status": rec.status,
        "behavior": {
            "points": xy(&rec.behavior.points),
            "s": rec.behavior.s,
            "v": rec.behavior.v,
            "a": rec.behavior.a,
        },
        "trajectory": xy(&rec.trajectory.points),
        "dt": rec.trajectory.dt,
        "report": rec.report.as_ref().map(|r| json!({
            "status": r.status,
            "cost": r.cost,
            "max_violation": r.max_violation,
            "outer_iterations": r.outer_iterations,
            "inner_iterations": r.inner_iterations,
            "family_max": r.family_max,
        })),
        "warnings": rec.warnings,
    });
    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    let path = args.out.join("plan.json");
    fs::write(&path, serde_json::to_string_pretty(&dump)?)?;
    println!("{}", path.display());
    Ok(())
}

fn cmd_validate(source: &Source) -> Result<bool> {
    let file = source.load()?;
    let problems = file.problems();
    if problems.is_empty() {
        if let Err(e) = file.build(&PlannerConfig::default(), None) {
            println!("{e}");
            return Ok(false);
        }
        println!("ok");
        return Ok(true);
    }
    for p in &problems {
        println!("{p}");
    }
    Ok(false)
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(args) => cmd_run(args).map(|s| match s {
            RunStatus::Ok => ExitCode::SUCCESS,
            RunStatus::Failed => ExitCode::from(2),
        }),
        Command::PlanOnce(args) => cmd_plan_once(args).map(|()| ExitCode::SUCCESS),
        Command::Validate(source) => cmd_validate(source).map(|ok| if ok { ExitCode::SUCCESS } else { ExitCode::from(1) }),
    };
    outcome.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(1)
    })
}
