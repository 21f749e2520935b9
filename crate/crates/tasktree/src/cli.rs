//! Subcommand front end. Everything here is a thin shell over the
//! library: `check` loads and cross-validates a scenario bundle, `run`
//! simulates it and writes artifacts, `plot` turns a finished trace
//! into a picture.
//!
//! Exit codes partition outcomes: 0 for success, 1 when the scenario
//! itself fails (validation diagnostics from `check`, a timed-out or
//! failed mission from `run`), 2 for configuration and I/O problems.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::report;
use crate::scenario::{self, ScenarioError};
use crate::sim::{run_scenario, SimOutcome};

pub const EXIT_OK: i32 = 0;
pub const EXIT_SCENARIO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "tasktree",
    version,
    about = "Behavior-tree missions over a prioritized whole-body controller, in simulation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and cross-validate a scenario bundle without running it.
    Check {
        /// Scenario file; robot and tree paths resolve relative to it.
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Simulate a scenario and write trace.csv, ticks.log, summary.toml.
    Run {
        /// Scenario file.
        #[arg(long)]
        scenario: PathBuf,
        /// Output directory, created if missing.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the mission time budget, simulated seconds.
        #[arg(long)]
        duration: Option<f64>,
        /// Override the behavior tree rate, Hz.
        #[arg(long)]
        bt_hz: Option<f64>,
        /// Override the stack-of-tasks solve rate, Hz.
        #[arg(long)]
        sot_hz: Option<f64>,
        /// Also write one JSON line per solve to solver_debug.jsonl.
        #[arg(long)]
        debug_solver: bool,
    },
    /// Draw a finished run as a static SVG.
    Plot {
        /// Scenario the trace came from, for the world geometry.
        #[arg(long)]
        scenario: PathBuf,
        /// Trace table written by `run`.
        #[arg(long)]
        trace: PathBuf,
        /// Output SVG path.
        #[arg(long, default_value = "plot.svg")]
        out: PathBuf,
    },
}

pub fn main() -> i32 {
    run(Cli::parse())
}

pub fn run(cli: Cli) -> i32 {
    match cli.command {
        Command::Check { scenario } => cmd_check(&scenario),
        Command::Run {
            scenario,
            out,
            duration,
            bt_hz,
            sot_hz,
            debug_solver,
        } => cmd_run(&scenario, &out, duration, bt_hz, sot_hz, debug_solver),
        Command::Plot {
            scenario,
            trace,
            out,
        } => cmd_plot(&scenario, &trace, &out),
    }
}

fn cmd_check(path: &Path) -> i32 {
    match scenario::load(path) {
        Ok(bundle) => {
            println!("ok: {}", path.display());
            println!("  robot: {} joints", bundle.robot.n());
            println!("  tree: {} nodes", bundle.tree.root.node_ids().len());
            println!(
                "  catalogs: {} tasks, {} predicates, {} commands",
                bundle.config.tasks.len(),
                bundle.config.predicates.len(),
                bundle.config.commands.len()
            );
            EXIT_OK
        }
        Err(ScenarioError::Io(m)) => {
            eprintln!("error: {}", m);
            EXIT_CONFIG
        }
        Err(ScenarioError::Parse(m)) => {
            eprintln!("error: {}", m);
            EXIT_SCENARIO
        }
        Err(ScenarioError::Invalid(problems)) => {
            for p in &problems {
                eprintln!("error: {}", p);
            }
            eprintln!("{} problem(s) found", problems.len());
            EXIT_SCENARIO
        }
    }
}

fn cmd_run(
    path: &Path,
    out: &Path,
    duration: Option<f64>,
    bt_hz: Option<f64>,
    sot_hz: Option<f64>,
    debug_solver: bool,
) -> i32 {
    let bundle = match scenario::load_with(path, |c| {
        if let Some(d) = duration {
            c.schedule.timeout = d;
        }
        if let Some(hz) = bt_hz {
            c.schedule.bt_hz = hz;
        }
        if let Some(hz) = sot_hz {
            c.schedule.sot_hz = hz;
        }
    }) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: {}", e);
            return EXIT_CONFIG;
        }
    };

    let artifacts = match run_scenario(&bundle, debug_solver) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {}", e);
            return EXIT_CONFIG;
        }
    };

    let node_ids = bundle.tree.root.node_ids();
    match report::write_run_artifacts(
        out,
        &artifacts,
        &bundle.config,
        &node_ids,
        bundle.robot.n(),
    ) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
        }
        Err(e) => {
            eprintln!("error: {}", e);
            return EXIT_CONFIG;
        }
    }

    for w in &artifacts.warnings {
        eprintln!("warning: {}", w);
    }
    println!(
        "outcome: {} at t={:.2}s ({} ticks, {} solves)",
        artifacts.outcome.as_str(),
        artifacts.completion_time,
        artifacts.ticks.len(),
        artifacts.solve_count
    );
    if artifacts.outcome == SimOutcome::RootSuccess {
        EXIT_OK
    } else {
        EXIT_SCENARIO
    }
}

fn cmd_plot(scenario_path: &Path, trace_path: &Path, out: &Path) -> i32 {
    let bundle = match scenario::load(scenario_path) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: {}", e);
            return EXIT_CONFIG;
        }
    };
    let text = match std::fs::read_to_string(trace_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}: {}", trace_path.display(), e);
            return EXIT_CONFIG;
        }
    };
    let points = match report::read_trace(&text) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {}: {}", trace_path.display(), e);
            return EXIT_CONFIG;
        }
    };
    let svg = match report::plot_svg(&points, &bundle.config) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {}", e);
            return EXIT_CONFIG;
        }
    };
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            if let Err(e) = std::fs::create_dir_all(parent) {
                eprintln!("error: {}: {}", parent.display(), e);
                return EXIT_CONFIG;
            }
        }
    }
    if let Err(e) = std::fs::write(out, svg) {
        eprintln!("error: {}: {}", out.display(), e);
        return EXIT_CONFIG;
    }
    println!("wrote {}", out.display());
    EXIT_OK
}
