//! The full mission end to end: patrol between B and C, pick the cube
//! up near B, carry it across, and set it down on the place target
//! near C, all under one behavior tree and one task stack.
//!
//! Writes the run artifacts (trace.csv, ticks.log, summary.toml) to a
//! temporary directory and prints the summary.
//!
//!     cargo run --example pick_and_place

use std::path::Path;

use nalgebra::Vector2;
use tasktree::report;
use tasktree::scenario;
use tasktree::sim::run_scenario;

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let bundle = scenario::load(&dir.join("pick_and_place.toml")).expect("scenario loads");
    println!(
        "tree '{}' with {} nodes, {} tasks in the catalog",
        bundle.tree.root.id,
        bundle.tree.root.node_ids().len(),
        bundle.config.tasks.len()
    );

    let artifacts = run_scenario(&bundle, false).expect("run completes");

    // Milestones from the trace: attach and release edges, reversals.
    for i in artifacts.grasp_indices() {
        let r = &artifacts.trace[i];
        println!(
            "t={:6.2}s  grasp at base x {:+.3}, cube ({:.3}, {:.3})",
            r.time, r.base[0], r.cube.x, r.cube.y
        );
    }
    for i in artifacts.release_indices() {
        let r = &artifacts.trace[i];
        println!(
            "t={:6.2}s  release, cube ({:.3}, {:.3})",
            r.time, r.cube.x, r.cube.y
        );
    }

    let place = Vector2::new(bundle.config.place.center[0], bundle.config.place.center[1]);
    let last = artifacts.trace.last().expect("non-empty trace");
    let miss = (Vector2::new(last.cube.x, last.cube.y) - place).norm();
    println!(
        "\noutcome {} at t={:.2}s, {} ticks, {} solves, {} reversals",
        artifacts.outcome.as_str(),
        artifacts.completion_time,
        artifacts.ticks.len(),
        artifacts.solve_count,
        artifacts.reversal_count()
    );
    println!(
        "cube ends {:.1} mm from the place center (radius {:.0} mm)",
        miss * 1e3,
        bundle.config.place.radius * 1e3
    );

    let out = std::env::temp_dir().join("tasktree-pick-and-place");
    let node_ids = bundle.tree.root.node_ids();
    let written =
        report::write_run_artifacts(&out, &artifacts, &bundle.config, &node_ids, bundle.robot.n())
            .expect("artifacts written");
    println!();
    for p in &written {
        println!("wrote {}", p.display());
    }

    let summary = std::fs::read_to_string(out.join("summary.toml")).unwrap();
    println!("\nsummary.toml:\n{}", summary.trim_end());
}
