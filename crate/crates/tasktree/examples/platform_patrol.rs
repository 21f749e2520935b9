//! The waypoint controller and the multi-rate scheduler on their own:
//! a patrol-only scenario where the behavior tree just shuttles the
//! base between B and C while the arm holds posture.
//!
//! The patrol repeat never finishes, so the run uses its whole time
//! budget by design; what matters is the loop bookkeeping.
//!
//!     cargo run --example platform_patrol

use std::path::Path;

use tasktree::scenario;
use tasktree::sim::run_scenario;

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let bundle = scenario::load(&dir.join("patrol_only.toml")).expect("scenario loads");
    let sched = &bundle.config.schedule;
    println!(
        "rates: bt {} Hz, solver {} Hz, platform {} Hz, budget {} s",
        sched.bt_hz, sched.sot_hz, sched.platform_hz, sched.timeout
    );

    let artifacts = run_scenario(&bundle, false).expect("run completes");

    println!(
        "\noutcome {} at t={:.2}s, {} ticks, {} solves ({} solves per tick)",
        artifacts.outcome.as_str(),
        artifacts.completion_time,
        artifacts.ticks.len(),
        artifacts.solve_count,
        artifacts.solve_count / artifacts.ticks.len() as u64
    );

    // The commanded twist is all-or-nothing: full speed toward the
    // target or an exact stop inside the goal radius.
    let speed = bundle.config.platform.speed;
    let mut moving = 0usize;
    let mut stopped = 0usize;
    let mut off_speed = 0usize;
    for r in &artifacts.trace {
        let v = (r.base_twist[0].powi(2) + r.base_twist[1].powi(2)).sqrt();
        if v == 0.0 {
            stopped += 1;
        } else {
            moving += 1;
            if (v - speed).abs() > 1e-12 {
                off_speed += 1;
            }
        }
    }
    println!(
        "trace: {} records, {} moving at exactly {speed} m/s, {} stopped, {} off-speed",
        artifacts.trace.len(),
        moving,
        stopped,
        off_speed
    );

    // Arrivals show up as commanded-direction reversals.
    let xs: Vec<f64> = artifacts.trace.iter().map(|r| r.base[0]).collect();
    let min = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    println!(
        "base x swept [{min:.3}, {max:.3}] with {} reversals",
        artifacts.reversal_count()
    );
}
