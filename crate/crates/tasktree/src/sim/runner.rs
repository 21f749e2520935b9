//! Fixed-step execution of a scenario bundle.
//!
//! Per simulation step, in this order: behavior tree tick if due (and
//! command dispatch), controller updates if due, stack build and
//! cascade solve, state integration, attachment update, trace record.
//! Everything runs off one integer step counter, so runs are
//! deterministic to the bit.

use std::collections::BTreeMap;

use nalgebra::Vector3;

use super::host::{SimHost, SimOutcome};
use crate::bt::{Engine, EngineError, TickStatus, TickTrace};
use crate::hqp::{self, HqpProblem, SolveStatus};
use crate::robot::{integrate_state, ModelError};
use crate::scenario::{Bundle, ScheduleConfig};
use crate::task::{build_stack, TaskError};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("engine: {0}")]
    Engine(#[from] EngineError),
    #[error("solver: {0}")]
    Solver(#[from] hqp::HqpError),
    #[error("task: {0}")]
    Task(#[from] TaskError),
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("schedule: {0}")]
    Schedule(String),
}

#[derive(Debug, Clone, Copy)]
pub struct Schedule {
    pub dt: f64,
    pub bt_every: usize,
    pub platform_every: usize,
    pub gripper_every: usize,
    pub total_steps: usize,
}

impl Schedule {
    pub fn from_config(c: &ScheduleConfig) -> Result<Self, SimError> {
        let ratio = |num: f64, name: &str| -> Result<usize, SimError> {
            let r = c.sot_hz / num;
            if !(r.is_finite() && r >= 1.0 - 1e-9 && (r - r.round()).abs() < 1e-9) {
                return Err(SimError::Schedule(format!(
                    "sot_hz {} is not an integer multiple of {} {}",
                    c.sot_hz, name, num
                )));
            }
            Ok(r.round() as usize)
        };
        Ok(Schedule {
            dt: 1.0 / c.sot_hz,
            bt_every: ratio(c.bt_hz, "bt_hz")?,
            platform_every: ratio(c.platform_hz, "platform_hz")?,
            gripper_every: ratio(c.gripper_hz, "gripper_hz")?,
            total_steps: (c.timeout * c.sot_hz).round() as usize,
        })
    }
}

/// One row per simulation step, sampled after integration.
#[derive(Debug, Clone)]
pub struct TraceRecord {
    pub step: usize,
    pub time: f64,
    pub base: [f64; 3],
    pub base_twist: [f64; 2],
    pub q: Vec<f64>,
    pub ee: Vector3<f64>,
    pub cube: Vector3<f64>,
    pub attached: bool,
    pub aperture: f64,
    pub platform_target: Option<String>,
    pub active_tasks: Vec<String>,
    /// (level, slack norm) for every stack level of this solve.
    pub residuals: Vec<(u32, f64)>,
    pub solve_status: SolveStatus,
}

#[derive(Debug, Clone)]
pub struct HygieneViolation {
    pub tick: u64,
    pub node: String,
    pub missing: Vec<String>,
}

#[derive(Debug)]
pub struct RunArtifacts {
    pub outcome: SimOutcome,
    /// Simulated time at which the run ended.
    pub completion_time: f64,
    pub trace: Vec<TraceRecord>,
    pub ticks: Vec<TickTrace>,
    pub solve_count: u64,
    pub max_slack: BTreeMap<u32, f64>,
    pub hygiene_violations: Vec<HygieneViolation>,
    pub warnings: Vec<String>,
    /// Tasks still in the registry when the run ended. Non-empty is
    /// expected on timeout, a scope-hygiene bug on a final outcome.
    pub leftover_tasks: Vec<String>,
    /// Task ids still tracked by any scope when the run ended.
    pub leftover_tracked: Vec<String>,
    /// One JSON object per solve when requested.
    pub solver_debug: Option<Vec<String>>,
}

impl RunArtifacts {
    /// Base direction reversals: sign flips of the commanded twist.
    pub fn reversal_count(&self) -> usize {
        let mut count = 0;
        let mut last = None::<[f64; 2]>;
        for r in &self.trace {
            let v = r.base_twist;
            if v[0] == 0.0 && v[1] == 0.0 {
                continue;
            }
            if let Some(p) = last {
                if p[0] * v[0] + p[1] * v[1] < 0.0 {
                    count += 1;
                }
            }
            last = Some(v);
        }
        count
    }

    /// Indices of the first free record after each attached stretch.
    pub fn release_indices(&self) -> Vec<usize> {
        self.transition_indices(true, false)
    }

    /// Indices of the first attached record of each grasp.
    pub fn grasp_indices(&self) -> Vec<usize> {
        self.transition_indices(false, true)
    }

    fn transition_indices(&self, from: bool, to: bool) -> Vec<usize> {
        let mut out = Vec::new();
        for i in 1..self.trace.len() {
            if self.trace[i - 1].attached == from && self.trace[i].attached == to {
                out.push(i);
            }
        }
        out
    }
}

pub fn run_scenario(bundle: &Bundle, debug_solver: bool) -> Result<RunArtifacts, SimError> {
    let schedule = Schedule::from_config(&bundle.config.schedule)?;
    let mut engine = Engine::new(bundle.tree.root.clone())?;
    let mut host = SimHost::new(&bundle.config, &bundle.robot);

    let mut outcome = SimOutcome::Timeout;
    let mut completion = schedule.total_steps as f64 * schedule.dt;
    let mut ticks: Vec<TickTrace> = Vec::new();
    let mut trace: Vec<TraceRecord> = Vec::with_capacity(schedule.total_steps);
    let mut max_slack: BTreeMap<u32, f64> = BTreeMap::new();
    let mut hygiene_violations = Vec::new();
    let mut warnings = Vec::new();
    let mut solve_count = 0u64;
    let mut solver_debug: Option<Vec<String>> = debug_solver.then(Vec::new);

    let gripper_dt = schedule.gripper_every as f64 * schedule.dt;

    for k in 0..schedule.total_steps {
        host.world.time = k as f64 * schedule.dt;

        if k % schedule.bt_every == 0 {
            let tick = engine.tick(&mut host)?;
            host.dispatch_pending();
            warnings.extend(tick.warnings.iter().cloned());
            for f in &tick.finalized {
                if !f.missing.is_empty() {
                    hygiene_violations.push(HygieneViolation {
                        tick: tick.tick,
                        node: f.node.clone(),
                        missing: f.missing.clone(),
                    });
                }
            }
            let root = tick.root;
            ticks.push(tick);
            if root != TickStatus::Running {
                outcome = match root {
                    TickStatus::Success => SimOutcome::RootSuccess,
                    _ => SimOutcome::RootFailure,
                };
                completion = host.world.time;
                break;
            }
        }

        if k % schedule.platform_every == 0 {
            host.platform_step();
        }
        if k % schedule.gripper_every == 0 {
            host.gripper_step(gripper_dt);
        }

        let stack = build_stack(&host.registry, host.robot, &host.state, &host.world)?;
        let problem = HqpProblem {
            stack,
            n: host.robot.n(),
            v_max: host.robot.v_max(),
            mu: bundle.config.solver.mu,
            epsilon: bundle.config.solver.epsilon,
        };
        let sol = hqp::solve(&problem)?;
        solve_count += 1;
        for l in &sol.levels {
            let e = max_slack.entry(l.level).or_insert(0.0);
            *e = e.max(l.slack_norm);
        }
        if let Some(dbg) = &mut solver_debug {
            dbg.push(solver_debug_line(k, host.world.time, &sol));
        }

        let twist = host.state.base_twist;
        host.state = integrate_state(host.robot, &host.state, &sol.qd, &twist, schedule.dt)?;
        host.update_attachment();
        host.world.time = (k + 1) as f64 * schedule.dt;

        trace.push(TraceRecord {
            step: k,
            time: host.world.time,
            base: [host.state.base.x, host.state.base.y, host.state.base.theta],
            base_twist: [host.state.base_twist.vx, host.state.base_twist.vy],
            q: host.state.q.iter().copied().collect(),
            ee: host.ee_pose().translation.vector,
            cube: host.world.cube.position,
            attached: host.world.attachment.is_attached(),
            aperture: host.state.gripper_aperture,
            platform_target: match host.platform.target() {
                // Only an unreached goal counts as active; once inside
                // the goal radius the base idles and the column clears.
                Some(t) if !host.platform.at_target(&host.state.base) => {
                    Some(t.waypoint.clone())
                }
                _ => None,
            },
            active_tasks: host.registry.ids(),
            residuals: sol.levels.iter().map(|l| (l.level, l.slack_norm)).collect(),
            solve_status: sol.status,
        });
    }

    Ok(RunArtifacts {
        outcome,
        completion_time: completion,
        trace,
        ticks,
        solve_count,
        max_slack,
        hygiene_violations,
        warnings,
        leftover_tasks: host.registry.ids(),
        leftover_tracked: engine.tracked_tasks().into_iter().collect(),
        solver_debug,
    })
}

fn solver_debug_line(step: usize, time: f64, sol: &hqp::HqpSolution) -> String {
    let levels: Vec<String> = sol
        .levels
        .iter()
        .map(|l| {
            format!(
                r#"{{"level":{},"slack":{:.8e},"iterations":{}}}"#,
                l.level, l.slack_norm, l.iterations
            )
        })
        .collect();
    format!(
        r#"{{"step":{},"time":{:.8e},"status":"{}","levels":[{}]}}"#,
        step,
        time,
        status_str(sol.status),
        levels.join(",")
    )
}

pub fn status_str(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Optimal => "optimal",
        SolveStatus::MaxIterations => "max-iterations",
        SolveStatus::InfeasibleStart => "infeasible-start",
    }
}
