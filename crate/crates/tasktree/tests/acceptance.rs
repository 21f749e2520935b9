//! Acceptance gates, one test per criterion. Each gate checks the
//! library against an oracle written from the definitions, not against
//! the implementation, and prints one PASS line with the numbers it
//! measured (visible with --nocapture).

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tasktree::bt::{BtNode, Engine, EngineError, LeafHost, NodeKind, TickStatus};
use tasktree::dsl;
use tasktree::hqp::{solve, solve_qp_level, HqpProblem, QpStatus, SolveStatus};
use tasktree::robot::{forward_kinematics, geometric_jacobian, BasePose, RobotModel};
use tasktree::scenario::{self, Bundle};
use tasktree::sim::{run_scenario, RunArtifacts, SimOutcome};
use tasktree::task::{Relation, Stack, StackLevel, TaskConstraint};

fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name)
}

struct SharedRun {
    bundle: Bundle,
    artifacts: RunArtifacts,
    wall: Duration,
}

fn shared_run(cell: &'static OnceLock<SharedRun>, file: &str) -> &'static SharedRun {
    cell.get_or_init(|| {
        let bundle = scenario::load(&scenario_path(file)).expect("scenario loads");
        let t0 = Instant::now();
        let artifacts = run_scenario(&bundle, false).expect("run completes");
        SharedRun {
            bundle,
            artifacts,
            wall: t0.elapsed(),
        }
    })
}

fn pick_run() -> &'static SharedRun {
    static CELL: OnceLock<SharedRun> = OnceLock::new();
    shared_run(&CELL, "pick_and_place.toml")
}

fn patrol_run() -> &'static SharedRun {
    static CELL: OnceLock<SharedRun> = OnceLock::new();
    shared_run(&CELL, "patrol_only.toml")
}

// ---------------------------------------------------------------- 1

/// Composite shapes for the exhaustive semantic sweep.
#[derive(Clone, Copy, PartialEq)]
enum CompKind {
    Seq,
    Fb,
    Par(usize),
}

#[derive(Clone)]
enum Shape {
    Leaf,
    Comp(CompKind, Vec<Shape>),
}

impl Shape {
    fn leaves(&self) -> usize {
        match self {
            Shape::Leaf => 1,
            Shape::Comp(_, ch) => ch.iter().map(Shape::leaves).sum(),
        }
    }
}

/// Truth-table combination rules, straight from the definitions.
fn combine(kind: CompKind, rs: &[TickStatus]) -> TickStatus {
    match kind {
        CompKind::Seq => {
            for r in rs {
                if *r != TickStatus::Success {
                    return *r;
                }
            }
            TickStatus::Success
        }
        CompKind::Fb => {
            for r in rs {
                if *r != TickStatus::Failure {
                    return *r;
                }
            }
            TickStatus::Failure
        }
        CompKind::Par(m) => {
            let s = rs.iter().filter(|r| **r == TickStatus::Success).count();
            let f = rs.iter().filter(|r| **r == TickStatus::Failure).count();
            if s >= m {
                TickStatus::Success
            } else if f > rs.len() - m {
                TickStatus::Failure
            } else {
                TickStatus::Running
            }
        }
    }
}

fn status_oracle(shape: &Shape, a: &[TickStatus], cursor: &mut usize) -> TickStatus {
    match shape {
        Shape::Leaf => {
            let s = a[*cursor];
            *cursor += 1;
            s
        }
        Shape::Comp(kind, children) => {
            let rs: Vec<TickStatus> = children
                .iter()
                .map(|c| status_oracle(c, a, cursor))
                .collect();
            combine(*kind, &rs)
        }
    }
}

fn build_node(shape: &Shape, next_id: &mut usize, next_leaf: &mut usize) -> BtNode {
    let id = format!("n{}", *next_id);
    *next_id += 1;
    match shape {
        Shape::Leaf => {
            let cmd = format!("l{}", *next_leaf);
            *next_leaf += 1;
            BtNode::leaf(&id, &cmd, NodeKind::Action { command: cmd.clone() })
        }
        Shape::Comp(kind, children) => {
            let ch: Vec<BtNode> = children
                .iter()
                .map(|c| build_node(c, next_id, next_leaf))
                .collect();
            let k = match kind {
                CompKind::Seq => NodeKind::Sequence,
                CompKind::Fb => NodeKind::Fallback,
                CompKind::Par(m) => NodeKind::Parallel {
                    success_threshold: *m,
                },
            };
            BtNode::composite(&id, "", k, ch)
        }
    }
}

/// Leaves forced to scripted statuses, indexed by their command name.
struct ForcedHost(Vec<TickStatus>);

impl LeafHost for ForcedHost {
    fn now(&self) -> f64 {
        0.0
    }
    fn eval_condition(&mut self, _p: &str) -> Result<bool, EngineError> {
        unreachable!("sweep uses action leaves only")
    }
    fn tick_action(
        &mut self,
        _node: &str,
        command: &str,
        _activation: bool,
    ) -> Result<TickStatus, EngineError> {
        let idx: usize = command[1..].parse().unwrap();
        Ok(self.0[idx])
    }
    fn tick_sot_action(
        &mut self,
        node: &str,
        task: &str,
        activation: bool,
    ) -> Result<TickStatus, EngineError> {
        self.tick_action(node, task, activation)
    }
    fn remove_task(&mut self, _task: &str) -> bool {
        true
    }
}

#[test]
fn c01_bt_semantic_oracle() {
    let t0 = Instant::now();

    // Every slot under the root is a leaf or a one-deep composite;
    // structures are capped at 5 leaves to keep the sweep exhaustive
    // over assignments yet inside the time budget.
    let mut slot_options = vec![Shape::Leaf];
    for arity in [2usize, 3] {
        let leaves = vec![Shape::Leaf; arity];
        slot_options.push(Shape::Comp(CompKind::Seq, leaves.clone()));
        slot_options.push(Shape::Comp(CompKind::Fb, leaves.clone()));
        for m in 1..=arity {
            slot_options.push(Shape::Comp(CompKind::Par(m), leaves.clone()));
        }
    }

    let statuses = [TickStatus::Success, TickStatus::Running, TickStatus::Failure];
    let mut checked = 0u64;
    let mut structures = 0u64;

    for r in 1..=3usize {
        let mut combo = vec![0usize; r];
        loop {
            let children: Vec<Shape> = combo.iter().map(|&i| slot_options[i].clone()).collect();
            let leaves: usize = children.iter().map(Shape::leaves).sum();
            if leaves <= 5 {
                let mut root_kinds = vec![CompKind::Seq, CompKind::Fb];
                root_kinds.extend((1..=r).map(CompKind::Par));
                for rk in root_kinds {
                    let shape = Shape::Comp(rk, children.clone());
                    let (mut ni, mut nl) = (0, 0);
                    let root = build_node(&shape, &mut ni, &mut nl);
                    let mut engine = Engine::new(root).unwrap();
                    structures += 1;

                    for code in 0..3usize.pow(leaves as u32) {
                        let mut a = Vec::with_capacity(leaves);
                        let mut c = code;
                        for _ in 0..leaves {
                            a.push(statuses[c % 3]);
                            c /= 3;
                        }
                        let got = engine.tick(&mut ForcedHost(a.clone())).unwrap().root;
                        let mut cur = 0;
                        let want = status_oracle(&shape, &a, &mut cur);
                        assert_eq!(got, want, "assignment {:?}", a);
                        checked += 1;
                    }
                }
            }
            // Odometer over slot options.
            let mut i = 0;
            loop {
                if i == r {
                    break;
                }
                combo[i] += 1;
                if combo[i] < slot_options.len() {
                    break;
                }
                combo[i] = 0;
                i += 1;
            }
            if i == r {
                break;
            }
        }
    }

    let dt = t0.elapsed();
    assert!(dt < Duration::from_secs(1), "sweep took {:?}", dt);
    println!(
        "PASS bt semantic oracle: {} assignments over {} structures agree, {:?}",
        checked, structures, dt
    );
}

// ---------------------------------------------------------------- 2

fn pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = if smax > 0.0 { 1e-10 * smax } else { 1.0 };
    svd.pseudo_inverse(eps).expect("pseudo inverse")
}

/// Classic prioritized-velocity recursion, written out from the
/// formula q_k = q_{k-1} + (J_k N_{k-1})^+ (v_k - J_k q_{k-1}).
fn recursion_oracle(levels: &[(DMatrix<f64>, DVector<f64>)], n: usize) -> DVector<f64> {
    let mut qd = DVector::zeros(n);
    let mut null = DMatrix::identity(n, n);
    for (j, v) in levels {
        let jn = j * &null;
        let pi = pinv(&jn);
        qd = &qd + &pi * (v - j * &qd);
        null -= &pi * &jn;
    }
    qd
}

fn objective(h: &DMatrix<f64>, f: &DVector<f64>, x: &DVector<f64>) -> f64 {
    0.5 * (x.transpose() * h * x)[(0, 0)] + f.dot(x)
}

/// Reject stacks where some stage's J·N is close to rank-deficient:
/// there the recursion's pseudo-inverse cutoff decides the answer and
/// the comparison would measure the cutoff, not the solver.
fn stack_is_benign(levels: &[(DMatrix<f64>, DVector<f64>)], n: usize) -> bool {
    let mut null = DMatrix::identity(n, n);
    for (j, _) in levels {
        let jn = j * &null;
        let svd = jn.clone().svd(false, false);
        let scale = svd.singular_values.max().max(1.0);
        if svd
            .singular_values
            .iter()
            .any(|s| *s > 1e-10 * scale && *s < 1e-3 * scale)
        {
            return false;
        }
        let pi = pinv(&jn);
        null -= &pi * &jn;
    }
    true
}

/// Exhaustive active-set oracle: try every subset of inequality rows
/// as the active set, solve the KKT system by LU, keep the best
/// candidate that is primal feasible with nonnegative multipliers.
fn exhaustive_qp_oracle(
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    a_in: &DMatrix<f64>,
    b_in: &DVector<f64>,
) -> f64 {
    let n = h.ncols();
    let m = a_in.nrows();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << m) {
        let rows: Vec<usize> = (0..m).filter(|i| mask >> i & 1 == 1).collect();
        if rows.len() > n {
            continue;
        }
        let k = n + rows.len();
        let mut kkt = DMatrix::zeros(k, k);
        let mut rhs = DVector::zeros(k);
        kkt.view_mut((0, 0), (n, n)).copy_from(h);
        rhs.rows_mut(0, n).copy_from(&(-f));
        for (s, &r) in rows.iter().enumerate() {
            for c in 0..n {
                kkt[(c, n + s)] = a_in[(r, c)];
                kkt[(n + s, c)] = a_in[(r, c)];
            }
            rhs[n + s] = b_in[r];
        }
        let Some(sol) = kkt.full_piv_lu().solve(&rhs) else {
            continue;
        };
        let x = sol.rows(0, n).into_owned();
        let lambda = sol.rows(n, rows.len());
        if lambda.iter().any(|l| *l < -1e-7) {
            continue;
        }
        if (a_in * &x - b_in).iter().any(|v| *v > 1e-7) {
            continue;
        }
        best = best.min(objective(h, f, &x));
    }
    best
}

fn eq_levels_problem(levels: &[(DMatrix<f64>, DVector<f64>)], n: usize) -> HqpProblem {
    let stack_levels = levels
        .iter()
        .enumerate()
        .map(|(i, (a, b))| StackLevel {
            level: i as u32 + 1,
            constraints: vec![TaskConstraint {
                a: a.clone(),
                b: b.clone(),
                relation: Relation::Eq,
                level: i as u32 + 1,
            }],
        })
        .collect();
    HqpProblem {
        stack: Stack {
            levels: stack_levels,
        },
        n,
        v_max: DVector::from_element(n, 1e6),
        mu: 0.0,
        epsilon: 1e-6,
    }
}

#[test]
fn c02_lexicographic_correctness() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(42);

    // Equality-only stacks against the nullspace recursion.
    let mut worst_gap = 0.0f64;
    let mut accepted = 0;
    let mut draws = 0;
    while accepted < 50 {
        draws += 1;
        assert!(draws < 2000, "generator starved");
        let n = rng.random_range(2..=5);
        let n_levels = rng.random_range(1..=3);
        let levels: Vec<(DMatrix<f64>, DVector<f64>)> = (0..n_levels)
            .map(|_| {
                let rows = rng.random_range(1..=2);
                let j = DMatrix::from_fn(rows, n, |_, _| rng.random_range(-1.0..1.0));
                let v = DVector::from_fn(rows, |_, _| rng.random_range(-1.0..1.0));
                (j, v)
            })
            .collect();
        if !stack_is_benign(&levels, n) {
            continue;
        }
        let oracle = recursion_oracle(&levels, n);
        if oracle.norm() > 30.0 {
            continue;
        }
        accepted += 1;
        let sol = solve(&eq_levels_problem(&levels, n)).expect("solvable");
        assert_eq!(sol.status, SolveStatus::Optimal);
        let gap = (&sol.qd - &oracle).norm();
        worst_gap = worst_gap.max(gap);
        assert!(gap <= 1e-8, "cascade vs recursion gap {}", gap);
    }

    // Random inequality QPs against exhaustive active-set enumeration.
    let mut worst_obj = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(1..=6);
        let m = rng.random_range(0..=8);
        let seed = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let h = &seed * seed.transpose() + DMatrix::identity(n, n) * rng.random_range(0.5..2.0);
        let f = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
        let a_in = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
        let x_feas = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let b_in = &a_in * &x_feas + DVector::from_fn(m, |_, _| rng.random_range(0.1..1.5));

        let empty = (DMatrix::zeros(0, n), DVector::zeros(0));
        let sol = solve_qp_level(&h, &f, &empty.0, &empty.1, &a_in, &b_in, &[], Some(&x_feas));
        assert_eq!(sol.status, QpStatus::Optimal);
        if m > 0 {
            let viol = (&a_in * &sol.x - &b_in).max();
            assert!(viol <= 1e-8, "solution violates constraints by {}", viol);
        }

        let best = exhaustive_qp_oracle(&h, &f, &a_in, &b_in);
        assert!(best.is_finite());
        let diff = (objective(&h, &f, &sol.x) - best).abs();
        worst_obj = worst_obj.max(diff);
        assert!(diff <= 1e-8, "objective off the oracle by {}", diff);
    }

    let dt = t0.elapsed();
    assert!(dt < Duration::from_secs(10), "took {:?}", dt);
    println!(
        "PASS lexicographic correctness: 50 stacks (worst gap {:.2e}), 100 QPs (worst objective gap {:.2e}), {:?}",
        worst_gap, worst_obj, dt
    );
}

// ---------------------------------------------------------------- 3

#[test]
fn c03_priority_dominance() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst1 = 0.0f64;
    let mut worst2 = 0.0f64;
    for _ in 0..20 {
        let n = rng.random_range(2..=5);
        let mut a = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        a /= a.norm();
        let t1: f64 = rng.random_range(-1.0..1.0);
        let gap: f64 = rng.random_range(0.1..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };

        let row = DMatrix::from_row_slice(1, n, a.as_slice());
        let levels = vec![
            (row.clone(), DVector::from_vec(vec![t1])),
            (row.clone(), DVector::from_vec(vec![t1 + gap])),
        ];
        let sol = solve(&eq_levels_problem(&levels, n)).expect("solvable");

        // Residuals recomputed from the returned velocity, not from
        // the solver's own report.
        let r1 = (a.dot(&sol.qd) - t1).abs();
        let r2 = (a.dot(&sol.qd) - (t1 + gap)).abs();
        worst1 = worst1.max(r1);
        worst2 = worst2.max((r2 - gap.abs()).abs());
        assert!(r1 <= 1e-9, "level 1 residual {}", r1);
        assert!((r2 - gap.abs()).abs() <= 1e-9, "level 2 residual {} for gap {}", r2, gap);
    }
    println!(
        "PASS priority dominance: 20 gaps, level-1 residual <= {:.2e}, level-2 off target gap by <= {:.2e}",
        worst1, worst2
    );
}

// ---------------------------------------------------------------- 4

fn fd_jacobian(model: &RobotModel, q: &DVector<f64>, base: &BasePose, h: f64) -> DMatrix<f64> {
    let n = model.n();
    let mut jac = DMatrix::zeros(6, n);
    for i in 0..n {
        let mut qp = q.clone();
        let mut qm = q.clone();
        qp[i] += h;
        qm[i] -= h;
        let fp = forward_kinematics(model, &qp, base);
        let fm = forward_kinematics(model, &qm, base);
        let dp = (fp.translation.vector - fm.translation.vector) / (2.0 * h);
        let dr = (fp.rotation * fm.rotation.inverse()).scaled_axis() / (2.0 * h);
        for r in 0..3 {
            jac[(r, i)] = dp[r];
            jac[(r + 3, i)] = dr[r];
        }
    }
    jac
}

#[test]
fn c04_jacobian_finite_difference() {
    let text = std::fs::read_to_string(scenario_path("robot.toml")).expect("robot file");
    let model = RobotModel::from_toml_str(&text).expect("robot parses");
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let q = DVector::from_iterator(
            model.n(),
            model.joints.iter().map(|j| rng.random_range(j.q_min..j.q_max)),
        );
        let base = BasePose::new(
            rng.random_range(-1.0..3.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-3.0..3.0),
        );
        let diff = (geometric_jacobian(&model, &q, &base) - fd_jacobian(&model, &q, &base, 1e-6))
            .amax();
        worst = worst.max(diff);
        assert!(diff <= 1e-5, "Jacobian off finite differences by {}", diff);
    }
    println!("PASS jacobian finite difference: 100 configs, worst entry {:.2e}", worst);
}

// ---------------------------------------------------------------- 5

/// Indices of records where the commanded twist reverses direction.
fn reversal_indices(artifacts: &RunArtifacts) -> Vec<usize> {
    let mut out = Vec::new();
    let mut last: Option<[f64; 2]> = None;
    for (i, r) in artifacts.trace.iter().enumerate() {
        let v = r.base_twist;
        if v[0] == 0.0 && v[1] == 0.0 {
            continue;
        }
        if let Some(p) = last {
            if p[0] * v[0] + p[1] * v[1] < 0.0 {
                out.push(i);
            }
        }
        last = Some(v);
    }
    out
}

#[test]
fn c05_scenario_reproduction() {
    let run = pick_run();
    let art = &run.artifacts;
    assert_eq!(art.outcome, SimOutcome::RootSuccess, "outcome {:?}", art.outcome);
    assert!(run.wall < Duration::from_secs(60), "wall time {:?}", run.wall);

    let place = Vector2::new(
        run.bundle.config.place.center[0],
        run.bundle.config.place.center[1],
    );
    let last = art.trace.last().expect("trace");
    let final_xy = Vector2::new(last.cube.x, last.cube.y);
    let miss = (final_xy - place).norm();
    assert!(
        miss <= run.bundle.config.place.radius,
        "cube {} m from place center",
        miss
    );

    // Commanded release pose: where the controller put the cube on the
    // last step it was still held.
    let held = art
        .trace
        .iter()
        .rposition(|r| r.attached)
        .expect("cube was held at some point");
    let release_xy = Vector2::new(art.trace[held].cube.x, art.trace[held].cube.y);
    let drift = (final_xy - release_xy).norm();
    assert!(drift <= 5e-3, "cube drifted {} m after release", drift);

    let t_detach = art.trace[held + 1].time;
    let reversals_before = reversal_indices(art)
        .iter()
        .filter(|&&i| art.trace[i].time <= t_detach)
        .count();
    assert!(
        reversals_before >= 2,
        "only {} reversals before release",
        reversals_before
    );

    println!(
        "PASS scenario reproduction: root-success at t={:.2}s, cube {:.1} mm off center, drift {:.1} mm, {} reversals before release, wall {:?}",
        art.completion_time,
        miss * 1e3,
        drift * 1e3,
        reversals_before,
        run.wall
    );
}

// ---------------------------------------------------------------- 6

#[test]
fn c06_task_removal_hygiene() {
    let run = pick_run();
    let art = &run.artifacts;
    assert!(art.hygiene_violations.is_empty(), "{:?}", art.hygiene_violations);

    // Re-derive the check from the tick and trace streams: whatever a
    // finalized scope removed must be gone from the active set sampled
    // at that tick's step.
    let bt_every = (run.bundle.config.schedule.sot_hz / run.bundle.config.schedule.bt_hz) as usize;
    let mut finalized_events = 0;
    for t in &art.ticks {
        let step = (t.tick as usize - 1) * bt_every;
        for f in &t.finalized {
            finalized_events += 1;
            assert!(f.missing.is_empty(), "scope '{}' missing {:?}", f.node, f.missing);
            if let Some(rec) = art.trace.get(step) {
                for id in &f.removed {
                    assert!(
                        !rec.active_tasks.contains(id),
                        "task '{}' still active after scope '{}' finalized at t={}",
                        id,
                        f.node,
                        rec.time
                    );
                }
            }
        }
    }
    assert!(finalized_events >= 5, "only {} scope finalizations", finalized_events);
    assert!(art.leftover_tasks.is_empty(), "leftover {:?}", art.leftover_tasks);
    assert!(art.leftover_tracked.is_empty(), "tracked {:?}", art.leftover_tracked);
    println!(
        "PASS task removal hygiene: {} scope finalizations, empty registry at the end",
        finalized_events
    );
}

// ---------------------------------------------------------------- 7

#[test]
fn c07_constant_speed_platform() {
    let mut checked = 0usize;
    for run in [pick_run(), patrol_run()] {
        let v0 = run.bundle.config.platform.speed;
        for r in &run.artifacts.trace {
            if r.platform_target.is_some() {
                let v = (r.base_twist[0].powi(2) + r.base_twist[1].powi(2)).sqrt();
                assert!(
                    (v - v0).abs() <= 1e-12,
                    "speed {} at t={} with target {:?}",
                    v,
                    r.time,
                    r.platform_target
                );
                checked += 1;
            }
        }
    }
    assert!(checked > 1000, "only {} records had an active target", checked);
    println!("PASS constant speed platform: {} targeted records at exactly v0", checked);
}

// ---------------------------------------------------------------- 8

#[test]
fn c08_frequency_separation() {
    // Whole patrol budget: exact integer ratio.
    let patrol = patrol_run();
    let ticks = patrol.artifacts.ticks.len() as u64;
    let solves = patrol.artifacts.solve_count;
    let ratio = (patrol.bundle.config.schedule.sot_hz / patrol.bundle.config.schedule.bt_hz) as u64;
    assert_eq!(solves, ticks * ratio, "{} solves vs {} ticks", solves, ticks);

    // Every whole-second prefix of the longer mission run. Ticks land
    // on fixed steps, so the horizon counts follow from the schedule.
    let pick = pick_run();
    let sot_hz = pick.bundle.config.schedule.sot_hz;
    let bt_hz = pick.bundle.config.schedule.bt_hz;
    let whole_secs = pick.artifacts.completion_time.floor() as usize;
    for k in 1..=whole_secs {
        let solves_k = pick
            .artifacts
            .trace
            .iter()
            .filter(|r| r.time <= k as f64 + 1e-9)
            .count();
        assert_eq!(solves_k, k * sot_hz as usize, "solves in first {k} s");
        let ticks_k = pick
            .artifacts
            .ticks
            .iter()
            .filter(|t| ((t.tick as usize - 1) * (sot_hz / bt_hz) as usize) < k * sot_hz as usize)
            .count();
        assert_eq!(ticks_k, k * bt_hz as usize, "ticks in first {k} s");
    }

    // Shortened budgets keep the ratio exact too.
    for secs in [1.0, 3.0] {
        let bundle = scenario::load_with(&scenario_path("patrol_only.toml"), |c| {
            c.schedule.timeout = secs;
        })
        .expect("scenario loads");
        let art = run_scenario(&bundle, false).expect("run completes");
        assert_eq!(art.solve_count, (secs * 200.0) as u64);
        assert_eq!(art.ticks.len(), (secs * 10.0) as usize);
    }

    println!(
        "PASS frequency separation: {}.. s horizons all at exactly {} solves per tick",
        1, ratio
    );
}

// ---------------------------------------------------------------- 9

#[test]
fn c09_determinism() {
    let bin = env!("CARGO_BIN_EXE_tasktree");
    let scenario = scenario_path("pick_and_place.toml");
    let dirs = [
        tempfile::tempdir().expect("tempdir"),
        tempfile::tempdir().expect("tempdir"),
    ];
    for d in &dirs {
        let out = std::process::Command::new(bin)
            .args(["run", "--scenario"])
            .arg(&scenario)
            .arg("--out")
            .arg(d.path())
            .output()
            .expect("binary runs");
        assert!(
            out.status.success(),
            "run failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let mut bytes = 0usize;
    for file in ["trace.csv", "ticks.log", "summary.toml"] {
        let a = std::fs::read(dirs[0].path().join(file)).expect("artifact");
        let b = std::fs::read(dirs[1].path().join(file)).expect("artifact");
        assert_eq!(a, b, "{} differs between runs", file);
        bytes += a.len();
    }
    println!("PASS determinism: two runs, {} artifact bytes identical", bytes);
}

// ---------------------------------------------------------------- 10

fn gen_label(rng: &mut ChaCha8Rng) -> String {
    const POOL: &[&str] = &[
        "At C",
        "Move to B",
        "Reach Cube",
        "x",
        "Grip \"tight\"",
        "back\\slash",
        "weird )( {} chars",
        "123 go",
        "a_b-c.d",
        "tabs\tinside",
    ];
    POOL[rng.random_range(0..POOL.len())].to_string()
}

fn gen_tree(rng: &mut ChaCha8Rng, depth: usize, next_id: &mut usize) -> BtNode {
    let id = format!("g{}", *next_id);
    *next_id += 1;
    let leaf = depth == 0 || rng.random_bool(0.35);
    if leaf {
        let label = gen_label(rng);
        let kind = match rng.random_range(0..3) {
            0 => NodeKind::Condition { predicate: label.clone() },
            1 => NodeKind::Action { command: label.clone() },
            _ => NodeKind::SotAction { task: label.clone() },
        };
        return BtNode::leaf(&id, &label, kind);
    }
    if rng.random_bool(0.15) {
        let child = gen_tree(rng, depth - 1, next_id);
        return BtNode::composite(&id, "", NodeKind::Repeat, vec![child]);
    }
    let arity = rng.random_range(1..=4);
    let children: Vec<BtNode> = (0..arity).map(|_| gen_tree(rng, depth - 1, next_id)).collect();
    let kind = match rng.random_range(0..3) {
        0 => NodeKind::Sequence,
        1 => NodeKind::Fallback,
        _ => NodeKind::Parallel {
            success_threshold: rng.random_range(1..=arity),
        },
    };
    let label = if rng.random_bool(0.4) { gen_label(rng) } else { String::new() };
    let node = BtNode::composite(&id, &label, kind, children);
    if rng.random_bool(0.3) {
        node.scoped()
    } else {
        node
    }
}

/// Identity up to node ids, which the parser derives from labels.
fn structurally_equal(a: &BtNode, b: &BtNode) -> bool {
    a.kind == b.kind
        && a.label == b.label
        && a.scoped == b.scoped
        && a.children.len() == b.children.len()
        && a.children.iter().zip(&b.children).all(|(x, y)| structurally_equal(x, y))
}

#[test]
fn c10_parser_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut nodes_total = 0usize;
    for case in 0..100 {
        let mut next_id = 0;
        let tree = gen_tree(&mut rng, 3, &mut next_id);
        nodes_total += tree.node_ids().len();
        let text = dsl::print(&tree);
        let reparsed = dsl::parse(&text)
            .unwrap_or_else(|d| panic!("case {}: {:?}\n{}", case, d, text));
        assert!(
            structurally_equal(&tree, &reparsed.root),
            "case {} not identical:\n{}",
            case,
            text
        );
        // The canonical form is a fixed point.
        assert_eq!(text, dsl::print(&reparsed.root));
    }

    // The shipped mission tree round-trips exactly, ids included.
    let src = std::fs::read_to_string(scenario_path("pick_and_place.bt")).expect("tree file");
    let first = dsl::parse(&src).expect("shipped tree parses");
    let printed = dsl::print(&first.root);
    let second = dsl::parse(&printed).expect("canonical form parses");
    assert_eq!(first.root, second.root);

    println!(
        "PASS parser round trip: 100 generated trees ({} nodes) plus the shipped tree",
        nodes_total
    );
}

// ----------------------------------------------------------------

/// The tree file names used by the leaves must exist in the catalogs;
/// guard that the shipped bundles stay self-consistent.
#[test]
fn shipped_bundles_validate() {
    for name in ["pick_and_place.toml", "patrol_only.toml"] {
        let bundle = scenario::load(&scenario_path(name)).expect("bundle loads");
        let predicates: BTreeSet<String> = bundle.config.predicates.keys().cloned().collect();
        let commands: BTreeSet<String> = bundle.config.commands.keys().cloned().collect();
        let tasks: BTreeSet<String> = bundle.config.tasks.keys().cloned().collect();
        let diags = dsl::validate_tree(&bundle.tree, &predicates, &commands, &tasks);
        assert!(diags.is_empty(), "{}: {:?}", name, diags);
    }
}
