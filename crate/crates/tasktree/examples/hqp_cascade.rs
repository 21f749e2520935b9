//! Lexicographic solving by hand: stack a few velocity-level
//! constraints, watch strict priority decide the conflicts, and check
//! the equality-only case against nullspace recursion.
//!
//!     cargo run --example hqp_cascade

use nalgebra::{DMatrix, DVector};
use tasktree::hqp::{solve, solve_equality_recursive, HqpProblem};
use tasktree::task::{Relation, Stack, StackLevel, TaskConstraint};

fn eq(level: u32, a: DMatrix<f64>, b: DVector<f64>) -> StackLevel {
    StackLevel {
        level,
        constraints: vec![TaskConstraint {
            a,
            b,
            relation: Relation::Eq,
            level,
        }],
    }
}

fn le(level: u32, a: DMatrix<f64>, b: DVector<f64>) -> StackLevel {
    StackLevel {
        level,
        constraints: vec![TaskConstraint {
            a,
            b,
            relation: Relation::Le,
            level,
        }],
    }
}

fn show(name: &str, p: &HqpProblem) {
    let sol = solve(p).expect("well-formed problem");
    let qd: Vec<String> = sol.qd.iter().map(|v| format!("{v:+.4}")).collect();
    let slacks: Vec<String> = sol
        .levels
        .iter()
        .map(|l| format!("L{}={:.2e}", l.level, l.slack_norm))
        .collect();
    println!("{name:<34} qd = [{}]   slack {}", qd.join(", "), slacks.join("  "));
}

fn main() {
    let n = 2;
    let v_max = DVector::from_element(n, 10.0);
    let base = |stack: Vec<StackLevel>| HqpProblem {
        stack: Stack { levels: stack },
        n,
        v_max: v_max.clone(),
        mu: 0.0,
        epsilon: 1e-6,
    };

    // Two incompatible tasks: the sum wants 1, the two-row task wants
    // qd = (2, 2). Whichever sits on the higher level is met exactly;
    // the other does its best inside what freedom remains, and the
    // answers differ.
    let sum = (DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), DVector::from_vec(vec![1.0]));
    let both = (DMatrix::identity(2, 2), DVector::from_vec(vec![2.0, 2.0]));

    show(
        "sum=1 over qd=(2,2)",
        &base(vec![
            eq(1, sum.0.clone(), sum.1.clone()),
            eq(2, both.0.clone(), both.1.clone()),
        ]),
    );
    show(
        "qd=(2,2) over sum=1",
        &base(vec![
            eq(1, both.0.clone(), both.1.clone()),
            eq(2, sum.0.clone(), sum.1.clone()),
        ]),
    );

    // A higher-priority inequality caps what the tasks below may use.
    show(
        "q0<=0.2 over sum=1 over qd=(2,2)",
        &base(vec![
            le(1, DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), DVector::from_vec(vec![0.2])),
            eq(2, sum.0.clone(), sum.1.clone()),
            eq(3, both.0.clone(), both.1.clone()),
        ]),
    );

    // Hard velocity bounds apply at every level, before any task.
    let tight = HqpProblem {
        stack: Stack {
            levels: vec![eq(1, both.0.clone(), both.1.clone())],
        },
        n,
        v_max: DVector::from_element(n, 0.3),
        mu: 0.0,
        epsilon: 1e-6,
    };
    show("qd=(2,2) under |qd|<=0.3", &tight);

    // With equalities only, the cascade agrees with plain nullspace
    // recursion to solver precision.
    let levels = vec![sum.clone(), both.clone()];
    let cascade = solve(&base(vec![
        eq(1, sum.0.clone(), sum.1.clone()),
        eq(2, both.0.clone(), both.1.clone()),
    ]))
    .unwrap();
    let recursive = solve_equality_recursive(&levels, n, 0.0);
    println!(
        "\ncascade vs nullspace recursion: |dqd| = {:.2e}",
        (&cascade.qd - &recursive).norm()
    );

    // Redundancy resolution: one row, two unknowns, and the minimum
    // norm closing stage picks the symmetric answer regardless of the
    // epsilon weight.
    for eps in [1e-9, 1e-6, 1e-3] {
        let mut p = base(vec![eq(1, sum.0.clone(), sum.1.clone())]);
        p.epsilon = eps;
        let sol = solve(&p).unwrap();
        println!(
            "min-norm fill-in, epsilon {:.0e}: qd = [{:+.6}, {:+.6}]",
            eps, sol.qd[0], sol.qd[1]
        );
    }
}
