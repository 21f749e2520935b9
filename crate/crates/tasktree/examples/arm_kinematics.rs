//! Forward kinematics and the geometric Jacobian of the shipped 7R
//! arm, cross-checked against central finite differences.
//!
//!     cargo run --example arm_kinematics

use std::path::Path;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tasktree::robot::{forward_kinematics, geometric_jacobian, BasePose, RobotModel};

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
        // Angular velocity from the relative rotation over 2h.
        let dr = (fp.rotation * fm.rotation.inverse()).scaled_axis() / (2.0 * h);
        for r in 0..3 {
            jac[(r, i)] = dp[r];
            jac[(r + 3, i)] = dr[r];
        }
    }
    jac
}

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let text = std::fs::read_to_string(dir.join("robot.toml")).expect("robot file");
    let model = RobotModel::from_toml_str(&text).expect("robot parses");
    println!("{} joints, mount z {:.2}", model.n(), model.mount.translation.z);

    // The home configuration the scenarios start from: a tool-down
    // elbow pose in the middle of the workspace.
    let q_home = DVector::from_vec(vec![
        1.1378, 0.9211, 1.7712, 1.5858, 0.9133, -1.4024, -0.3227,
    ]);
    let base = BasePose::new(0.9, 0.0, 0.0);
    let ee = forward_kinematics(&model, &q_home, &base);
    let down = ee.rotation * Vector3::z();
    println!(
        "home ee at ({:+.3}, {:+.3}, {:+.3}), tool axis ({:+.3}, {:+.3}, {:+.3})",
        ee.translation.x, ee.translation.y, ee.translation.z, down.x, down.y, down.z
    );

    // Jacobian columns are [z_i x (p_ee - p_i); z_i]. Check the whole
    // matrix against central differences at random configurations.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let q = DVector::from_iterator(
            model.n(),
            model
                .joints
                .iter()
                .map(|j| rng.random_range(j.q_min..j.q_max)),
        );
        let b = BasePose::new(
            rng.random_range(-1.0..3.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-3.0..3.0),
        );
        let j = geometric_jacobian(&model, &q, &b);
        let fd = fd_jacobian(&model, &q, &b, 1e-6);
        worst = worst.max((j - fd).amax());
    }
    println!("max |J - J_fd| over 200 random configs: {worst:.2e}");

    // Base placement translates the end effector but leaves the
    // Jacobian untouched: base DOFs are not decision variables.
    let shifted = BasePose::new(base.x + 1.0, base.y - 2.0, base.theta);
    let d = forward_kinematics(&model, &q_home, &shifted).translation.vector
        - ee.translation.vector;
    let dj = (geometric_jacobian(&model, &q_home, &base)
        - geometric_jacobian(&model, &q_home, &shifted))
    .amax();
    println!(
        "base shift (+1, -2): ee moves ({:+.1}, {:+.1}, {:+.1}), |dJ| = {dj:.1e}",
        d.x, d.y, d.z
    );

    // Reach check from the patrol waypoints: each pickup spot is
    // comfortable from exactly one waypoint. Full stretch is useless
    // for tool-down work, so anything near the span does not count.
    let span: f64 = model.joints.iter().map(|j| j.d.abs() + j.a.abs()).sum::<f64>()
        + model.tool.translation.z;
    println!("arm span {span:.2} m");
    let targets = [
        ("cube  (1.0, 0.55)", Vector3::new(1.0, 0.55, 0.735)),
        ("place (1.9, 0.55)", Vector3::new(1.9, 0.55, 0.735)),
    ];
    for (wp, bx) in [("B", 0.9), ("C", 2.1)] {
        let shoulder = BasePose::new(bx, 0.0, 0.0).isometry() * model.mount;
        for (name, t) in &targets {
            let dist = (t - shoulder.translation.vector).norm();
            let ok = if dist <= 0.8 * span { "workable" } else { "at or past full stretch" };
            println!("from {wp}: {name} is {dist:.3} m from the shoulder ({ok})");
        }
    }
}
