//! The concrete task maps used by the scenarios.

use nalgebra::{DMatrix, DVector, UnitQuaternion, Vector3};

use super::{Task, TaskKind};
use crate::robot::{forward_kinematics, geometric_jacobian, RobotModel, RobotState};
use crate::sim::WorldState;

/// Where an end-effector position task points.
#[derive(Debug, Clone)]
pub enum TargetSpec {
    Fixed(Vector3<f64>),
    /// Tracks the cube wherever it currently is, plus a world-frame
    /// offset (hover approaches use a positive z offset).
    Cube { offset: Vector3<f64> },
}

impl TargetSpec {
    pub fn resolve(&self, world: &WorldState) -> Vector3<f64> {
        match self {
            TargetSpec::Fixed(p) => *p,
            TargetSpec::Cube { offset } => world.cube.position + offset,
        }
    }
}

/// Evaluated task: either an error with its Jacobian (to be regulated
/// exponentially) or ready-made inequality rows.
#[derive(Debug, Clone)]
pub enum Linearized {
    Equality { e: DVector<f64>, j: DMatrix<f64> },
    Inequality { a: DMatrix<f64>, b: DVector<f64> },
}

#[derive(Debug, Clone)]
pub enum TaskMap {
    EePosition { target: TargetSpec },
    EeOrientation { target: UnitQuaternion<f64> },
    JointLimits { beta: f64, horizon: f64 },
    Posture { q_ref: DVector<f64> },
}

impl TaskMap {
    pub fn evaluate(&self, model: &RobotModel, state: &RobotState, world: &WorldState) -> Linearized {
        let n = model.n();
        match self {
            TaskMap::EePosition { target } => {
                let ee = forward_kinematics(model, &state.q, &state.base);
                let e = ee.translation.vector - target.resolve(world);
                let j6 = geometric_jacobian(model, &state.q, &state.base);
                Linearized::Equality {
                    e: DVector::from_column_slice(e.as_slice()),
                    j: j6.rows(0, 3).into_owned(),
                }
            }
            TaskMap::EeOrientation { target } => {
                let ee = forward_kinematics(model, &state.q, &state.base);
                // World-frame rotation taking the target orientation to
                // the current one; its log is the axis-angle error.
                let err_rot = ee.rotation * target.inverse();
                let e = err_rot.scaled_axis();
                let j6 = geometric_jacobian(model, &state.q, &state.base);
                Linearized::Equality {
                    e: DVector::from_column_slice(e.as_slice()),
                    j: j6.rows(3, 3).into_owned(),
                }
            }
            TaskMap::JointLimits { beta, horizon } => {
                // Velocity damper: only joints within beta of a bound
                // contribute rows, so the block is often empty.
                let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
                for i in 0..n {
                    let (lo, hi) = (model.joints[i].q_min, model.joints[i].q_max);
                    let q = state.q[i];
                    if hi - q < *beta {
                        let mut a = DVector::zeros(n);
                        a[i] = 1.0;
                        rows.push((a, (hi - q) / horizon));
                    }
                    if q - lo < *beta {
                        let mut a = DVector::zeros(n);
                        a[i] = -1.0;
                        rows.push((a, (q - lo) / horizon));
                    }
                }
                let m = rows.len();
                let mut a = DMatrix::zeros(m, n);
                let mut b = DVector::zeros(m);
                for (k, (row, rhs)) in rows.into_iter().enumerate() {
                    a.set_row(k, &row.transpose());
                    b[k] = rhs;
                }
                Linearized::Inequality { a, b }
            }
            TaskMap::Posture { q_ref } => Linearized::Equality {
                e: &state.q - q_ref,
                j: DMatrix::identity(n, n),
            },
        }
    }
}

pub fn ee_position_task(
    id: &str,
    level: u32,
    gain: f64,
    target: TargetSpec,
    tolerance: Option<f64>,
    timeout: Option<f64>,
) -> Task {
    Task {
        id: id.to_string(),
        level,
        kind: TaskKind::Equality,
        gain,
        tolerance,
        timeout,
        map: TaskMap::EePosition { target },
    }
}

pub fn ee_orientation_task(
    id: &str,
    level: u32,
    gain: f64,
    target: UnitQuaternion<f64>,
    tolerance: Option<f64>,
    timeout: Option<f64>,
) -> Task {
    Task {
        id: id.to_string(),
        level,
        kind: TaskKind::Equality,
        gain,
        tolerance,
        timeout,
        map: TaskMap::EeOrientation { target },
    }
}

/// Hard joint-range protection. No tolerance: the task never blocks a
/// behavior waiting for convergence.
pub fn joint_limit_task(id: &str, level: u32, beta: f64, horizon: f64) -> Task {
    Task {
        id: id.to_string(),
        level,
        kind: TaskKind::Inequality,
        gain: 1.0,
        tolerance: None,
        timeout: None,
        map: TaskMap::JointLimits { beta, horizon },
    }
}

/// Lowest-priority preference pulling the arm toward a reference pose.
pub fn posture_task(id: &str, level: u32, gain: f64, q_ref: DVector<f64>) -> Task {
    Task {
        id: id.to_string(),
        level,
        kind: TaskKind::Equality,
        gain,
        tolerance: None,
        timeout: None,
        map: TaskMap::Posture { q_ref },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robot::BasePose;
    use approx::assert_relative_eq;

    const MODEL: &str = r#"
        [[joint]]
        a = 0.0
        alpha = -1.5707963267948966
        d = 0.3
        theta_offset = 0.0
        q_min = -2.0
        q_max = 2.0
        v_max = 2.5

        [[joint]]
        a = 0.25
        alpha = 0.0
        d = 0.0
        theta_offset = 0.0
        q_min = -2.0
        q_max = 2.0
        v_max = 2.5

        [mount]
        translation = [0.0, 0.0, 0.0]

        [tool]
        translation = [0.0, 0.0, 0.0]
    "#;

    fn fixtures() -> (RobotModel, RobotState, WorldState) {
        let model = RobotModel::from_toml_str(MODEL).unwrap();
        let state = RobotState::home(&model);
        (model, state, WorldState::test_default())
    }

    #[test]
    fn joint_limits_empty_at_center() {
        let (model, state, world) = fixtures();
        let map = TaskMap::JointLimits {
            beta: 0.5,
            horizon: 0.1,
        };
        match map.evaluate(&model, &state, &world) {
            Linearized::Inequality { a, .. } => assert_eq!(a.nrows(), 0),
            _ => panic!("expected inequality"),
        }
    }

    #[test]
    fn joint_limits_damper_rows_near_upper_bound() {
        let (model, mut state, world) = fixtures();
        state.q[0] = 1.9; // 0.1 from the upper bound, inside beta = 0.5
        let map = TaskMap::JointLimits {
            beta: 0.5,
            horizon: 0.1,
        };
        match map.evaluate(&model, &state, &world) {
            Linearized::Inequality { a, b } => {
                assert_eq!(a.nrows(), 1);
                assert_relative_eq!(a[(0, 0)], 1.0);
                // q̇ ≤ (q_max − q)/h = 0.1/0.1
                assert_relative_eq!(b[0], 1.0, epsilon = 1e-12);
            }
            _ => panic!("expected inequality"),
        }
    }

    #[test]
    fn joint_limits_lower_bound_row_sign() {
        let (model, mut state, world) = fixtures();
        state.q[1] = -1.95;
        let map = TaskMap::JointLimits {
            beta: 0.2,
            horizon: 0.1,
        };
        match map.evaluate(&model, &state, &world) {
            Linearized::Inequality { a, b } => {
                assert_eq!(a.nrows(), 1);
                assert_relative_eq!(a[(0, 1)], -1.0);
                assert_relative_eq!(b[0], 0.5, epsilon = 1e-12);
            }
            _ => panic!("expected inequality"),
        }
    }

    #[test]
    fn posture_error_and_identity_jacobian() {
        let (model, mut state, world) = fixtures();
        state.q[0] = 0.3;
        let q_ref = DVector::zeros(2);
        let map = TaskMap::Posture { q_ref };
        match map.evaluate(&model, &state, &world) {
            Linearized::Equality { e, j } => {
                assert_relative_eq!(e[0], 0.3, epsilon = 1e-12);
                assert_relative_eq!(e[1], 0.0, epsilon = 1e-12);
                assert!(j.is_identity(0.0));
            }
            _ => panic!("expected equality"),
        }
    }

    #[test]
    fn orientation_error_zero_when_aligned() {
        let (model, state, world) = fixtures();
        let ee = forward_kinematics(&model, &state.q, &state.base);
        let map = TaskMap::EeOrientation {
            target: ee.rotation,
        };
        match map.evaluate(&model, &state, &world) {
            Linearized::Equality { e, .. } => assert!(e.norm() < 1e-12),
            _ => panic!("expected equality"),
        }
    }

    #[test]
    fn orientation_error_matches_axis_angle() {
        let (model, state, world) = fixtures();
        let ee = forward_kinematics(&model, &state.q, &state.base);
        let twist = UnitQuaternion::from_scaled_axis(Vector3::new(0.0, 0.0, 0.2));
        // Target rotated by −0.2 about z relative to current: error is
        // the world-frame rotation from target to current.
        let target = twist.inverse() * ee.rotation;
        let map = TaskMap::EeOrientation { target };
        match map.evaluate(&model, &state, &world) {
            Linearized::Equality { e, .. } => {
                assert_relative_eq!(e[2], 0.2, epsilon = 1e-10);
                assert!(e.fixed_rows::<2>(0).norm() < 1e-10);
            }
            _ => panic!("expected equality"),
        }
    }

    #[test]
    fn cube_target_tracks_cube() {
        let (model, state, mut world) = fixtures();
        let map = TaskMap::EePosition {
            target: TargetSpec::Cube {
                offset: Vector3::new(0.0, 0.0, 0.1),
            },
        };
        let e0 = match map.evaluate(&model, &state, &world) {
            Linearized::Equality { e, .. } => e,
            _ => panic!(),
        };
        world.cube.position.x += 0.25;
        let e1 = match map.evaluate(&model, &state, &world) {
            Linearized::Equality { e, .. } => e,
            _ => panic!(),
        };
        assert_relative_eq!(e0[0] - e1[0], 0.25, epsilon = 1e-12);
    }

    #[test]
    fn base_motion_changes_position_error_not_jacobian() {
        let (model, state, world) = fixtures();
        let map = TaskMap::EePosition {
            target: TargetSpec::Fixed(Vector3::new(1.0, 0.0, 0.5)),
        };
        let (e0, j0) = match map.evaluate(&model, &state, &world) {
            Linearized::Equality { e, j } => (e, j),
            _ => panic!(),
        };
        let mut moved = state.clone();
        moved.base = BasePose {
            x: 0.4,
            y: -0.2,
            theta: 0.0,
        };
        let (e1, j1) = match map.evaluate(&model, &moved, &world) {
            Linearized::Equality { e, j } => (e, j),
            _ => panic!(),
        };
        assert_relative_eq!(e1[0] - e0[0], 0.4, epsilon = 1e-12);
        assert_relative_eq!(e1[1] - e0[1], -0.2, epsilon = 1e-12);
        assert_relative_eq!((j1 - j0).norm(), 0.0, epsilon = 1e-12);
    }
}
