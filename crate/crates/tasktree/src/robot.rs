//! Kinematic model of the mobile manipulator: a planar base composed
//! with a serial revolute-joint arm described by DH parameters.

use nalgebra::{DMatrix, DVector, Isometry3, Translation3, UnitQuaternion, Vector3};
use serde::Deserialize;

pub type Pose = Isometry3<f64>;

#[derive(Debug, Clone, Deserialize)]
pub struct DhJoint {
    pub a: f64,
    pub alpha: f64,
    pub d: f64,
    pub theta_offset: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub v_max: f64,
}

#[derive(Debug, Clone)]
pub struct RobotModel {
    pub joints: Vec<DhJoint>,
    /// Base frame to arm root.
    pub mount: Pose,
    /// Last link frame to end-effector.
    pub tool: Pose,
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("robot description: {0}")]
    Parse(String),
    #[error("robot description: {0}")]
    Invalid(String),
    #[error("non-finite command passed to integrate_state")]
    NonFiniteCommand,
}

/// Planar base pose (x, y, heading).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasePose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl BasePose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        BasePose { x, y, theta }
    }

    pub fn isometry(&self) -> Pose {
        Isometry3::from_parts(
            Translation3::new(self.x, self.y, 0.0),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), self.theta),
        )
    }
}

/// World-frame planar twist command for the base.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BaseTwist {
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
}

impl BaseTwist {
    pub fn zero() -> Self {
        BaseTwist::default()
    }
}

#[derive(Debug, Clone)]
pub struct RobotState {
    pub q: DVector<f64>,
    pub qd: DVector<f64>,
    pub base: BasePose,
    pub base_twist: BaseTwist,
    /// Gripper aperture fraction: 0 = closed, 1 = open.
    pub gripper_aperture: f64,
}

impl RobotState {
    pub fn home(model: &RobotModel) -> Self {
        let n = model.n();
        RobotState {
            q: DVector::zeros(n),
            qd: DVector::zeros(n),
            base: BasePose::new(0.0, 0.0, 0.0),
            base_twist: BaseTwist::default(),
            gripper_aperture: 1.0,
        }
    }
}

impl RobotModel {
    pub fn n(&self) -> usize {
        self.joints.len()
    }

    pub fn q_min(&self) -> DVector<f64> {
        DVector::from_iterator(self.n(), self.joints.iter().map(|j| j.q_min))
    }

    pub fn q_max(&self) -> DVector<f64> {
        DVector::from_iterator(self.n(), self.joints.iter().map(|j| j.q_max))
    }

    pub fn v_max(&self) -> DVector<f64> {
        DVector::from_iterator(self.n(), self.joints.iter().map(|j| j.v_max))
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ModelError> {
        let raw: RawModel = toml::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
        let model = RobotModel {
            joints: raw.joint,
            mount: raw.mount.isometry(),
            tool: raw.tool.isometry(),
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<(), ModelError> {
        if self.joints.is_empty() {
            return Err(ModelError::Invalid("at least one joint required".into()));
        }
        for (i, j) in self.joints.iter().enumerate() {
            if !(j.q_min < j.q_max) {
                return Err(ModelError::Invalid(format!(
                    "joint {i}: q_min must be below q_max"
                )));
            }
            if !(j.v_max > 0.0) {
                return Err(ModelError::Invalid(format!("joint {i}: v_max must be > 0")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
struct RawModel {
    joint: Vec<DhJoint>,
    mount: RawTransform,
    tool: RawTransform,
}

#[derive(Debug, Deserialize)]
struct RawTransform {
    translation: [f64; 3],
    #[serde(default)]
    rpy: [f64; 3],
}

impl RawTransform {
    fn isometry(&self) -> Pose {
        Isometry3::from_parts(
            Translation3::new(self.translation[0], self.translation[1], self.translation[2]),
            UnitQuaternion::from_euler_angles(self.rpy[0], self.rpy[1], self.rpy[2]),
        )
    }
}

/// One DH step: RotZ(theta + offset) * TransZ(d) * TransX(a) * RotX(alpha).
fn dh_transform(j: &DhJoint, q: f64) -> Pose {
    let rot_z = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), q + j.theta_offset);
    let rot_x = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), j.alpha);
    Isometry3::from_parts(Translation3::new(0.0, 0.0, j.d), rot_z)
        * Isometry3::from_parts(Translation3::new(j.a, 0.0, 0.0), rot_x)
}

/// Cumulative world-frame transforms: entry i is the frame joint i+1
/// rotates about (entry 0 is base * mount), entry n is the ee frame.
fn chain_frames(model: &RobotModel, q: &DVector<f64>, base: &BasePose) -> Vec<Pose> {
    let mut frames = Vec::with_capacity(model.n() + 1);
    let mut t = base.isometry() * model.mount;
    frames.push(t);
    for (j, &qi) in model.joints.iter().zip(q.iter()) {
        t *= dh_transform(j, qi);
        frames.push(t);
    }
    let last = frames.last_mut().unwrap();
    *last *= model.tool;
    frames
}

/// World-frame end-effector pose: base ∘ mount ∘ DH(q) ∘ tool.
pub fn forward_kinematics(model: &RobotModel, q: &DVector<f64>, base: &BasePose) -> Pose {
    *chain_frames(model, q, base).last().unwrap()
}

/// World-frame geometric Jacobian of the ee twist w.r.t. arm joint
/// rates: column i is [z_i × (p_ee − p_i); z_i]. Linear rows on top.
/// Base DOFs are not part of the decision vector and do not appear.
pub fn geometric_jacobian(model: &RobotModel, q: &DVector<f64>, base: &BasePose) -> DMatrix<f64> {
    let frames = chain_frames(model, q, base);
    let p_ee = frames.last().unwrap().translation.vector;
    let mut jac = DMatrix::zeros(6, model.n());
    for i in 0..model.n() {
        let z = frames[i].rotation * Vector3::z();
        let p = frames[i].translation.vector;
        let lin = z.cross(&(p_ee - p));
        for r in 0..3 {
            jac[(r, i)] = lin[r];
            jac[(r + 3, i)] = z[r];
        }
    }
    jac
}

/// Normalize an angle to (−π, π].
pub fn normalize_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut r = a % two_pi;
    if r <= -std::f64::consts::PI {
        r += two_pi;
    } else if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

/// Explicit Euler step. Joint positions are clamped to bounds, the base
/// heading is normalized to (−π, π]. Velocities are recorded as given.
pub fn integrate_state(
    model: &RobotModel,
    state: &RobotState,
    qd_cmd: &DVector<f64>,
    twist_cmd: &BaseTwist,
    dt: f64,
) -> Result<RobotState, ModelError> {
    let finite = qd_cmd.iter().all(|v| v.is_finite())
        && twist_cmd.vx.is_finite()
        && twist_cmd.vy.is_finite()
        && twist_cmd.omega.is_finite();
    if !finite {
        return Err(ModelError::NonFiniteCommand);
    }
    let mut q = &state.q + qd_cmd * dt;
    for i in 0..model.n() {
        q[i] = q[i].clamp(model.joints[i].q_min, model.joints[i].q_max);
    }
    Ok(RobotState {
        q,
        qd: qd_cmd.clone(),
        base: BasePose::new(
            state.base.x + twist_cmd.vx * dt,
            state.base.y + twist_cmd.vy * dt,
            normalize_angle(state.base.theta + twist_cmd.omega * dt),
        ),
        base_twist: *twist_cmd,
        gripper_aperture: state.gripper_aperture,
    })
}
