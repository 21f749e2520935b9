//! Binds behavior-tree leaves to the simulated robot and world.

use nalgebra::Vector2;

use super::WorldState;
use crate::bt::{EngineError, LeafHost, TickStatus};
use crate::ctrl::{dispatch, ControllerCommand, GripperCtrl, PlatformCtrl};
use crate::robot::{forward_kinematics, RobotModel, RobotState};
use crate::scenario::{CommandSpec, GripperPosition, PredicateSpec, ScenarioConfig};
use crate::task::ActiveTaskRegistry;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimOutcome {
    RootSuccess,
    RootFailure,
    Timeout,
}

impl SimOutcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            SimOutcome::RootSuccess => "root-success",
            SimOutcome::RootFailure => "root-failure",
            SimOutcome::Timeout => "timeout",
        }
    }
}

pub struct SimHost<'a> {
    pub config: &'a ScenarioConfig,
    pub robot: &'a RobotModel,
    pub state: RobotState,
    pub world: WorldState,
    pub registry: ActiveTaskRegistry,
    pub platform: PlatformCtrl,
    pub gripper: GripperCtrl,
    pending: Vec<ControllerCommand>,
    prev_aperture: f64,
}

impl<'a> SimHost<'a> {
    pub fn new(config: &'a ScenarioConfig, robot: &'a RobotModel) -> Self {
        let state = config.initial_state(robot);
        let world = config.initial_world();
        let prev_aperture = state.gripper_aperture;
        SimHost {
            config,
            robot,
            state,
            world,
            registry: ActiveTaskRegistry::new(),
            platform: PlatformCtrl::new(config.platform.speed, config.platform.goal_radius),
            gripper: GripperCtrl::new(config.gripper.travel_time),
            pending: Vec::new(),
            prev_aperture,
        }
    }

    pub fn ee_pose(&self) -> nalgebra::Isometry3<f64> {
        forward_kinematics(self.robot, &self.state.q, &self.state.base)
    }

    fn base_xy(&self) -> Vector2<f64> {
        Vector2::new(self.state.base.x, self.state.base.y)
    }

    fn waypoint(&self, name: &str) -> Result<Vector2<f64>, EngineError> {
        self.world
            .waypoints
            .get(name)
            .copied()
            .ok_or_else(|| EngineError::Invariant(format!("unknown waypoint '{}'", name)))
    }

    fn release_point_distance(&self) -> f64 {
        let rest = nalgebra::Vector3::new(
            self.world.place.center.x,
            self.world.place.center.y,
            self.world.rest_z(),
        );
        (self.world.cube.position - rest).norm()
    }

    /// The gripper is over the cube when its xy error is small and it
    /// sits no higher than z_max above the cube center, i.e. anywhere
    /// on the descent from the hover point down to the grasp.
    fn gripper_over_cube(&self, xy_tolerance: f64, z_max: f64) -> bool {
        let ee = self.ee_pose().translation.vector;
        let d = ee - self.world.cube.position;
        d.xy().norm() <= xy_tolerance && d.z <= z_max
    }

    /// Apply the commands the last tick issued (last writer wins).
    pub fn dispatch_pending(&mut self) {
        dispatch(&self.pending, &mut self.platform, &mut self.gripper);
        self.pending.clear();
    }

    /// Platform control update: refreshes the held base twist.
    pub fn platform_step(&mut self) {
        let (twist, _arrived) = self.platform.step(&self.state.base);
        self.state.base_twist = twist;
    }

    /// Gripper control update over one gripper period.
    pub fn gripper_step(&mut self, dt: f64) {
        let (aperture, _done) = self.gripper.step(self.state.gripper_aperture, dt);
        self.state.gripper_aperture = aperture;
    }

    /// Attachment bookkeeping, run once per simulation step after
    /// integration. A closing gripper captures the cube if it finishes
    /// within grasp range; any opening releases it, dropping it flush
    /// onto the table under its current horizontal position.
    pub fn update_attachment(&mut self) {
        let ee = self.ee_pose();
        let aperture = self.state.gripper_aperture;
        match &self.world.attachment {
            super::Attachment::Attached { grasp } => {
                let cube_iso = ee * grasp;
                if aperture > 0.0 {
                    self.world.cube.set_from_isometry(&cube_iso);
                    self.world.cube.position.z = self.world.rest_z();
                    self.world.cube.orientation = nalgebra::UnitQuaternion::identity();
                    self.world.attachment = super::Attachment::Free;
                } else {
                    self.world.cube.set_from_isometry(&cube_iso);
                }
            }
            super::Attachment::Free => {
                let just_closed = self.prev_aperture > 0.0 && aperture == 0.0;
                if just_closed {
                    let dist = (ee.translation.vector - self.world.cube.position).norm();
                    if dist <= self.config.grasp.epsilon {
                        // Closing jaws center the object: the cube snaps
                        // onto the tool frame, so the held pose has no
                        // residual grasp offset.
                        self.world.cube.set_from_isometry(&ee);
                        self.world.attachment = super::Attachment::Attached {
                            grasp: nalgebra::Isometry3::identity(),
                        };
                    }
                }
            }
        }
        self.prev_aperture = aperture;
    }

    fn eval_predicate(&self, spec: &PredicateSpec) -> Result<bool, EngineError> {
        let attached = self.world.attachment.is_attached();
        Ok(match spec {
            PredicateSpec::AtWaypoint { waypoint } => {
                let wp = self.waypoint(waypoint)?;
                self.platform.at_point(&self.state.base, &wp)
            }
            PredicateSpec::EnRouteTo { waypoint } => {
                let wp = self.waypoint(waypoint)?;
                let targeted = self
                    .platform
                    .target()
                    .map(|t| t.waypoint == *waypoint)
                    .unwrap_or(false);
                targeted && !self.platform.at_point(&self.state.base, &wp)
            }
            PredicateSpec::NearTable { threshold } => {
                self.world.table.distance_xy(&self.base_xy()) <= *threshold
            }
            PredicateSpec::GripperOverCube { xy_tolerance, z_max } => {
                self.gripper_over_cube(*xy_tolerance, *z_max)
            }
            PredicateSpec::GripperAwayFromCube { xy_tolerance, z_max } => {
                !self.gripper_over_cube(*xy_tolerance, *z_max)
            }
            PredicateSpec::CubePlaced => self.world.cube_placed(),
            PredicateSpec::CubeFree => !attached,
            PredicateSpec::CubeGrasped => attached,
            PredicateSpec::CubeHeldAwayFromPlace => {
                attached && self.world.cube_to_place_xy() > self.world.place.radius
            }
            PredicateSpec::CubeOverPlace => {
                attached && self.world.cube_to_place_xy() <= self.world.place.radius
            }
            PredicateSpec::CubeHeldAboveRelease { tolerance } => {
                attached && self.release_point_distance() > *tolerance
            }
            PredicateSpec::CubeAtReleasePose { tolerance } => {
                attached && self.release_point_distance() <= *tolerance
            }
        })
    }

    fn command_goal_met(&self, spec: &CommandSpec) -> Result<bool, EngineError> {
        Ok(match spec {
            CommandSpec::PlatformGoto { waypoint } => {
                let wp = self.waypoint(waypoint)?;
                self.platform.at_point(&self.state.base, &wp)
            }
            CommandSpec::Gripper { position } => match position {
                GripperPosition::Open => self.state.gripper_aperture == 1.0,
                GripperPosition::Closed => self.state.gripper_aperture == 0.0,
            },
        })
    }

    fn issue(&mut self, spec: &CommandSpec) -> Result<(), EngineError> {
        let cmd = match spec {
            CommandSpec::PlatformGoto { waypoint } => ControllerCommand::PlatformGoto {
                waypoint: waypoint.clone(),
                target: self.waypoint(waypoint)?,
            },
            CommandSpec::Gripper { position } => ControllerCommand::GripperMove {
                open: *position == GripperPosition::Open,
            },
        };
        self.pending.push(cmd);
        Ok(())
    }
}

impl LeafHost for SimHost<'_> {
    fn now(&self) -> f64 {
        self.world.time
    }

    fn eval_condition(&mut self, predicate: &str) -> Result<bool, EngineError> {
        let spec = self
            .config
            .predicates
            .get(predicate)
            .ok_or_else(|| EngineError::UnknownPredicate(predicate.to_string()))?
            .clone();
        self.eval_predicate(&spec)
    }

    fn tick_action(
        &mut self,
        _node_id: &str,
        command: &str,
        activation: bool,
    ) -> Result<TickStatus, EngineError> {
        let spec = self
            .config
            .commands
            .get(command)
            .ok_or_else(|| EngineError::UnknownCommand(command.to_string()))?
            .clone();
        if self.command_goal_met(&spec)? {
            return Ok(TickStatus::Success);
        }
        if activation {
            self.issue(&spec)?;
        }
        Ok(TickStatus::Running)
    }

    fn tick_sot_action(
        &mut self,
        node_id: &str,
        task: &str,
        activation: bool,
    ) -> Result<TickStatus, EngineError> {
        if activation || !self.registry.contains(task) {
            let t = self
                .config
                .build_task(task)
                .ok_or_else(|| EngineError::UnknownTask(task.to_string()))?;
            self.registry
                .register(t, node_id, self.world.time)
                .map_err(|e| EngineError::Invariant(e.to_string()))?;
        }
        let registered = self
            .registry
            .get(task)
            .expect("registered just above")
            .clone();
        if let (Some(timeout), Some(at)) = (registered.timeout, self.registry.registered_at(task))
        {
            if self.world.time - at >= timeout {
                return Ok(TickStatus::Failure);
            }
        }
        let converged = registered
            .converged(self.robot, &self.state, &self.world)
            .map_err(|e| EngineError::Invariant(e.to_string()))?;
        Ok(if converged {
            TickStatus::Success
        } else {
            TickStatus::Running
        })
    }

    fn remove_task(&mut self, task: &str) -> bool {
        self.registry.remove(task)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::ScenarioConfig;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;

    const ROBOT: &str = r#"
        [[joint]]
        a = 0.0
        alpha = -1.5707963267948966
        d = 0.3
        theta_offset = 0.0
        q_min = -2.8
        q_max = 2.8
        v_max = 2.5

        [[joint]]
        a = 0.25
        alpha = 0.0
        d = 0.0
        theta_offset = 0.0
        q_min = -2.8
        q_max = 2.8
        v_max = 2.5

        [mount]
        translation = [0.0, 0.0, 0.0]

        [tool]
        translation = [0.0, 0.0, 0.0]
    "#;

    const SCENARIO: &str = r#"
        robot = "robot.toml"
        tree = "tree.bt"

        [schedule]
        bt_hz = 10.0
        sot_hz = 200.0
        platform_hz = 100.0
        gripper_hz = 100.0
        timeout = 10.0

        [solver]
        epsilon = 1e-6

        [platform]
        speed = 0.15
        goal_radius = 0.02
        start = [0.0, 0.0]

        [gripper]
        travel_time = 0.5
        start_aperture = 1.0

        [table]
        center = [1.5, 0.75]
        size = [1.2, 0.8]
        top = 0.72

        [cube]
        start = [1.95, 0.55]

        [place]
        center = [1.05, 0.55]
        radius = 0.025

        [grasp]
        epsilon = 0.01

        [arm]
        q_home = [0.0, 0.5]

        [waypoints]
        B = [0.9, 0.0]
        C = [2.1, 0.0]

        [predicates."At C"]
        kind = "at_waypoint"
        waypoint = "C"

        [predicates."Cube Grasped"]
        kind = "cube_grasped"

        [commands."Move to C"]
        kind = "platform_goto"
        waypoint = "C"

        [commands."Close Gripper"]
        kind = "gripper"
        position = "closed"

        [tasks."Posture"]
        kind = "posture"
        level = 2
        gain = 1.0
    "#;

    fn fixtures() -> (ScenarioConfig, RobotModel) {
        (
            ScenarioConfig::from_toml_str(SCENARIO).unwrap(),
            RobotModel::from_toml_str(ROBOT).unwrap(),
        )
    }

    #[test]
    fn action_issues_command_once_per_activation() {
        let (cfg, robot) = fixtures();
        let mut host = SimHost::new(&cfg, &robot);
        let s = host.tick_action("n", "Move to C", true).unwrap();
        assert_eq!(s, TickStatus::Running);
        host.dispatch_pending();
        assert_eq!(host.platform.target().unwrap().waypoint, "C");

        // Continuation ticks do not re-issue.
        let s = host.tick_action("n", "Move to C", false).unwrap();
        assert_eq!(s, TickStatus::Running);
        assert!(host.pending.is_empty());
    }

    #[test]
    fn action_succeeds_without_command_when_goal_already_met() {
        let (cfg, robot) = fixtures();
        let mut host = SimHost::new(&cfg, &robot);
        host.state.base.x = 2.095;
        host.state.base.y = 0.0;
        let s = host.tick_action("n", "Move to C", true).unwrap();
        assert_eq!(s, TickStatus::Success);
        assert!(host.pending.is_empty());
    }

    #[test]
    fn sot_action_registers_and_reports_convergence() {
        let (cfg, robot) = fixtures();
        let mut host = SimHost::new(&cfg, &robot);
        // Posture has no tolerance: a pure preference converges at once.
        let s = host.tick_sot_action("n", "Posture", true).unwrap();
        assert_eq!(s, TickStatus::Success);
        assert!(host.registry.contains("Posture"));
        // Same owner refreshing is fine; a different node is a bug.
        assert!(host.tick_sot_action("n", "Posture", true).is_ok());
        assert!(host.tick_sot_action("other", "Posture", true).is_err());
    }

    #[test]
    fn close_on_cube_attaches_and_reopen_releases() {
        let (cfg, robot) = fixtures();
        let mut host = SimHost::new(&cfg, &robot);
        // Park the cube exactly at the end effector.
        let ee = host.ee_pose().translation.vector;
        host.world.cube.position = ee + Vector3::new(0.004, 0.0, 0.0);

        host.gripper.command(false);
        for _ in 0..60 {
            host.gripper_step(0.01);
            host.update_attachment();
        }
        assert!(host.world.attachment.is_attached());
        // Cube now rides the end effector exactly.
        let before = host.world.cube.position;
        host.state.base.x += 0.3;
        host.update_attachment();
        let after = host.world.cube.position;
        assert_relative_eq!(after.x - before.x, 0.3, epsilon = 1e-12);

        // Any opening releases and the cube drops flush to the table.
        host.gripper.command(true);
        host.gripper_step(0.01);
        host.update_attachment();
        assert!(!host.world.attachment.is_attached());
        assert_relative_eq!(host.world.cube.position.z, host.world.rest_z());
        assert_relative_eq!(host.world.cube.position.x, after.x, epsilon = 1e-12);
    }

    #[test]
    fn close_far_from_cube_does_not_attach_but_reclose_recovers() {
        let (cfg, robot) = fixtures();
        let mut host = SimHost::new(&cfg, &robot);
        host.world.cube.position = Vector3::new(5.0, 5.0, 0.735);
        host.gripper.command(false);
        for _ in 0..60 {
            host.gripper_step(0.01);
            host.update_attachment();
        }
        assert!(!host.world.attachment.is_attached());

        // Bring the cube into range: a full reopen and reclose grabs it.
        let ee = host.ee_pose().translation.vector;
        host.world.cube.position = ee;
        host.gripper.command(true);
        for _ in 0..60 {
            host.gripper_step(0.01);
            host.update_attachment();
        }
        host.gripper.command(false);
        for _ in 0..60 {
            host.gripper_step(0.01);
            host.update_attachment();
        }
        assert!(host.world.attachment.is_attached());
    }

    #[test]
    fn predicates_reflect_world_state() {
        let (cfg, robot) = fixtures();
        let mut host = SimHost::new(&cfg, &robot);
        assert!(!host.eval_condition("At C").unwrap());
        host.state.base.x = 2.1;
        assert!(host.eval_condition("At C").unwrap());
        assert!(!host.eval_condition("Cube Grasped").unwrap());
        assert!(host.eval_condition("Nope").is_err());
    }
}
