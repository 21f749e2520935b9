//! Scenario files tie everything together: robot model, behavior tree
//! source, world geometry, loop rates, and the catalogs of predicates,
//! commands, and tasks that tree leaves may reference by label.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::{DVector, UnitQuaternion, Vector2, Vector3};
use serde::Deserialize;

use crate::dsl::{self, ParsedTree};
use crate::robot::{BasePose, RobotModel, RobotState};
use crate::sim::{Attachment, CubePose, PlaceTarget, Table, WorldState, CUBE_EDGE};
use crate::task::{self, TargetSpec, Task};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Parse(String),
    #[error("scenario validation failed:\n{}", .0.join("\n"))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub robot: PathBuf,
    pub tree: PathBuf,
    pub schedule: ScheduleConfig,
    pub solver: SolverConfig,
    pub platform: PlatformConfig,
    pub gripper: GripperConfig,
    pub table: TableConfig,
    pub cube: CubeConfig,
    pub place: PlaceConfig,
    pub grasp: GraspConfig,
    pub arm: ArmConfig,
    pub waypoints: BTreeMap<String, [f64; 2]>,
    #[serde(default)]
    pub predicates: BTreeMap<String, PredicateSpec>,
    #[serde(default)]
    pub commands: BTreeMap<String, CommandSpec>,
    #[serde(default)]
    pub tasks: BTreeMap<String, TaskSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub bt_hz: f64,
    pub sot_hz: f64,
    pub platform_hz: f64,
    pub gripper_hz: f64,
    /// Wall-clock budget in simulated seconds.
    pub timeout: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default)]
    pub mu: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatformConfig {
    pub speed: f64,
    pub goal_radius: f64,
    pub start: [f64; 2],
    #[serde(default)]
    pub theta: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GripperConfig {
    pub travel_time: f64,
    pub start_aperture: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableConfig {
    pub center: [f64; 2],
    pub size: [f64; 2],
    pub top: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CubeConfig {
    /// Ground-plane position; the cube starts resting on the table.
    pub start: [f64; 2],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaceConfig {
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraspConfig {
    /// Max end-effector-to-cube distance for a closing gripper to
    /// capture the cube.
    pub epsilon: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmConfig {
    pub q_home: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PredicateSpec {
    AtWaypoint { waypoint: String },
    /// Platform currently targets this waypoint and has not arrived.
    EnRouteTo { waypoint: String },
    NearTable { threshold: f64 },
    /// End effector hovers over the cube: xy within `xy_tolerance` of
    /// the cube center, no higher than `z_max` above it.
    GripperOverCube { xy_tolerance: f64, z_max: f64 },
    GripperAwayFromCube { xy_tolerance: f64, z_max: f64 },
    CubePlaced,
    CubeFree,
    CubeGrasped,
    CubeHeldAwayFromPlace,
    CubeOverPlace,
    CubeHeldAboveRelease { tolerance: f64 },
    CubeAtReleasePose { tolerance: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CommandSpec {
    PlatformGoto { waypoint: String },
    Gripper { position: GripperPosition },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GripperPosition {
    Open,
    Closed,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetConfig {
    /// Follow the cube, optionally offset in world coordinates.
    Cube {
        #[serde(default)]
        offset: [f64; 3],
    },
    /// The place target at cube rest height plus a vertical offset.
    Place {
        #[serde(default)]
        z_offset: f64,
    },
    Fixed { xyz: [f64; 3] },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskSpec {
    EePosition {
        level: u32,
        gain: f64,
        target: TargetConfig,
        tolerance: Option<f64>,
        timeout: Option<f64>,
    },
    EeOrientation {
        level: u32,
        gain: f64,
        rpy: [f64; 3],
        tolerance: Option<f64>,
        timeout: Option<f64>,
    },
    JointLimits {
        level: u32,
        beta: f64,
        horizon: f64,
    },
    Posture {
        level: u32,
        gain: f64,
    },
}

impl TaskSpec {
    pub fn gain(&self) -> Option<f64> {
        match self {
            TaskSpec::EePosition { gain, .. } => Some(*gain),
            TaskSpec::EeOrientation { gain, .. } => Some(*gain),
            TaskSpec::JointLimits { .. } => None,
            TaskSpec::Posture { gain, .. } => Some(*gain),
        }
    }
}

/// Everything needed to run: parsed scenario, loaded robot, parsed
/// tree.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub config: ScenarioConfig,
    pub robot: RobotModel,
    pub tree: ParsedTree,
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ScenarioError> {
        toml::from_str(s).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    pub fn rest_z(&self) -> f64 {
        self.table.top + CUBE_EDGE / 2.0
    }

    pub fn initial_world(&self) -> WorldState {
        WorldState {
            table: Table {
                center: Vector2::new(self.table.center[0], self.table.center[1]),
                half_extents: Vector2::new(self.table.size[0] / 2.0, self.table.size[1] / 2.0),
                top: self.table.top,
            },
            cube: CubePose {
                position: Vector3::new(self.cube.start[0], self.cube.start[1], self.rest_z()),
                orientation: UnitQuaternion::identity(),
            },
            place: PlaceTarget {
                center: Vector2::new(self.place.center[0], self.place.center[1]),
                radius: self.place.radius,
            },
            waypoints: self
                .waypoints
                .iter()
                .map(|(k, v)| (k.clone(), Vector2::new(v[0], v[1])))
                .collect(),
            attachment: Attachment::Free,
            time: 0.0,
        }
    }

    pub fn initial_state(&self, robot: &RobotModel) -> RobotState {
        let mut state = RobotState::home(robot);
        state.q = DVector::from_vec(self.arm.q_home.clone());
        state.base = BasePose {
            x: self.platform.start[0],
            y: self.platform.start[1],
            theta: self.platform.theta,
        };
        state.gripper_aperture = self.gripper.start_aperture;
        state
    }

    /// Instantiate a task from its catalog entry.
    pub fn build_task(&self, name: &str) -> Option<Task> {
        let spec = self.tasks.get(name)?;
        let t = match spec {
            TaskSpec::EePosition {
                level,
                gain,
                target,
                tolerance,
                timeout,
            } => {
                let target = match target {
                    TargetConfig::Cube { offset } => TargetSpec::Cube {
                        offset: Vector3::new(offset[0], offset[1], offset[2]),
                    },
                    TargetConfig::Place { z_offset } => TargetSpec::Fixed(Vector3::new(
                        self.place.center[0],
                        self.place.center[1],
                        self.rest_z() + z_offset,
                    )),
                    TargetConfig::Fixed { xyz } => {
                        TargetSpec::Fixed(Vector3::new(xyz[0], xyz[1], xyz[2]))
                    }
                };
                task::ee_position_task(name, *level, *gain, target, *tolerance, *timeout)
            }
            TaskSpec::EeOrientation {
                level,
                gain,
                rpy,
                tolerance,
                timeout,
            } => {
                let quat = UnitQuaternion::from_euler_angles(rpy[0], rpy[1], rpy[2]);
                task::ee_orientation_task(name, *level, *gain, quat, *tolerance, *timeout)
            }
            TaskSpec::JointLimits {
                level,
                beta,
                horizon,
            } => task::joint_limit_task(name, *level, *beta, *horizon),
            TaskSpec::Posture { level, gain } => task::posture_task(
                name,
                *level,
                *gain,
                DVector::from_vec(self.arm.q_home.clone()),
            ),
        };
        Some(t)
    }
}

fn read(path: &Path) -> Result<String, ScenarioError> {
    std::fs::read_to_string(path)
        .map_err(|e| ScenarioError::Io(format!("{}: {}", path.display(), e)))
}

/// Load a scenario file plus the robot and tree files it references
/// (relative paths are resolved against the scenario's directory), and
/// cross-validate the lot. All problems are reported at once.
pub fn load(path: &Path) -> Result<Bundle, ScenarioError> {
    load_with(path, |_| {})
}

/// Like [`load`], but lets the caller adjust the parsed config (flag
/// overrides) before cross-validation runs.
pub fn load_with(
    path: &Path,
    adjust: impl FnOnce(&mut ScenarioConfig),
) -> Result<Bundle, ScenarioError> {
    let text = read(path)?;
    let mut config = ScenarioConfig::from_toml_str(&text)?;
    adjust(&mut config);
    let config = config;
    let dir = path.parent().unwrap_or(Path::new("."));

    let robot_path = dir.join(&config.robot);
    let robot = RobotModel::from_toml_str(&read(&robot_path)?)
        .map_err(|e| ScenarioError::Parse(format!("{}: {}", robot_path.display(), e)))?;

    let tree_path = dir.join(&config.tree);
    let tree_src = read(&tree_path)?;
    let tree = dsl::parse(&tree_src).map_err(|diags| {
        ScenarioError::Invalid(
            diags
                .iter()
                .map(|d| format!("{}: {}", tree_path.display(), d))
                .collect(),
        )
    })?;

    let problems = validate(&config, &robot, &tree);
    if problems.is_empty() {
        Ok(Bundle {
            config,
            robot,
            tree,
        })
    } else {
        Err(ScenarioError::Invalid(problems))
    }
}

/// Every cross-cutting constraint in one place. Returns human-readable
/// problems; empty means the bundle is runnable.
pub fn validate(config: &ScenarioConfig, robot: &RobotModel, tree: &ParsedTree) -> Vec<String> {
    let mut bad = Vec::new();
    let s = &config.schedule;

    for (name, hz) in [
        ("bt_hz", s.bt_hz),
        ("sot_hz", s.sot_hz),
        ("platform_hz", s.platform_hz),
        ("gripper_hz", s.gripper_hz),
    ] {
        if !(hz > 0.0) {
            bad.push(format!("schedule.{} must be positive", name));
        }
    }
    if !(s.timeout > 0.0) {
        bad.push("schedule.timeout must be positive".into());
    }
    if s.sot_hz > 0.0 {
        for (name, hz) in [
            ("bt_hz", s.bt_hz),
            ("platform_hz", s.platform_hz),
            ("gripper_hz", s.gripper_hz),
        ] {
            if hz > 0.0 {
                let ratio = s.sot_hz / hz;
                if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 - 1e-9 {
                    bad.push(format!(
                        "schedule.sot_hz must be an integer multiple of schedule.{} ({} / {})",
                        name, s.sot_hz, hz
                    ));
                }
            }
        }
    }

    if !(config.solver.epsilon > 0.0) {
        bad.push("solver.epsilon must be positive".into());
    }
    if config.solver.mu < 0.0 {
        bad.push("solver.mu must be non-negative".into());
    }

    if !(config.platform.speed > 0.0) {
        bad.push("platform.speed must be positive".into());
    }
    if !(config.platform.goal_radius > 0.0) {
        bad.push("platform.goal_radius must be positive".into());
    }
    if !(config.gripper.travel_time > 0.0) {
        bad.push("gripper.travel_time must be positive".into());
    }
    if !(0.0..=1.0).contains(&config.gripper.start_aperture) {
        bad.push("gripper.start_aperture must be within [0, 1]".into());
    }
    if config.table.size.iter().any(|v| !(*v > 0.0)) {
        bad.push("table.size must be positive".into());
    }
    if !(config.place.radius > 0.0) {
        bad.push("place.radius must be positive".into());
    }
    if !(config.grasp.epsilon > 0.0) {
        bad.push("grasp.epsilon must be positive".into());
    }

    let on_table = |p: &[f64; 2], what: &str, bad: &mut Vec<String>| {
        let dx = (p[0] - config.table.center[0]).abs();
        let dy = (p[1] - config.table.center[1]).abs();
        if dx > config.table.size[0] / 2.0 || dy > config.table.size[1] / 2.0 {
            bad.push(format!("{} must lie on the table footprint", what));
        }
    };
    on_table(&config.cube.start, "cube.start", &mut bad);
    on_table(&config.place.center, "place.center", &mut bad);

    if config.arm.q_home.len() != robot.n() {
        bad.push(format!(
            "arm.q_home has {} entries for a {}-joint arm",
            config.arm.q_home.len(),
            robot.n()
        ));
    } else {
        for (i, q) in config.arm.q_home.iter().enumerate() {
            if *q < robot.joints[i].q_min || *q > robot.joints[i].q_max {
                bad.push(format!("arm.q_home[{}] is outside the joint range", i));
            }
        }
    }

    if config.waypoints.is_empty() {
        bad.push("at least one waypoint is required".into());
    }

    // The velocity-level linearization q̇ = −λe is only stable for
    // λ·dt < 1/2 at the solver rate.
    let dt = 1.0 / s.sot_hz;
    for (name, spec) in &config.tasks {
        if let Some(gain) = spec.gain() {
            if !(gain > 0.0) {
                bad.push(format!("task '{}': gain must be positive", name));
            } else if gain * dt >= 0.5 {
                bad.push(format!(
                    "task '{}': gain {} at {} Hz gives lambda*dt = {:.3} >= 0.5",
                    name,
                    gain,
                    s.sot_hz,
                    gain * dt
                ));
            }
        }
        match spec {
            TaskSpec::EePosition {
                tolerance, timeout, ..
            }
            | TaskSpec::EeOrientation {
                tolerance, timeout, ..
            } => {
                if let Some(t) = tolerance {
                    if !(*t > 0.0) {
                        bad.push(format!("task '{}': tolerance must be positive", name));
                    }
                }
                if let Some(t) = timeout {
                    if !(*t > 0.0) {
                        bad.push(format!("task '{}': timeout must be positive", name));
                    }
                }
            }
            TaskSpec::JointLimits { beta, horizon, .. } => {
                if !(*beta > 0.0) || !(*horizon > 0.0) {
                    bad.push(format!(
                        "task '{}': beta and horizon must be positive",
                        name
                    ));
                }
            }
            TaskSpec::Posture { .. } => {}
        }
    }

    let wp_ref = |wp: &String, whose: String, bad: &mut Vec<String>| {
        if !config.waypoints.contains_key(wp) {
            bad.push(format!("{} references unknown waypoint '{}'", whose, wp));
        }
    };
    for (name, p) in &config.predicates {
        match p {
            PredicateSpec::AtWaypoint { waypoint } | PredicateSpec::EnRouteTo { waypoint } => {
                wp_ref(waypoint, format!("predicate '{}'", name), &mut bad);
            }
            PredicateSpec::GripperOverCube { xy_tolerance, z_max }
            | PredicateSpec::GripperAwayFromCube { xy_tolerance, z_max } => {
                if !(*xy_tolerance > 0.0) || !(*z_max > 0.0) {
                    bad.push(format!(
                        "predicate '{}': xy_tolerance and z_max must be positive",
                        name
                    ));
                }
            }
            PredicateSpec::NearTable { threshold } => {
                if !(*threshold > 0.0) {
                    bad.push(format!(
                        "predicate '{}': threshold must be positive",
                        name
                    ));
                }
            }
            PredicateSpec::CubeHeldAboveRelease { tolerance }
            | PredicateSpec::CubeAtReleasePose { tolerance } => {
                if !(*tolerance > 0.0) {
                    bad.push(format!(
                        "predicate '{}': tolerance must be positive",
                        name
                    ));
                }
            }
            _ => {}
        }
    }
    for (name, c) in &config.commands {
        if let CommandSpec::PlatformGoto { waypoint } = c {
            wp_ref(waypoint, format!("command '{}'", name), &mut bad);
        }
    }

    let predicates = config.predicates.keys().cloned().collect();
    let commands = config.commands.keys().cloned().collect();
    let tasks = config.tasks.keys().cloned().collect();
    for d in dsl::validate_tree(tree, &predicates, &commands, &tasks) {
        bad.push(format!("tree: {}", d));
    }
    if let Err(e) = tree.root.validate() {
        bad.push(format!("tree: {}", e));
    }

    bad
}

#[cfg(test)]
mod tests {
    use super::*;

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

    fn minimal_scenario() -> String {
        r#"
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
            start = [-0.8, 0.0]

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

            [commands."Move to C"]
            kind = "platform_goto"
            waypoint = "C"

            [tasks."Posture"]
            kind = "posture"
            level = 2
            gain = 1.0
        "#
        .to_string()
    }

    fn tree_ok() -> ParsedTree {
        dsl::parse(r#"seq { cond "At C" act "Move to C" sot_act "Posture" }"#).unwrap()
    }

    #[test]
    fn valid_scenario_passes() {
        let cfg = ScenarioConfig::from_toml_str(&minimal_scenario()).unwrap();
        let robot = RobotModel::from_toml_str(ROBOT).unwrap();
        let bad = validate(&cfg, &robot, &tree_ok());
        assert!(bad.is_empty(), "{:?}", bad);
    }

    #[test]
    fn non_divisible_rates_rejected() {
        let text = minimal_scenario().replace("bt_hz = 10.0", "bt_hz = 30.0");
        let cfg = ScenarioConfig::from_toml_str(&text).unwrap();
        let robot = RobotModel::from_toml_str(ROBOT).unwrap();
        let bad = validate(&cfg, &robot, &tree_ok());
        assert!(bad.iter().any(|m| m.contains("integer multiple")));
    }

    #[test]
    fn unstable_gain_rejected() {
        let text = minimal_scenario().replace("gain = 1.0", "gain = 150.0");
        let cfg = ScenarioConfig::from_toml_str(&text).unwrap();
        let robot = RobotModel::from_toml_str(ROBOT).unwrap();
        let bad = validate(&cfg, &robot, &tree_ok());
        assert!(bad.iter().any(|m| m.contains("lambda*dt")));
    }

    #[test]
    fn unknown_tree_labels_rejected() {
        let cfg = ScenarioConfig::from_toml_str(&minimal_scenario()).unwrap();
        let robot = RobotModel::from_toml_str(ROBOT).unwrap();
        let tree = dsl::parse(r#"seq { cond "Nope" }"#).unwrap();
        let bad = validate(&cfg, &robot, &tree);
        assert!(bad.iter().any(|m| m.contains("unknown predicate 'Nope'")));
    }

    #[test]
    fn q_home_length_checked() {
        let text = minimal_scenario().replace("q_home = [0.0, 0.5]", "q_home = [0.0]");
        let cfg = ScenarioConfig::from_toml_str(&text).unwrap();
        let robot = RobotModel::from_toml_str(ROBOT).unwrap();
        let bad = validate(&cfg, &robot, &tree_ok());
        assert!(bad.iter().any(|m| m.contains("q_home")));
    }

    #[test]
    fn unknown_waypoint_reference_rejected() {
        let text = minimal_scenario().replace("waypoint = \"C\"", "waypoint = \"Z\"");
        let cfg = ScenarioConfig::from_toml_str(&text).unwrap();
        let robot = RobotModel::from_toml_str(ROBOT).unwrap();
        let bad = validate(&cfg, &robot, &tree_ok());
        assert!(bad.iter().any(|m| m.contains("unknown waypoint 'Z'")));
    }

    #[test]
    fn typo_fields_rejected_at_parse() {
        let text = minimal_scenario().replace("epsilon = 1e-6", "epsilonn = 1e-6");
        assert!(ScenarioConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn task_targets_resolve() {
        let cfg = ScenarioConfig::from_toml_str(&minimal_scenario()).unwrap();
        let t = cfg.build_task("Posture").unwrap();
        assert_eq!(t.level, 2);
        assert!(cfg.build_task("Missing").is_none());
    }

    #[test]
    fn initial_world_puts_cube_at_rest_height() {
        let cfg = ScenarioConfig::from_toml_str(&minimal_scenario()).unwrap();
        let w = cfg.initial_world();
        assert!((w.cube.position.z - (0.72 + CUBE_EDGE / 2.0)).abs() < 1e-12);
        assert_eq!(w.waypoints.len(), 2);
    }
}
