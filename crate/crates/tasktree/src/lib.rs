//! Behavior-tree supervised stack-of-tasks control.
//!
//! A behavior tree, ticked at a low rate, configures a hierarchical
//! control problem (a stack of prioritized velocity-level tasks) that a
//! lexicographic QP cascade solves at a higher rate. Standard action
//! nodes command additional controllers (a constant-speed platform
//! waypoint controller and a gripper), and a deterministic kinematic
//! simulation of a mobile manipulator exercises the whole loop on a
//! desk-scale pick-and-place scene.
//!
//! The crate is organized around runnable examples, one per capability:
//!
//! ```text
//! cargo run --example tick_semantics    # composite node tick rules
//! cargo run --example tree_dsl          # parse / print / validate trees
//! cargo run --example hqp_cascade       # lexicographic QP solving
//! cargo run --example arm_kinematics    # FK and geometric Jacobians
//! cargo run --example platform_patrol   # waypoint controller + scheduler
//! cargo run --example pick_and_place    # the full scenario end to end
//! ```
//!
//! The `tasktree` binary wraps the same library behind `check`, `run`,
//! and `plot` subcommands for scenario files on disk.

pub mod bt;
pub mod ctrl;
pub mod dsl;
pub mod hqp;
pub mod report;
pub mod robot;
pub mod scenario;
pub mod sim;
pub mod task;

pub mod cli;

pub use bt::{BtNode, NodeKind, TickStatus};
pub use hqp::{solve, HqpProblem, HqpSolution};
pub use robot::{forward_kinematics, geometric_jacobian, integrate_state, RobotModel, RobotState};
pub use task::{ActiveTaskRegistry, Stack, Task, TaskConstraint};
