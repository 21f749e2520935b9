//! Non-arm controllers. Both are deliberately simple state machines:
//! the behavior tree points them at goals, they run at their own rate
//! until the goal is met, and they keep doing whatever they were last
//! told across ticks.

use nalgebra::Vector2;

use crate::robot::{BasePose, BaseTwist};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ControllerId {
    Platform,
    Gripper,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControllerCommand {
    PlatformGoto {
        waypoint: String,
        target: Vector2<f64>,
    },
    GripperMove {
        open: bool,
    },
}

impl ControllerCommand {
    pub fn controller(&self) -> ControllerId {
        match self {
            ControllerCommand::PlatformGoto { .. } => ControllerId::Platform,
            ControllerCommand::GripperMove { .. } => ControllerId::Gripper,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlatformTarget {
    pub waypoint: String,
    pub position: Vector2<f64>,
}

/// Constant-speed holonomic base driver. Commands persist until
/// replaced; inside the goal radius the twist drops to zero.
#[derive(Debug, Clone)]
pub struct PlatformCtrl {
    pub speed: f64,
    pub goal_radius: f64,
    target: Option<PlatformTarget>,
}

impl PlatformCtrl {
    pub fn new(speed: f64, goal_radius: f64) -> Self {
        PlatformCtrl {
            speed,
            goal_radius,
            target: None,
        }
    }

    pub fn command(&mut self, waypoint: &str, position: Vector2<f64>) {
        self.target = Some(PlatformTarget {
            waypoint: waypoint.to_string(),
            position,
        });
    }

    pub fn target(&self) -> Option<&PlatformTarget> {
        self.target.as_ref()
    }

    pub fn at_point(&self, base: &BasePose, point: &Vector2<f64>) -> bool {
        (Vector2::new(base.x, base.y) - point).norm() <= self.goal_radius
    }

    pub fn at_target(&self, base: &BasePose) -> bool {
        match &self.target {
            Some(t) => self.at_point(base, &t.position),
            None => false,
        }
    }

    /// One control update: returns the twist to hold until the next
    /// update and whether the goal is reached.
    pub fn step(&self, base: &BasePose) -> (BaseTwist, bool) {
        let Some(t) = &self.target else {
            return (BaseTwist::zero(), false);
        };
        let to_goal = t.position - Vector2::new(base.x, base.y);
        let dist = to_goal.norm();
        if dist <= self.goal_radius {
            return (BaseTwist::zero(), true);
        }
        let dir = to_goal / dist;
        (
            BaseTwist {
                vx: self.speed * dir.x,
                vy: self.speed * dir.y,
                omega: 0.0,
            },
            false,
        )
    }
}

/// Constant-rate gripper: aperture slews between 0 (closed) and 1
/// (open) over `travel_time` seconds.
#[derive(Debug, Clone)]
pub struct GripperCtrl {
    pub travel_time: f64,
    target: Option<f64>,
}

impl GripperCtrl {
    pub fn new(travel_time: f64) -> Self {
        GripperCtrl {
            travel_time,
            target: None,
        }
    }

    pub fn command(&mut self, open: bool) {
        self.target = Some(if open { 1.0 } else { 0.0 });
    }

    pub fn target(&self) -> Option<f64> {
        self.target
    }

    /// One control update on the current aperture; returns the new
    /// aperture and whether the commanded position is reached.
    pub fn step(&self, aperture: f64, dt: f64) -> (f64, bool) {
        let Some(target) = self.target else {
            return (aperture, false);
        };
        let rate = 1.0 / self.travel_time;
        let delta = target - aperture;
        let max_move = rate * dt;
        let next = if delta.abs() <= max_move {
            target
        } else {
            aperture + max_move * delta.signum()
        };
        let next = next.clamp(0.0, 1.0);
        (next, next == target)
    }
}

/// Applies one tick's worth of commands. Commands arrive in issue
/// order, so the last writer for each controller wins.
pub fn dispatch(commands: &[ControllerCommand], platform: &mut PlatformCtrl, gripper: &mut GripperCtrl) {
    for cmd in commands {
        match cmd {
            ControllerCommand::PlatformGoto { waypoint, target } => {
                platform.command(waypoint, *target);
            }
            ControllerCommand::GripperMove { open } => gripper.command(*open),
        }
    }
}
