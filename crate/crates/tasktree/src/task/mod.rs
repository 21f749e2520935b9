//! Tasks as regulated error functions linearized into velocity-level
//! constraints, the active-task registry, and the stack handed to the
//! solver.

mod catalog;

pub use catalog::{ee_orientation_task, ee_position_task, joint_limit_task, posture_task};
pub use catalog::{Linearized, TargetSpec, TaskMap};

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::robot::{RobotModel, RobotState};
use crate::sim::WorldState;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Equality,
    Inequality,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Eq,
    Le,
}

#[derive(Debug, thiserror::Error)]
pub enum TaskError {
    #[error("task '{0}': evaluator produced non-finite entries")]
    NonFinite(String),
    #[error("task '{id}' already registered by node '{owner}'")]
    DuplicateOwner { id: String, owner: String },
}

/// A prioritized task. Level 1 is the highest priority.
#[derive(Debug, Clone)]
pub struct Task {
    pub id: String,
    pub level: u32,
    pub kind: TaskKind,
    pub gain: f64,
    /// Convergence threshold on ‖e‖; tasks without one (pure
    /// constraints) count as converged from the moment they are set.
    pub tolerance: Option<f64>,
    /// Simulated seconds after registration before the task fails.
    pub timeout: Option<f64>,
    pub map: TaskMap,
}

impl Task {
    /// ‖e‖ for equality tasks; None for constraint-only tasks.
    pub fn error_norm(
        &self,
        model: &RobotModel,
        state: &RobotState,
        world: &WorldState,
    ) -> Result<Option<f64>, TaskError> {
        match self.map.evaluate(model, state, world) {
            Linearized::Equality { e, .. } => {
                if e.iter().any(|v| !v.is_finite()) {
                    return Err(TaskError::NonFinite(self.id.clone()));
                }
                Ok(Some(e.norm()))
            }
            Linearized::Inequality { .. } => Ok(None),
        }
    }

    pub fn converged(
        &self,
        model: &RobotModel,
        state: &RobotState,
        world: &WorldState,
    ) -> Result<bool, TaskError> {
        match (self.tolerance, self.error_norm(model, state, world)?) {
            (Some(tol), Some(norm)) => Ok(norm <= tol),
            _ => Ok(true),
        }
    }
}

/// One velocity-level constraint block: A q̇ (= | ≤) b.
#[derive(Debug, Clone)]
pub struct TaskConstraint {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub relation: Relation,
    pub level: u32,
}

/// Equality tasks regulate the error exponentially: b = −λe.
/// Inequality tasks pass their rows through unchanged.
pub fn linearize(
    task: &Task,
    model: &RobotModel,
    state: &RobotState,
    world: &WorldState,
) -> Result<TaskConstraint, TaskError> {
    let (a, b, relation) = match task.map.evaluate(model, state, world) {
        Linearized::Equality { e, j } => (j, -task.gain * e, Relation::Eq),
        Linearized::Inequality { a, b } => (a, b, Relation::Le),
    };
    let finite = a.iter().all(|v| v.is_finite()) && b.iter().all(|v| v.is_finite());
    if !finite {
        return Err(TaskError::NonFinite(task.id.clone()));
    }
    Ok(TaskConstraint {
        a,
        b,
        relation,
        level: task.level,
    })
}

#[derive(Debug, Clone)]
struct RegisteredTask {
    task: Task,
    owner: String,
    registered_at: f64,
}

/// Tasks currently part of the hierarchical control problem, keyed by
/// id. The revision counter increases on every add and every remove.
#[derive(Debug, Clone, Default)]
pub struct ActiveTaskRegistry {
    active: BTreeMap<String, RegisteredTask>,
    revision: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegisterOutcome {
    Inserted,
    /// Same owner re-registering on a new activation: the registration
    /// clock restarts, contents and revision are untouched.
    Refreshed,
}

impl ActiveTaskRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.active.contains_key(id)
    }

    pub fn get(&self, id: &str) -> Option<&Task> {
        self.active.get(id).map(|r| &r.task)
    }

    pub fn registered_at(&self, id: &str) -> Option<f64> {
        self.active.get(id).map(|r| r.registered_at)
    }

    /// Ids in deterministic (lexicographic) order.
    pub fn ids(&self) -> Vec<String> {
        self.active.keys().cloned().collect()
    }

    pub fn register(
        &mut self,
        task: Task,
        owner: &str,
        now: f64,
    ) -> Result<RegisterOutcome, TaskError> {
        if let Some(existing) = self.active.get_mut(&task.id) {
            if existing.owner != owner {
                return Err(TaskError::DuplicateOwner {
                    id: task.id.clone(),
                    owner: existing.owner.clone(),
                });
            }
            existing.registered_at = now;
            return Ok(RegisterOutcome::Refreshed);
        }
        self.active.insert(
            task.id.clone(),
            RegisteredTask {
                task,
                owner: owner.to_string(),
                registered_at: now,
            },
        );
        self.revision += 1;
        Ok(RegisterOutcome::Inserted)
    }

    /// Returns false (and leaves the revision alone) when absent.
    pub fn remove(&mut self, id: &str) -> bool {
        if self.active.remove(id).is_some() {
            self.revision += 1;
            true
        } else {
            false
        }
    }
}

#[derive(Debug, Clone)]
pub struct StackLevel {
    pub level: u32,
    pub constraints: Vec<TaskConstraint>,
}

/// Constraints grouped by priority level, levels strictly ascending.
#[derive(Debug, Clone, Default)]
pub struct Stack {
    pub levels: Vec<StackLevel>,
}

impl Stack {
    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

/// Linearize every active task at the current state. Within a level the
/// constraints are ordered by task id, so equal registry contents give
/// the same stack regardless of insertion order.
pub fn build_stack(
    registry: &ActiveTaskRegistry,
    model: &RobotModel,
    state: &RobotState,
    world: &WorldState,
) -> Result<Stack, TaskError> {
    let mut buckets: BTreeMap<u32, Vec<TaskConstraint>> = BTreeMap::new();
    for reg in registry.active.values() {
        let c = linearize(&reg.task, model, state, world)?;
        buckets.entry(c.level).or_default().push(c);
    }
    Ok(Stack {
        levels: buckets
            .into_iter()
            .map(|(level, constraints)| StackLevel { level, constraints })
            .collect(),
    })
}
