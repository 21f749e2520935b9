//! Behavior-tree engine with memoryless (reactive) tick semantics.
//!
//! Every tick restarts from the root, so conditions act as guards that
//! can preempt whole subtrees between ticks. The engine itself owns no
//! robot knowledge: leaves call back into a [`LeafHost`], which is the
//! deterministic simulation in production and a scripted stub in
//! tests.
//!
//! Composite nodes can additionally be marked as stack scopes. A
//! scoped composite tracks every task its subtree registers during the
//! current activation and removes them from the registry before it
//! returns a final status, which keeps the control problem tidy no
//! matter where in the subtree a behavior was preempted.
//!
//! A Running node that a tick round never reaches (a sibling switch
//! preempted it) is halted: its state resets so the next visit starts
//! a fresh activation, and if it is a scope its tasks are finalized
//! right away.

use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TickStatus {
    Success,
    Running,
    Failure,
}

/// Per-tick node outcome as recorded in traces. Nodes the tick never
/// reached stay `NotTicked`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeState {
    NotTicked,
    Success,
    Running,
    Failure,
}

impl From<TickStatus> for NodeState {
    fn from(s: TickStatus) -> Self {
        match s {
            TickStatus::Success => NodeState::Success,
            TickStatus::Running => NodeState::Running,
            TickStatus::Failure => NodeState::Failure,
        }
    }
}

impl NodeState {
    pub fn letter(self) -> char {
        match self {
            NodeState::NotTicked => 'N',
            NodeState::Success => 'S',
            NodeState::Running => 'R',
            NodeState::Failure => 'F',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Sequence,
    Fallback,
    Parallel {
        /// Successes needed for the parallel to succeed. It fails once
        /// more than `children − threshold` children have failed.
        success_threshold: usize,
    },
    Repeat,
    Condition {
        predicate: String,
    },
    Action {
        command: String,
    },
    SotAction {
        task: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BtNode {
    pub id: String,
    pub label: String,
    pub kind: NodeKind,
    /// Scoped composites clean their subtree's tasks out of the
    /// registry when they return a final status.
    pub scoped: bool,
    pub children: Vec<BtNode>,
}

impl BtNode {
    pub fn leaf(id: &str, label: &str, kind: NodeKind) -> Self {
        BtNode {
            id: id.to_string(),
            label: label.to_string(),
            kind,
            scoped: false,
            children: Vec::new(),
        }
    }

    pub fn composite(id: &str, label: &str, kind: NodeKind, children: Vec<BtNode>) -> Self {
        BtNode {
            id: id.to_string(),
            label: label.to_string(),
            kind,
            scoped: false,
            children,
        }
    }

    pub fn scoped(mut self) -> Self {
        self.scoped = true;
        self
    }

    pub fn is_leaf_kind(&self) -> bool {
        matches!(
            self.kind,
            NodeKind::Condition { .. } | NodeKind::Action { .. } | NodeKind::SotAction { .. }
        )
    }

    /// Pre-order walk.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a BtNode)) {
        f(self);
        for c in &self.children {
            c.visit(f);
        }
    }

    pub fn node_ids(&self) -> Vec<String> {
        let mut ids = Vec::new();
        self.visit(&mut |n| ids.push(n.id.clone()));
        ids
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let mut seen = BTreeSet::new();
        let mut err = None;
        self.visit(&mut |n| {
            if err.is_some() {
                return;
            }
            if !seen.insert(n.id.clone()) {
                err = Some(format!("duplicate node id '{}'", n.id));
                return;
            }
            match &n.kind {
                NodeKind::Sequence | NodeKind::Fallback => {
                    if n.children.is_empty() {
                        err = Some(format!("composite '{}' has no children", n.id));
                    }
                }
                NodeKind::Parallel { success_threshold } => {
                    if n.children.is_empty() {
                        err = Some(format!("parallel '{}' has no children", n.id));
                    } else if *success_threshold == 0 || *success_threshold > n.children.len() {
                        err = Some(format!(
                            "parallel '{}' threshold {} out of range 1..={}",
                            n.id,
                            success_threshold,
                            n.children.len()
                        ));
                    }
                }
                NodeKind::Repeat => {
                    if n.children.len() != 1 {
                        err = Some(format!("repeat '{}' needs exactly one child", n.id));
                    }
                }
                _ => {
                    if !n.children.is_empty() {
                        err = Some(format!("leaf '{}' cannot have children", n.id));
                    }
                    if n.scoped {
                        err = Some(format!("leaf '{}' cannot be a scope", n.id));
                    }
                }
            }
        });
        match err {
            Some(e) => Err(EngineError::InvalidTree(e)),
            None => Ok(()),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("invalid tree: {0}")]
    InvalidTree(String),
    #[error("unknown predicate '{0}'")]
    UnknownPredicate(String),
    #[error("unknown command '{0}'")]
    UnknownCommand(String),
    #[error("unknown task '{0}'")]
    UnknownTask(String),
    #[error("tick invariant violated: {0}")]
    Invariant(String),
}

/// What leaves talk to. `activation` is true on the first tick after
/// the node last reported a final status (or was never ticked).
pub trait LeafHost {
    fn now(&self) -> f64;
    fn eval_condition(&mut self, predicate: &str) -> Result<bool, EngineError>;
    fn tick_action(
        &mut self,
        node_id: &str,
        command: &str,
        activation: bool,
    ) -> Result<TickStatus, EngineError>;
    fn tick_sot_action(
        &mut self,
        node_id: &str,
        task: &str,
        activation: bool,
    ) -> Result<TickStatus, EngineError>;
    /// Drop a task from the active registry. False when it was absent.
    fn remove_task(&mut self, task: &str) -> bool;
}

#[derive(Debug, Clone)]
pub struct ScopeFinalized {
    pub node: String,
    pub removed: Vec<String>,
    /// Tasks the scope expected to remove that were already gone.
    pub missing: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct TickTrace {
    pub tick: u64,
    pub root: TickStatus,
    pub statuses: BTreeMap<String, NodeState>,
    pub finalized: Vec<ScopeFinalized>,
    pub warnings: Vec<String>,
}

pub struct Engine {
    root: BtNode,
    prev: BTreeMap<String, NodeState>,
    scope_sets: BTreeMap<String, BTreeSet<String>>,
    ticks: u64,
}

struct TickCtx {
    statuses: BTreeMap<String, NodeState>,
    scope_stack: Vec<String>,
    finalized: Vec<ScopeFinalized>,
    warnings: Vec<String>,
}

impl Engine {
    pub fn new(root: BtNode) -> Result<Self, EngineError> {
        root.validate()?;
        Ok(Engine {
            root,
            prev: BTreeMap::new(),
            scope_sets: BTreeMap::new(),
            ticks: 0,
        })
    }

    pub fn root(&self) -> &BtNode {
        &self.root
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    /// Task ids currently tracked by any scope (for hygiene checks).
    pub fn tracked_tasks(&self) -> BTreeSet<String> {
        self.scope_sets.values().flatten().cloned().collect()
    }

    pub fn tick(&mut self, host: &mut dyn LeafHost) -> Result<TickTrace, EngineError> {
        self.ticks += 1;
        let mut ctx = TickCtx {
            statuses: BTreeMap::new(),
            scope_stack: Vec::new(),
            finalized: Vec::new(),
            warnings: Vec::new(),
        };
        let root_status = tick_node(&self.root, host, &self.prev, &mut self.scope_sets, &mut ctx)?;
        for (id, st) in &ctx.statuses {
            self.prev.insert(id.clone(), *st);
        }
        // Halt pass: a node that was Running but did not get ticked this
        // round has been preempted by a sibling switch. Reset it so its
        // next tick is a fresh activation, and finalize preempted
        // scopes so their subtree's tasks leave the control problem.
        let mut halted: Vec<(String, bool)> = Vec::new();
        self.root.visit(&mut |n| {
            if !ctx.statuses.contains_key(&n.id)
                && self.prev.get(&n.id).copied() == Some(NodeState::Running)
            {
                halted.push((n.id.clone(), n.scoped));
            }
        });
        for (id, scoped) in halted {
            self.prev.insert(id.clone(), NodeState::NotTicked);
            if scoped {
                finalize_scope(&id, host, &mut self.scope_sets, &mut ctx);
            }
        }
        Ok(TickTrace {
            tick: self.ticks,
            root: root_status,
            statuses: ctx.statuses,
            finalized: ctx.finalized,
            warnings: ctx.warnings,
        })
    }
}

fn tick_node(
    node: &BtNode,
    host: &mut dyn LeafHost,
    prev: &BTreeMap<String, NodeState>,
    scope_sets: &mut BTreeMap<String, BTreeSet<String>>,
    ctx: &mut TickCtx,
) -> Result<TickStatus, EngineError> {
    let was = prev.get(&node.id).copied().unwrap_or(NodeState::NotTicked);
    let activation = was != NodeState::Running;

    if node.scoped {
        if activation {
            scope_sets.insert(node.id.clone(), BTreeSet::new());
        } else {
            scope_sets.entry(node.id.clone()).or_default();
        }
        ctx.scope_stack.push(node.id.clone());
    }

    let status = match &node.kind {
        NodeKind::Sequence => {
            let mut out = TickStatus::Success;
            for c in &node.children {
                let s = tick_node(c, host, prev, scope_sets, ctx)?;
                if s != TickStatus::Success {
                    out = s;
                    break;
                }
            }
            out
        }
        NodeKind::Fallback => {
            let mut out = TickStatus::Failure;
            for c in &node.children {
                let s = tick_node(c, host, prev, scope_sets, ctx)?;
                if s != TickStatus::Failure {
                    out = s;
                    break;
                }
            }
            out
        }
        NodeKind::Parallel { success_threshold } => {
            // All children get ticked every time; no short-circuit.
            let mut succ = 0;
            let mut fail = 0;
            for c in &node.children {
                match tick_node(c, host, prev, scope_sets, ctx)? {
                    TickStatus::Success => succ += 1,
                    TickStatus::Failure => fail += 1,
                    TickStatus::Running => {}
                }
            }
            if succ >= *success_threshold {
                TickStatus::Success
            } else if fail > node.children.len() - success_threshold {
                TickStatus::Failure
            } else {
                TickStatus::Running
            }
        }
        NodeKind::Repeat => {
            // The child restarts by itself on the next tick because its
            // previous status was final.
            tick_node(&node.children[0], host, prev, scope_sets, ctx)?;
            TickStatus::Running
        }
        NodeKind::Condition { predicate } => {
            if host.eval_condition(predicate)? {
                TickStatus::Success
            } else {
                TickStatus::Failure
            }
        }
        NodeKind::Action { command } => host.tick_action(&node.id, command, activation)?,
        NodeKind::SotAction { task } => {
            let s = host.tick_sot_action(&node.id, task, activation)?;
            // The task is registered while this leaf runs; every
            // enclosing scope becomes responsible for it.
            for scope in &ctx.scope_stack {
                scope_sets
                    .get_mut(scope)
                    .expect("scope on stack")
                    .insert(task.clone());
            }
            s
        }
    };

    if node.scoped {
        ctx.scope_stack.pop();
        if status != TickStatus::Running {
            finalize_scope(&node.id, host, scope_sets, ctx);
        }
    }

    ctx.statuses.insert(node.id.clone(), status.into());
    Ok(status)
}

fn finalize_scope(
    node_id: &str,
    host: &mut dyn LeafHost,
    scope_sets: &mut BTreeMap<String, BTreeSet<String>>,
    ctx: &mut TickCtx,
) {
    let tasks: Vec<String> = scope_sets
        .get_mut(node_id)
        .map(|s| std::mem::take(s).into_iter().collect())
        .unwrap_or_default();
    let mut removed = Vec::new();
    let mut missing = Vec::new();
    for t in &tasks {
        if host.remove_task(t) {
            removed.push(t.clone());
        } else {
            missing.push(t.clone());
            ctx.warnings.push(format!(
                "scope '{}' expected task '{}' in the registry",
                node_id, t
            ));
        }
        // Outer scopes no longer need to clean it up either way.
        for set in scope_sets.values_mut() {
            set.remove(t);
        }
    }
    ctx.finalized.push(ScopeFinalized {
        node: node_id.to_string(),
        removed,
        missing,
    });
}
