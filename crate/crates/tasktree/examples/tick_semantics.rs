//! Composite tick rules on a scripted host.
//!
//! A guard fallback sits above a scoped work sequence. Watch the
//! statuses as the guard preempts the running work, the scope cleans
//! its task out of the registry, and the preempted branch later
//! restarts from scratch (memoryless semantics: nothing resumes).
//!
//!     cargo run --example tick_semantics

use std::collections::{BTreeMap, BTreeSet};

use tasktree::bt::{Engine, EngineError, LeafHost, NodeState, TickStatus};
use tasktree::dsl;

const TREE: &str = r#"
fallback {
  seq { cond "Alarm"  act "Handle Alarm" }
  sot_seq "Work" { sot_act "Reach"  act "Close" }
}
"#;

/// Leaves scripted from two lookup tables. Actions and tasks report
/// Running until their flag in `done` flips; every activation is
/// counted so re-dispatch is visible.
struct ScriptHost {
    time: f64,
    flags: BTreeMap<&'static str, bool>,
    done: BTreeMap<&'static str, bool>,
    registry: BTreeSet<String>,
    activations: BTreeMap<String, usize>,
}

impl ScriptHost {
    fn new() -> Self {
        ScriptHost {
            time: 0.0,
            flags: BTreeMap::new(),
            done: BTreeMap::new(),
            registry: BTreeSet::new(),
            activations: BTreeMap::new(),
        }
    }

    fn finished(&self, name: &str) -> TickStatus {
        if self.done.get(name).copied().unwrap_or(false) {
            TickStatus::Success
        } else {
            TickStatus::Running
        }
    }
}

impl LeafHost for ScriptHost {
    fn now(&self) -> f64 {
        self.time
    }

    fn eval_condition(&mut self, predicate: &str) -> Result<bool, EngineError> {
        Ok(self.flags.get(predicate).copied().unwrap_or(false))
    }

    fn tick_action(
        &mut self,
        _node_id: &str,
        command: &str,
        activation: bool,
    ) -> Result<TickStatus, EngineError> {
        if activation {
            *self.activations.entry(command.to_string()).or_default() += 1;
        }
        Ok(self.finished(command))
    }

    fn tick_sot_action(
        &mut self,
        _node_id: &str,
        task: &str,
        activation: bool,
    ) -> Result<TickStatus, EngineError> {
        if activation || !self.registry.contains(task) {
            self.registry.insert(task.to_string());
            *self.activations.entry(task.to_string()).or_default() += 1;
        }
        Ok(self.finished(task))
    }

    fn remove_task(&mut self, task: &str) -> bool {
        self.registry.remove(task)
    }
}

fn main() {
    let parsed = dsl::parse(TREE).expect("tree parses");
    let ids = parsed.root.node_ids();
    let mut engine = Engine::new(parsed.root).expect("tree validates");
    let mut host = ScriptHost::new();

    println!("nodes: {}\n", ids.join("  "));
    println!("{:<4} {:>6}  {:<16} {:<18} note", "tick", "root", "statuses", "registry");

    let script: Vec<(&str, Box<dyn Fn(&mut ScriptHost)>)> = vec![
        ("work starts, Reach registers", Box::new(|_| {})),
        ("Reach converges, Close dispatched", Box::new(|h| {
            h.done.insert("Reach", true);
        })),
        ("alarm! work preempted, scope cleans up", Box::new(|h| {
            h.flags.insert("Alarm", true);
        })),
        ("alarm persists", Box::new(|_| {})),
        ("alarm clears, work restarts from scratch", Box::new(|h| {
            h.flags.insert("Alarm", false);
            h.done.insert("Reach", false);
        })),
        ("Reach converges again", Box::new(|h| {
            h.done.insert("Reach", true);
        })),
        ("Close finishes, root succeeds", Box::new(|h| {
            h.done.insert("Close", true);
        })),
    ];

    for (note, prepare) in script {
        prepare(&mut host);
        host.time += 0.1;
        let trace = engine.tick(&mut host).expect("tick");
        let letters: String = ids
            .iter()
            .map(|id| {
                trace
                    .statuses
                    .get(id)
                    .copied()
                    .unwrap_or(NodeState::NotTicked)
                    .letter()
            })
            .collect();
        let registry = host.registry.iter().cloned().collect::<Vec<_>>().join(",");
        println!(
            "{:<4} {:>6?}  {:<16} {:<18} {}",
            trace.tick, trace.root, letters, format!("{{{registry}}}"), note
        );
        for f in &trace.finalized {
            println!("       scope '{}' finalized, removed {:?}", f.node, f.removed);
        }
    }

    println!("\nactivations (re-entry after preemption dispatches again):");
    for (name, count) in &host.activations {
        println!("  {:<14} {}", name, count);
    }
}
