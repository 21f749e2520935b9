//! Deterministic fixed-step simulation host: world model, loop
//! schedule, behavior-tree leaf bindings, and the run loop itself.

mod host;
mod runner;
mod world;

pub use host::{SimHost, SimOutcome};
pub use runner::{
    run_scenario, status_str, HygieneViolation, RunArtifacts, Schedule, SimError, TraceRecord,
};
pub use world::{Attachment, CubePose, PlaceTarget, Table, WorldState, CUBE_EDGE};
