// Swapping the apply logic without touching stored data. The built-in
// second version replays the same log; a third is registered here.

use std::sync::Arc;

use drbac::ledger::{replay, ApplyLogic, LogicRegistry, LogicVersion, MutationEvent, ReplayError, TypedLogic};
use drbac::{AdminScope, Engine, EngineState, Role, RoleId};

/// Wraps the typed logic and logs each operation as it is applied.
struct Narrating;

impl ApplyLogic for Narrating {
    fn version(&self) -> LogicVersion {
        LogicVersion {
            version_label: "v3".into(),
            replay_semantics: "typed-mutation, narrated".into(),
        }
    }

    fn apply(&self, state: &mut EngineState, event: &MutationEvent) -> Result<(), ReplayError> {
        println!("  v3 applying #{} {}", event.sequence, event.operation);
        TypedLogic.apply(state, event)
    }
}

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let admin = AdminScope::root("ops");
    let mut engine = Engine::in_memory();
    for name in ["auditor", "operator"] {
        engine.role_add(&admin, Role::new(RoleId::new(name)?))?;
    }
    engine.role_update(&admin, &"auditor".parse()?, "second line review", Default::default())?;
    let events = engine.store().load()?;

    let mut registry = LogicRegistry::default();
    registry.register(Arc::new(Narrating))?;
    for v in registry.versions() {
        let state = replay(&events, registry.get(&v.version_label)?.as_ref())?;
        println!("{} ({}): identical={}", v.version_label, v.replay_semantics, &state == engine.state());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
