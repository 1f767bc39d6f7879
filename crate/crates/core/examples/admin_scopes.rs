// Two administrator groups with disjoint managers. Out-of-scope mutations
// are refused and leave no ledger event.

use drbac::{AdminScope, Engine, EngineError, FunctionDef, ManagerKind, Role, RoleId, User, UserId};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let identity = AdminScope::new("identity-team", [ManagerKind::UserMgr]).expect("non-empty scope");
    let security = AdminScope::new("security-team", [ManagerKind::RoleMgr, ManagerKind::FunctionMgr, ManagerKind::PolicyMgr])
        .expect("non-empty scope");
    let mut engine = Engine::in_memory();

    engine.role_add(&security, Role::new(RoleId::new("auditor")?))?;
    engine.function_register(&security, FunctionDef::new("release".parse()?, "Escrow", "release"))?;
    engine.user_add(&identity, User::new(UserId::new("alice")?))?;
    engine.assign_role(&identity, &"alice".parse()?, &"auditor".parse()?)?;

    let before = engine.head().sequence;
    match engine.policy_bind(&identity, &"release".parse()?, &"auditor".parse()?) {
        Err(EngineError::ScopeViolation { admin_group, manager }) => {
            println!("{admin_group} may not use {manager}");
        }
        other => panic!("expected a scope violation, got {other:?}"),
    }
    assert_eq!(engine.head().sequence, before);

    engine.policy_bind(&security, &"release".parse()?, &"auditor".parse()?)?;
    for event in engine.store().load()? {
        println!("#{} {:<18} by {}", event.sequence, event.operation, event.actor);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
