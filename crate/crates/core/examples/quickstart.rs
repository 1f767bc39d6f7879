// Roles, users, a function and its policy, then checks before and after a
// revocation.

use drbac::{AdminScope, Engine, FunctionDef, FunctionId, Role, RoleId, User, UserId};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let admin = AdminScope::root("ops");
    let mut engine = Engine::in_memory();

    let auditor: RoleId = "auditor".parse()?;
    let alice: UserId = "alice".parse()?;
    let bob: UserId = "bob".parse()?;
    let release: FunctionId = "release".parse()?;

    engine.role_add(&admin, Role::new(auditor.clone()).with_description("may release escrow"))?;
    engine.user_add(&admin, User::new(alice.clone()))?;
    engine.user_add(&admin, User::new(bob.clone()))?;
    engine.function_register(&admin, FunctionDef::new(release.clone(), "Escrow", "release"))?;
    engine.assign_role(&admin, &alice, &auditor)?;
    engine.policy_bind(&admin, &release, &auditor)?;

    for user in [&alice, &bob] {
        let d = engine.check_authorization(user, &release);
        println!("{user} -> {release}: allowed={} reason={} cost={}", d.allowed, d.reason, d.cost.total);
    }

    engine.revoke_role(&admin, &alice, &auditor)?;
    let d = engine.check_authorization(&alice, &release);
    println!("after revoke: alice allowed={} ({})", d.allowed, d.reason);
    assert!(!d.allowed);

    println!("ledger head: seq {} hash {}", engine.head().sequence, engine.head().hash);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
