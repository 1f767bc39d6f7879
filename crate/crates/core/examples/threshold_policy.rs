// An m-of-p policy: two of three signatory roles are needed.

use drbac::{AdminScope, Engine, FunctionDef, FunctionId, PolicyMode, Role, RoleId, User, UserId};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let admin = AdminScope::root("treasury");
    let mut engine = Engine::in_memory();
    let withdraw = FunctionId::new("Vault.withdraw")?;
    engine.function_register(&admin, FunctionDef::qualified("Vault", "withdraw")?)?;

    let signers = ["cfo", "controller", "board"];
    for name in signers {
        let role = RoleId::new(name)?;
        engine.role_add(&admin, Role::new(role.clone()))?;
        engine.policy_bind(&admin, &withdraw, &role)?;
    }
    engine.policy_set_mode(&admin, &withdraw, PolicyMode::MOfP { m: 2 })?;

    let dana = UserId::new("dana")?;
    engine.user_add(&admin, User::new(dana.clone()))?;
    engine.assign_role(&admin, &dana, &RoleId::new("cfo")?)?;
    let d = engine.check_authorization(&dana, &withdraw);
    println!("one signatory: allowed={} reason={} matched={:?}", d.allowed, d.reason, d.matched_roles);

    engine.assign_role(&admin, &dana, &RoleId::new("board")?)?;
    let d = engine.check_authorization(&dana, &withdraw);
    println!("two signatories: allowed={} matched={:?}", d.allowed, d.matched_roles);

    // A threshold above the number of bound roles is refused.
    let err = engine.policy_set_mode(&admin, &withdraw, PolicyMode::MOfP { m: 4 }).unwrap_err();
    println!("m=4 rejected: {err}");
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
