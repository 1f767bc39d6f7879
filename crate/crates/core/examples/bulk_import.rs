// Importing users from a JSON Lines file, then a rejected re-import.

use drbac::import::{import_users, BulkImportFile};
use drbac::{AdminScope, Engine, Role, RoleId};

const FILE: &str = r#"{"format_version":1}
{"id":"alice","external_ref":"idp|1001","metadata":{"dept":"finance"},"roles":["auditor"]}
{"id":"bob","external_ref":"idp|1002","roles":["auditor","operator"]}
{"external_ref":"carol"}
"#;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let admin = AdminScope::root("identity-sync");
    let mut engine = Engine::in_memory();
    for name in ["auditor", "operator"] {
        engine.role_add(&admin, Role::new(RoleId::new(name)?))?;
    }

    let file = BulkImportFile::parse(FILE)?;
    let summary = import_users(&mut engine, &admin, &file)?;
    println!("created={} granted={} (one ledger event, seq {})", summary.created, summary.granted, engine.head().sequence);
    for user in engine.state().user_list() {
        println!("  {} ref={:?} roles={:?}", user.id, user.external_ref, engine.state().get_user_roles(&user.id)?);
    }

    let err = import_users(&mut engine, &admin, &file).unwrap_err();
    println!("re-import: {err}");
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
