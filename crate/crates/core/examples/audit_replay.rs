// A file-backed ledger: reopen and replay, snapshot plus tail, and
// detection of an edited line.

use drbac::ledger::{read_log, restore, restore_and_replay, snapshot_at, verify_log_file, FileStore, TypedLogic};
use drbac::{AdminScope, Engine, Role, RoleId, User, UserId};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("drbac.log");
    let admin = AdminScope::root("ops");

    {
        let mut engine = Engine::with_store(Box::new(FileStore::open(&path)?))?;
        for name in ["auditor", "operator", "clerk"] {
            engine.role_add(&admin, Role::new(RoleId::new(name)?))?;
        }
        engine.user_add(&admin, User::new(UserId::new("alice")?))?;
        engine.assign_role(&admin, &"alice".parse()?, &"clerk".parse()?)?;
    }

    let reopened = Engine::with_store(Box::new(FileStore::open(&path)?))?;
    println!("replayed {} events, {} roles", reopened.head().sequence, reopened.state().roles.len());

    let (_, events) = read_log(&path)?;
    let snapshot = snapshot_at(&events, 3, &TypedLogic)?;
    let restored = restore(&snapshot.to_file_contents())?;
    let state = restore_and_replay(&restored, &events[3..], &TypedLogic)?;
    assert_eq!(&state, reopened.state());
    println!("snapshot at 3 + {} tail events matches", events.len() - 3);

    println!("verify: {:?}", verify_log_file(&path)?);
    let text = std::fs::read_to_string(&path)?;
    std::fs::write(&path, text.replacen("\"clerk\"", "\"admin\"", 1))?;
    let broken = verify_log_file(&path)?.unwrap_err();
    println!("after edit: broken at sequence {} ({:?})", broken.sequence, broken.cause);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
