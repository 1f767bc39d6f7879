// Business handlers behind the permissions check, with the delegation
// trace of one allowed and one denied call.

use drbac::dispatcher::{demo, HandlerMode, InvokeError};
use drbac::managers::RecordingTracer;
use drbac::{AdminScope, Dispatcher, Engine, FunctionDef, Request, Role, User};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let admin = AdminScope::root("ops");
    let mut engine = Engine::in_memory();
    engine.role_add(&admin, Role::new("teller".parse()?))?;
    engine.user_add(&admin, User::new("alice".parse()?))?;
    engine.user_add(&admin, User::new("mallory".parse()?))?;
    engine.assign_role(&admin, &"alice".parse()?, &"teller".parse()?)?;
    engine.function_register(&admin, FunctionDef::new("pay".parse()?, "Ledger", "pay"))?;
    engine.policy_bind(&admin, &"pay".parse()?, &"teller".parse()?)?;

    let dispatcher = Dispatcher::new(*engine.schedule());
    let (handler, runs) = demo::counter();
    dispatcher.register_target(engine.state(), &"pay".parse()?, handler, 2_000, HandlerMode::Serialized)?;

    for user in ["alice", "mallory"] {
        let mut trace = RecordingTracer::default();
        let req = Request::new(user.parse()?, "pay".parse()?, b"100".to_vec());
        let result = dispatcher.invoke_traced(engine.state(), &req, &mut trace);
        match result {
            Ok(out) => println!("{user}: ok {}", String::from_utf8_lossy(&out)),
            Err(InvokeError::Authorization(e)) => println!("{user}: refused ({})", e.reason),
            Err(e) => println!("{user}: {e}"),
        }
        for step in &trace.steps {
            println!("    {}", serde_json::to_string(step)?);
        }
    }
    println!("handler runs: {}", runs.load(std::sync::atomic::Ordering::SeqCst));
    for record in dispatcher.journal() {
        println!("journal: {} {:?} total_cost={}", record.user_id, record.outcome, record.total_cost);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
