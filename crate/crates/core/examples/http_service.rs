// The HTTP surface, driven in-process: admin calls with an envelope, a
// check, and a refused invoke.

use std::sync::Arc;

use axum::body::Body;
use axum::http::Request;
use drbac::config::Config;
use drbac::dispatcher::{demo, HandlerMode};
use drbac::service::{router, Service};
use drbac::Engine;
use http_body_util::BodyExt;
use tower::ServiceExt;

const CONFIG: &str = r#"
[[scopes]]
group = "ops"
token = "ops-secret"
managers = ["role_mgr", "function_mgr", "user_mgr", "policy_mgr"]
"#;

async fn send(svc: &Arc<Service>, method: &str, uri: &str, body: serde_json::Value) -> Result<(), Box<dyn std::error::Error>> {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(if body.is_null() { Body::empty() } else { Body::from(body.to_string()) })?;
    let resp = router(svc.clone()).oneshot(req).await?;
    let status = resp.status();
    let bytes = resp.into_body().collect().await?.to_bytes();
    println!("{method} {uri} -> {status} {}", String::from_utf8_lossy(&bytes));
    Ok(())
}

fn admin(body: serde_json::Value) -> serde_json::Value {
    serde_json::json!({"actor": "ops", "auth_token": "ops-secret", "body": body})
}

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let config = Config::from_toml(CONFIG)?;
    let svc = Arc::new(Service::new(Engine::in_memory(), config));
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        use serde_json::json;
        send(&svc, "POST", "/roles", admin(json!({"id": "auditor"}))).await?;
        send(&svc, "POST", "/users", admin(json!({"id": "alice"}))).await?;
        send(&svc, "POST", "/users", admin(json!({"id": "bob"}))).await?;
        send(&svc, "POST", "/functions", admin(json!({"id": "release", "target_contract": "Escrow", "function_name": "release"}))).await?;
        send(&svc, "POST", "/users/alice/roles", admin(json!({"role_id": "auditor"}))).await?;
        send(&svc, "POST", "/policies/release/roles", admin(json!({"role_id": "auditor"}))).await?;
        svc.register_handler(&"release".parse()?, demo::echo(), 0, HandlerMode::Concurrent)?;

        send(&svc, "GET", "/check?user=alice&function=release", json!(null)).await?;
        send(&svc, "POST", "/invoke", json!({"user_id": "bob", "function_id": "release", "call_args": "cafe"})).await?;
        send(&svc, "POST", "/invoke", json!({"user_id": "alice", "function_id": "release", "call_args": "cafe"})).await?;
        send(&svc, "DELETE", "/roles/auditor", json!({"actor": "ops", "auth_token": "ops-secret"})).await?;
        send(&svc, "GET", "/audit/verify", json!(null)).await
    })
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
