mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request as HttpRequest, StatusCode};
use common::*;
use drbac::config::{Config, ScopeEntry};
use drbac::dispatcher::{demo, HandlerMode};
use drbac::service::{router, Service};
use drbac::{Engine, EngineError, ManagerKind, Role};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn config() -> Config {
    Config {
        scopes: vec![
            ScopeEntry {
                group: "root".into(),
                token: "root-token".into(),
                managers: ManagerKind::ALL.to_vec(),
            },
            ScopeEntry {
                group: "sec".into(),
                token: "sec-token".into(),
                managers: vec![ManagerKind::RoleMgr, ManagerKind::PolicyMgr],
            },
        ],
        ..Config::default()
    }
}

fn service() -> Arc<Service> {
    Arc::new(Service::new(Engine::in_memory(), config()))
}

async fn call(svc: &Arc<Service>, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = HttpRequest::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let resp = router(svc.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

fn env(body: Value) -> Option<Value> {
    Some(json!({"actor": "root", "auth_token": "root-token", "body": body}))
}

fn bare() -> Option<Value> {
    Some(json!({"actor": "root", "auth_token": "root-token"}))
}

async fn escrow(svc: &Arc<Service>) {
    for (uri, body) in [
        ("/roles", json!({"id": "auditor"})),
        ("/users", json!({"id": "alice"})),
        ("/users", json!({"id": "bob"})),
        ("/functions", json!({"id": "release", "target_contract": "Escrow", "function_name": "release"})),
        ("/users/alice/roles", json!({"role_id": "auditor"})),
        ("/policies/release/roles", json!({"role_id": "auditor"})),
    ] {
        let (status, body) = call(svc, Method::POST, uri, env(body)).await;
        assert!(status.is_success(), "{uri}: {status} {body}");
    }
}

#[tokio::test]
async fn health_reports_version() {
    let svc = service();
    let (status, body) = call(&svc, Method::GET, "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["version"], 0);
}

#[tokio::test]
async fn check_allow_and_deny() {
    let svc = service();
    escrow(&svc).await;
    let (status, body) = call(&svc, Method::GET, "/check?user=alice&function=release", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["allowed"], true);
    assert_eq!(body["reason"], "matched");
    assert_eq!(body["matched_roles"], json!(["auditor"]));
    let (status, body) = call(&svc, Method::GET, "/check?user=bob&function=release", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["allowed"], false);
    assert_eq!(body["reason"], "no_role_intersection");
}

#[tokio::test]
async fn invoke_maps_deny_to_403() {
    let svc = service();
    escrow(&svc).await;
    svc.register_handler(&fid("release"), demo::echo(), 10, HandlerMode::Concurrent).unwrap();
    let (status, body) = call(&svc, Method::POST, "/invoke", Some(json!({"user_id": "bob", "function_id": "release", "call_args": "00ff"}))).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    assert_eq!(body["reason"], "no_role_intersection");
    assert_eq!(body["user_id"], "bob");
    assert!(body["request_id"].is_string());
    let (status, body) = call(&svc, Method::POST, "/invoke", Some(json!({"user_id": "alice", "function_id": "release", "call_args": "00ff"}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["result"], "00ff");
    assert_eq!(svc.dispatcher().executions(&fid("release")), 1);
}

#[tokio::test]
async fn invoke_without_handler_is_501() {
    let svc = service();
    escrow(&svc).await;
    let (status, body) = call(&svc, Method::POST, "/invoke", Some(json!({"user_id": "alice", "function_id": "release"}))).await;
    assert_eq!(status, StatusCode::NOT_IMPLEMENTED);
    assert_eq!(body["error"], "no_handler");
}

#[tokio::test]
async fn removing_a_role_in_use_conflicts() {
    let svc = service();
    escrow(&svc).await;
    let (status, body) = call(&svc, Method::DELETE, "/roles/auditor", bare()).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"], "role_in_use");
    assert_eq!(body["users"], json!(["alice"]));
    assert_eq!(body["functions"], json!(["release"]));
    let (status, _) = call(&svc, Method::DELETE, "/roles/ghost", bare()).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn credentials_and_scopes_are_enforced() {
    let svc = service();
    escrow(&svc).await;
    let n = svc.ledger_sequence();
    let wrong = Some(json!({"actor": "root", "auth_token": "nope", "body": {"id": "x"}}));
    let (status, body) = call(&svc, Method::POST, "/roles", wrong).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    assert_eq!(body["error"], "unauthenticated");
    let sec = Some(json!({"actor": "sec", "auth_token": "sec-token", "body": {"id": "carol"}}));
    let (status, body) = call(&svc, Method::POST, "/users", sec).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    assert_eq!(body["error"], "scope_violation");
    assert_eq!(body["manager"], "user_mgr");
    assert_eq!(svc.ledger_sequence(), n);
    let sec = Some(json!({"actor": "sec", "auth_token": "sec-token", "body": {"id": "clerk"}}));
    assert_eq!(call(&svc, Method::POST, "/roles", sec).await.0, StatusCode::CREATED);
}

#[tokio::test]
async fn malformed_requests_are_400() {
    let svc = service();
    let (status, _) = call(&svc, Method::POST, "/roles", Some(json!({"actor": "root"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&svc, Method::GET, "/check?user=a%20b&function=f", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&svc, Method::POST, "/roles", env(json!({"id": ""}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn policy_mode_and_unbind() {
    let svc = service();
    escrow(&svc).await;
    call(&svc, Method::POST, "/roles", env(json!({"id": "treasurer"}))).await;
    call(&svc, Method::POST, "/policies/release/roles", env(json!({"role_id": "treasurer"}))).await;
    let (status, body) = call(&svc, Method::PUT, "/policies/release/mode", env(json!({"kind": "m_of_p", "m": 2}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["mode"], json!({"kind": "m_of_p", "m": 2}));
    let (_, body) = call(&svc, Method::GET, "/check?user=alice&function=release", None).await;
    assert_eq!(body["reason"], "threshold_not_met");
    let (status, body) = call(&svc, Method::DELETE, "/policies/release/roles/treasurer", bare()).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"], "threshold_violation");
    let (status, _) = call(&svc, Method::PUT, "/policies/release/mode", env(json!({"kind": "any_of"}))).await;
    assert_eq!(status, StatusCode::OK);
    let (status, body) = call(&svc, Method::DELETE, "/policies/release/roles/treasurer", bare()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["required_roles"], json!(["auditor"]));
}

#[tokio::test]
async fn revoke_takes_effect_immediately() {
    let svc = service();
    escrow(&svc).await;
    let (status, body) = call(&svc, Method::DELETE, "/users/alice/roles/auditor", bare()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!([]));
    let (_, body) = call(&svc, Method::GET, "/check?user=alice&function=release", None).await;
    assert_eq!(body["allowed"], false);
}

#[tokio::test]
async fn whatif_does_not_advance_the_ledger() {
    let svc = service();
    escrow(&svc).await;
    let n = svc.ledger_sequence();
    let (status, body) = call(&svc, Method::GET, "/whatif?user=bob&function=release&with_role=auditor", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["allowed"], true);
    assert_eq!(svc.ledger_sequence(), n);
    let (_, body) = call(&svc, Method::GET, "/check?user=bob&function=release", None).await;
    assert_eq!(body["allowed"], false);
}

#[tokio::test]
async fn import_is_atomic() {
    let svc = service();
    escrow(&svc).await;
    let users_before = call(&svc, Method::GET, "/users", None).await.1;
    let bad = json!({"format_version": 1, "users": [
        {"external_ref": "carol", "roles": ["auditor"]},
        {"external_ref": "dave", "roles": ["ghost"]}
    ]});
    let (status, body) = call(&svc, Method::POST, "/import", env(bad)).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body, json!({"error": "unknown_role_in_import", "role": "ghost", "line": 3}));
    assert_eq!(call(&svc, Method::GET, "/users", None).await.1, users_before);

    let good = json!({"format_version": 1, "users": [
        {"external_ref": "carol", "roles": ["auditor"]},
        {"external_ref": "dave", "metadata": {"org": "ops"}}
    ]});
    let (status, body) = call(&svc, Method::POST, "/import", env(good.clone())).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!({"created": 2, "granted": 1}));
    let (status, body) = call(&svc, Method::POST, "/import", env(good)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"], "duplicate_user_in_import");
}

#[tokio::test]
async fn audit_verify_reports_head() {
    let svc = service();
    escrow(&svc).await;
    let (status, body) = call(&svc, Method::GET, "/audit/verify", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["ok"], true);
    assert_eq!(body["sequence"], 6);
}

/// The same script through HTTP and directly on an engine gives the same
/// errors, decisions and final state.
#[tokio::test]
async fn endpoints_mirror_the_managers() {
    let svc = service();
    let mut direct = Engine::in_memory();
    let s = root();
    let expect_err = |r: Result<(), EngineError>| r.err().map(|e| serde_json::to_value(e).unwrap());

    let script: Vec<(Method, &str, Option<Value>, Option<Value>)> = vec![
        (Method::POST, "/roles", env(json!({"id": "auditor"})), expect_err(direct.role_add(&s, Role::new(rid("auditor"))).map(drop))),
        (Method::POST, "/roles", env(json!({"id": "auditor"})), expect_err(direct.role_add(&s, Role::new(rid("auditor"))).map(drop))),
        (Method::POST, "/users", env(json!({"id": "alice"})), expect_err(direct.user_add(&s, drbac::User::new(uid("alice"))).map(drop))),
        (Method::POST, "/users/alice/roles", env(json!({"role_id": "ghost"})), expect_err(direct.assign_role(&s, &uid("alice"), &rid("ghost")))),
        (Method::POST, "/users/alice/roles", env(json!({"role_id": "auditor"})), expect_err(direct.assign_role(&s, &uid("alice"), &rid("auditor")))),
        (Method::POST, "/users/alice/roles", env(json!({"role_id": "auditor"})), expect_err(direct.assign_role(&s, &uid("alice"), &rid("auditor")))),
        (Method::DELETE, "/users/alice", bare(), expect_err(direct.user_remove(&s, &uid("alice")))),
        (Method::POST, "/policies/f/roles", env(json!({"role_id": "auditor"})), expect_err(direct.policy_bind(&s, &fid("f"), &rid("auditor")))),
        (Method::PUT, "/users/alice/active", env(json!({"active": false})), expect_err(direct.user_set_active(&s, &uid("alice"), false))),
    ];
    for (method, uri, body, want) in script {
        let (status, got) = call(&svc, method.clone(), uri, body).await;
        match want {
            Some(err) => assert_eq!(got, err, "{method} {uri}"),
            None => assert!(status.is_success(), "{method} {uri}: {status} {got}"),
        }
    }
    assert_eq!(svc.snapshot().canonical_json(), direct.state().canonical_json());
    let (_, via_http) = call(&svc, Method::GET, "/check?user=alice&function=f", None).await;
    let d = direct.check_authorization(&uid("alice"), &fid("f"));
    assert_eq!(via_http, serde_json::to_value(d).unwrap());
}
