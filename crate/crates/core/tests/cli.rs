use std::path::Path;
use std::process::Command;

struct Out {
    code: i32,
    stdout: String,
    stderr: String,
}

fn drbac(log: &Path, args: &[&str]) -> Out {
    let out = Command::new(env!("CARGO_BIN_EXE_drbac"))
        .arg("--log-path")
        .arg(log)
        .args(args)
        .env_remove("DRBAC_LOG")
        .env_remove("DRBAC_TOKEN")
        .output()
        .unwrap();
    Out {
        code: out.status.code().unwrap(),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn setup(log: &Path) {
    for args in [
        &["role", "add", "auditor", "--description", "reads the books"][..],
        &["user", "add", "alice", "--external-ref", "idp|1"],
        &["user", "add", "bob"],
        &["fn", "add", "release", "--contract", "Escrow"],
        &["grant", "alice", "auditor"],
        &["bind", "release", "auditor"],
    ] {
        let out = drbac(log, args);
        assert_eq!(out.code, 0, "{args:?}: {}", out.stderr);
    }
}

#[test]
fn check_and_whatif_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("d.log");
    setup(&log);
    let out = drbac(&log, &["check", "alice", "release"]);
    assert_eq!(out.code, 0);
    assert!(out.stdout.starts_with("allow"), "{}", out.stdout);
    assert_eq!(drbac(&log, &["check", "bob", "release"]).code, 1);
    let out = drbac(&log, &["whatif", "bob", "release", "--with-role", "auditor"]);
    assert_eq!(out.code, 0);
    assert!(out.stdout.starts_with("allow"));
    assert_eq!(drbac(&log, &["check", "bob", "release"]).code, 1);
    let out = drbac(&log, &["--json", "check", "alice", "release"]);
    let v: serde_json::Value = serde_json::from_str(&out.stdout).unwrap();
    assert_eq!(v["matched_roles"], serde_json::json!(["auditor"]));
}

#[test]
fn listings_and_mode() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("d.log");
    setup(&log);
    assert!(drbac(&log, &["role", "ls"]).stdout.contains("auditor\treads the books"));
    let users = drbac(&log, &["user", "ls"]).stdout;
    assert!(users.contains("alice\tactive\t[auditor]"), "{users}");
    assert_eq!(drbac(&log, &["user", "deactivate", "alice"]).code, 0);
    assert_eq!(drbac(&log, &["check", "alice", "release"]).code, 1);
    assert_eq!(drbac(&log, &["user", "activate", "alice"]).code, 0);
    assert_eq!(drbac(&log, &["mode", "release", "mofp:1"]).code, 0);
    assert!(drbac(&log, &["fn", "ls"]).stdout.contains("mofp:1 [auditor]"));
    let out = drbac(&log, &["mode", "release", "mofp:2"]);
    assert_eq!(out.code, 2);
    assert!(out.stderr.contains("does not fit"));
}

#[test]
fn removal_guards_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("d.log");
    setup(&log);
    let out = drbac(&log, &["role", "rm", "auditor"]);
    assert_eq!(out.code, 2);
    assert!(out.stderr.contains("in use"));
    assert_eq!(drbac(&log, &["revoke", "alice", "auditor"]).code, 0);
    assert_eq!(drbac(&log, &["unbind", "release", "auditor"]).code, 0);
    assert_eq!(drbac(&log, &["role", "rm", "auditor"]).code, 0);
    assert_eq!(drbac(&log, &["fn", "rm", "release"]).code, 0);
    assert_eq!(drbac(&log, &["user", "rm", "bob"]).code, 0);
    let out = drbac(&log, &["grant", "alice"]);
    assert_eq!(out.code, 2);
    assert!(!out.stderr.is_empty());
    assert!(out.stdout.is_empty());
}

#[test]
fn import_file() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("d.log");
    setup(&log);
    let file = dir.path().join("users.jsonl");
    std::fs::write(
        &file,
        "{\"format_version\":1}\n{\"external_ref\":\"carol\",\"roles\":[\"auditor\"]}\n{\"id\":\"dave\",\"external_ref\":\"idp|2\"}\n",
    )
    .unwrap();
    let out = drbac(&log, &["import", file.to_str().unwrap()]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert_eq!(out.stdout.trim(), "created=2 granted=1");
    assert_eq!(drbac(&log, &["check", "carol", "release"]).code, 0);
    let again = drbac(&log, &["import", file.to_str().unwrap()]);
    assert_eq!(again.code, 2);
    assert!(again.stderr.contains("already exists"));
}

#[test]
fn audit_replay_and_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("d.log");
    setup(&log);
    assert!(drbac(&log, &["audit", "verify"]).stdout.starts_with("ok events=6"));
    let v1 = drbac(&log, &["--json", "replay"]).stdout;
    let v2 = drbac(&log, &["--json", "replay", "--logic", "v2"]).stdout;
    assert_eq!(v1, v2);
    assert!(drbac(&log, &["replay", "--logic", "v2"]).stdout.contains("structural-json"));
    assert_eq!(drbac(&log, &["replay", "--logic", "v9"]).code, 2);

    let snap = dir.path().join("s.snap");
    let out = drbac(&log, &["snapshot", "--out", snap.to_str().unwrap(), "--at", "3"]);
    assert!(out.stdout.starts_with("snapshot seq=3"), "{}", out.stderr);
    let from = drbac(&log, &["--json", "replay", "--from-snapshot", snap.to_str().unwrap()]).stdout;
    assert_eq!(from, v1);

    let text = std::fs::read_to_string(&log).unwrap();
    std::fs::write(&log, text.replacen("\"alice\"", "\"mallo\"", 1)).unwrap();
    let out = drbac(&log, &["audit", "verify"]);
    assert_eq!(out.code, 1);
    assert!(out.stdout.contains("broken at sequence 2"), "{}", out.stdout);
}

#[test]
fn bench_prints_both_series() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("d.log");
    let out = drbac(&log, &["bench", "--roles", "1,4,16", "--trials", "3", "--upgrades", "2"]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert!(out.stdout.contains("dynamic: slope 0.000000/role"), "{}", out.stdout);
    assert!(out.stdout.contains("deploy_static"));
    assert!(out.stdout.contains("2874144"), "{}", out.stdout);
    let json = drbac(&log, &["--json", "bench", "--roles", "1,2", "--trials", "3"]).stdout;
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 2);
    assert_eq!(drbac(&log, &["bench", "--roles", "4,2"]).code, 2);
}

#[test]
fn config_scopes_gate_mutations() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("d.log");
    let cfg = dir.path().join("drbac.toml");
    std::fs::write(&cfg, "[[scopes]]\ngroup = \"sec\"\ntoken = \"s3\"\nmanagers = [\"role_mgr\"]\n").unwrap();
    let c = cfg.to_str().unwrap();
    assert_eq!(drbac(&log, &["--config", c, "role", "add", "x"]).code, 2);
    assert_eq!(drbac(&log, &["--config", c, "--actor", "sec", "--token", "s3", "role", "add", "x"]).code, 0);
    let out = drbac(&log, &["--config", c, "--actor", "sec", "--token", "s3", "user", "add", "u"]);
    assert_eq!(out.code, 2);
    assert!(out.stderr.contains("user_mgr"));
    let text = std::fs::read_to_string(&log).unwrap();
    assert!(text.contains("\"actor\":\"sec\""));
}
