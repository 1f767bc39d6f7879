//! Command-line administration over a log file.
//!
//! Every invocation replays the log, performs at most one mutation and
//! exits. Exit status is 0 on success or allow, 1 on deny (or a failed
//! audit), 2 on any error.

use std::collections::BTreeMap;
use std::io::Write;
use std::num::NonZeroU64;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{Config, ENV_LOG};
use crate::cost::{bench_scaling, deployment_cost_dynamic, deployment_cost_static};
use crate::import::{import_users, BulkImportFile};
use crate::ledger::{read_log, restore, restore_and_replay, snapshot_at, verify_log_file, FileStore, LogicRegistry, Snapshot};
use crate::managers::{AdminScope, Engine};
use crate::model::{Decision, FunctionDef, FunctionId, Metadata, Role, RoleId, User, UserId};
use crate::policy::PolicyMode;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DENY: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "drbac", version, about = "Dynamic role-based access control")]
pub struct Cli {
    /// Event log to read and append to.
    #[arg(long, global = true, env = ENV_LOG, default_value = "drbac.log")]
    pub log_path: PathBuf,
    /// Admin group recorded as the actor of mutations.
    #[arg(long, global = true, default_value = "cli")]
    pub actor: String,
    /// Token for `--actor` when a config with scopes is given.
    #[arg(long, global = true, env = "DRBAC_TOKEN")]
    pub token: Option<String>,
    /// TOML config. When it defines scopes, mutations need a matching
    /// `--actor` and `--token`.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Print results as JSON.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Manage roles.
    #[command(subcommand)]
    Role(RoleCmd),
    /// Manage users.
    #[command(subcommand)]
    User(UserCmd),
    /// Manage functions.
    #[command(subcommand, name = "fn")]
    Function(FnCmd),
    /// Give a user a role.
    Grant { user: String, role: String },
    /// Take a role from a user.
    Revoke { user: String, role: String },
    /// Add a role to a function's policy.
    Bind { function: String, role: String },
    /// Remove a role from a function's policy.
    Unbind { function: String, role: String },
    /// Set a policy's mode: `anyof` or `mofp:<m>`.
    Mode { function: String, mode: String },
    /// Decide whether a user may call a function.
    Check { user: String, function: String },
    /// Decide as if the user also held the given roles. Nothing is written.
    Whatif {
        user: String,
        function: String,
        #[arg(long = "with-role", required = true)]
        with_role: Vec<String>,
    },
    /// Import users from a JSON Lines file.
    Import { file: PathBuf },
    /// Audit the log.
    #[command(subcommand)]
    Audit(AuditCmd),
    /// Meter dynamic and static checks over growing role counts.
    Bench(BenchArgs),
    /// Rebuild state from the log and print a summary.
    Replay {
        /// Apply-logic version to replay with.
        #[arg(long, default_value = "v1")]
        logic: String,
        /// Start from this snapshot and replay only the events after it.
        #[arg(long)]
        from_snapshot: Option<PathBuf>,
    },
    /// Write a snapshot of the state.
    Snapshot {
        #[arg(long)]
        out: PathBuf,
        /// Snapshot after this many events instead of the whole log.
        #[arg(long)]
        at: Option<u64>,
    },
    /// Run the HTTP service.
    Serve {
        /// Overrides the configured listen address.
        #[arg(long, env = crate::config::ENV_ADDR)]
        listen: Option<std::net::SocketAddr>,
    },
}

#[derive(Debug, Subcommand)]
pub enum RoleCmd {
    Add {
        id: String,
        #[arg(long, default_value = "")]
        description: String,
        #[arg(long = "meta", value_parser = parse_kv)]
        metadata: Vec<(String, String)>,
    },
    Rm {
        id: String,
    },
    Ls,
}

#[derive(Debug, Subcommand)]
pub enum UserCmd {
    Add {
        id: String,
        #[arg(long)]
        external_ref: Option<String>,
        #[arg(long = "meta", value_parser = parse_kv)]
        metadata: Vec<(String, String)>,
    },
    Rm {
        id: String,
    },
    Ls,
    Activate {
        id: String,
    },
    Deactivate {
        id: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum FnCmd {
    Add {
        id: String,
        /// Target contract the function belongs to.
        #[arg(long)]
        contract: String,
        /// Function name on the contract. Defaults to the id.
        #[arg(long)]
        name: Option<String>,
    },
    Rm {
        id: String,
    },
    Ls,
}

#[derive(Debug, Subcommand)]
pub enum AuditCmd {
    /// Recompute the hash chain.
    Verify,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma-separated, strictly increasing role counts.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32,64,128,256")]
    pub roles: Vec<u64>,
    #[arg(long, default_value_t = 5)]
    pub trials: u32,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Also print the deployment-cost grid up to this many upgrades.
    #[arg(long)]
    pub upgrades: Option<u64>,
}

fn parse_kv(raw: &str) -> Result<(String, String), String> {
    raw.split_once('=')
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .ok_or_else(|| format!("expected key=value, got {raw:?}"))
}

type Failure = Box<dyn std::error::Error>;

struct Ctx<'a> {
    cli: &'a Cli,
    config: Config,
    out: &'a mut dyn Write,
}

impl Ctx<'_> {
    fn scope(&self) -> Result<AdminScope, Failure> {
        if self.config.scopes.is_empty() {
            return Ok(AdminScope::root(self.cli.actor.clone()));
        }
        let token = self.cli.token.as_deref().unwrap_or("");
        self.config
            .authenticate(&self.cli.actor, token)
            .ok_or_else(|| format!("actor {:?} is not a configured scope or the token is wrong", self.cli.actor).into())
    }

    fn engine(&self) -> Result<Engine, Failure> {
        let store = FileStore::open(&self.cli.log_path)?;
        Ok(Engine::with_store(Box::new(store))?.with_schedule(self.config.costs))
    }

    fn mutate(&mut self, f: impl FnOnce(&mut Engine, &AdminScope) -> Result<(), crate::managers::EngineError>) -> Result<i32, Failure> {
        let scope = self.scope()?;
        let mut engine = self.engine()?;
        f(&mut engine, &scope)?;
        let head = engine.head();
        writeln!(self.out, "ok seq={} hash={}", head.sequence, head.hash)?;
        Ok(EXIT_OK)
    }

    fn list<T: serde::Serialize>(&mut self, items: &[T], line: impl Fn(&T) -> String) -> Result<i32, Failure> {
        if self.cli.json {
            writeln!(self.out, "{}", serde_json::to_string_pretty(items)?)?;
        } else {
            for item in items {
                writeln!(self.out, "{}", line(item))?;
            }
        }
        Ok(EXIT_OK)
    }

    fn decision(&mut self, d: &Decision) -> Result<i32, Failure> {
        if self.cli.json {
            writeln!(self.out, "{}", serde_json::to_string_pretty(d)?)?;
        } else {
            let roles: Vec<&str> = d.matched_roles.iter().map(RoleId::as_str).collect();
            let verdict = if d.allowed { "allow" } else { "deny" };
            writeln!(self.out, "{verdict} ({}) matched=[{}] cost={}", d.reason, roles.join(","), d.cost.total)?;
        }
        Ok(if d.allowed { EXIT_OK } else { EXIT_DENY })
    }
}

fn metadata(pairs: &[(String, String)]) -> Metadata {
    pairs.iter().cloned().collect::<BTreeMap<_, _>>()
}

fn execute(ctx: &mut Ctx<'_>) -> Result<i32, Failure> {
    let cli = ctx.cli;
    match &cli.command {
        Command::Role(RoleCmd::Add { id, description, metadata: m }) => {
            let role = Role {
                id: id.parse()?,
                description: description.clone(),
                metadata: metadata(m),
            };
            ctx.mutate(|e, s| e.role_add(s, role).map(drop))
        }
        Command::Role(RoleCmd::Rm { id }) => {
            let id: RoleId = id.parse()?;
            ctx.mutate(|e, s| e.role_remove(s, &id))
        }
        Command::Role(RoleCmd::Ls) => {
            let state = ctx.engine()?.snapshot();
            let roles: Vec<Role> = state.role_list().into_iter().cloned().collect();
            ctx.list(&roles, |r| {
                if r.description.is_empty() {
                    r.id.to_string()
                } else {
                    format!("{}\t{}", r.id, r.description)
                }
            })
        }
        Command::User(UserCmd::Add { id, external_ref, metadata: m }) => {
            let mut user = User::new(id.parse()?);
            user.external_ref = external_ref.clone();
            user.metadata = metadata(m);
            ctx.mutate(|e, s| e.user_add(s, user).map(drop))
        }
        Command::User(UserCmd::Rm { id }) => {
            let id: UserId = id.parse()?;
            ctx.mutate(|e, s| e.user_remove(s, &id))
        }
        Command::User(UserCmd::Activate { id }) => {
            let id: UserId = id.parse()?;
            ctx.mutate(|e, s| e.user_set_active(s, &id, true))
        }
        Command::User(UserCmd::Deactivate { id }) => {
            let id: UserId = id.parse()?;
            ctx.mutate(|e, s| e.user_set_active(s, &id, false))
        }
        Command::User(UserCmd::Ls) => {
            let state = ctx.engine()?.snapshot();
            let users: Vec<User> = state.user_list().into_iter().cloned().collect();
            let roles: BTreeMap<UserId, String> = users
                .iter()
                .map(|u| {
                    let held = state.user_roles.roles_of(&u.id).into_iter().flatten().map(RoleId::as_str).collect::<Vec<_>>();
                    (u.id.clone(), held.join(","))
                })
                .collect();
            ctx.list(&users, |u| {
                let status = if u.active { "active" } else { "inactive" };
                format!("{}\t{status}\t[{}]", u.id, roles[&u.id])
            })
        }
        Command::Function(FnCmd::Add { id, contract, name }) => {
            let id: FunctionId = id.parse()?;
            let name = name.clone().unwrap_or_else(|| id.to_string());
            let def = FunctionDef::new(id, contract.clone(), name);
            ctx.mutate(|e, s| e.function_register(s, def).map(drop))
        }
        Command::Function(FnCmd::Rm { id }) => {
            let id: FunctionId = id.parse()?;
            ctx.mutate(|e, s| e.function_remove(s, &id))
        }
        Command::Function(FnCmd::Ls) => {
            let state = ctx.engine()?.snapshot();
            let functions: Vec<FunctionDef> = state.function_list().into_iter().cloned().collect();
            let policies: BTreeMap<FunctionId, String> = functions
                .iter()
                .map(|f| {
                    let (roles, mode) = state.get_function_roles(&f.id).expect("listed function exists");
                    let roles = roles.iter().map(RoleId::as_str).collect::<Vec<_>>();
                    (f.id.clone(), format!("{mode} [{}]", roles.join(",")))
                })
                .collect();
            ctx.list(&functions, |f| {
                format!("{}\t{}.{}\t{}", f.id, f.target_contract, f.function_name, policies[&f.id])
            })
        }
        Command::Grant { user, role } => {
            let (u, r): (UserId, RoleId) = (user.parse()?, role.parse()?);
            ctx.mutate(|e, s| e.assign_role(s, &u, &r))
        }
        Command::Revoke { user, role } => {
            let (u, r): (UserId, RoleId) = (user.parse()?, role.parse()?);
            ctx.mutate(|e, s| e.revoke_role(s, &u, &r))
        }
        Command::Bind { function, role } => {
            let (f, r): (FunctionId, RoleId) = (function.parse()?, role.parse()?);
            ctx.mutate(|e, s| e.policy_bind(s, &f, &r))
        }
        Command::Unbind { function, role } => {
            let (f, r): (FunctionId, RoleId) = (function.parse()?, role.parse()?);
            ctx.mutate(|e, s| e.policy_unbind(s, &f, &r))
        }
        Command::Mode { function, mode } => {
            let f: FunctionId = function.parse()?;
            let mode: PolicyMode = mode.parse()?;
            ctx.mutate(|e, s| e.policy_set_mode(s, &f, mode))
        }
        Command::Check { user, function } => {
            let engine = ctx.engine()?;
            let d = engine.check_authorization(&user.parse()?, &function.parse()?);
            ctx.decision(&d)
        }
        Command::Whatif { user, function, with_role } => {
            let engine = ctx.engine()?;
            let extra = with_role.iter().map(|r| r.parse()).collect::<Result<_, _>>()?;
            let d = engine.what_if(&user.parse()?, &function.parse()?, &extra)?;
            ctx.decision(&d)
        }
        Command::Import { file } => {
            let text = std::fs::read_to_string(file)?;
            let parsed = BulkImportFile::parse(&text)?;
            let scope = ctx.scope()?;
            let mut engine = ctx.engine()?;
            let summary = import_users(&mut engine, &scope, &parsed)?;
            if cli.json {
                writeln!(ctx.out, "{}", serde_json::to_string(&summary)?)?;
            } else {
                writeln!(ctx.out, "created={} granted={}", summary.created, summary.granted)?;
            }
            Ok(EXIT_OK)
        }
        Command::Audit(AuditCmd::Verify) => match verify_log_file(&cli.log_path)? {
            Ok(head) => {
                writeln!(ctx.out, "ok events={} head={}", head.sequence, head.hash)?;
                Ok(EXIT_OK)
            }
            Err(broken) => {
                writeln!(ctx.out, "broken at sequence {} ({:?})", broken.sequence, broken.cause)?;
                Ok(EXIT_DENY)
            }
        },
        Command::Bench(args) => {
            let report = bench_scaling(&ctx.config.costs, &args.roles, args.trials, args.seed)?;
            if cli.json {
                writeln!(ctx.out, "{}", report.to_json())?;
            } else {
                write!(ctx.out, "{}", report.to_table())?;
            }
            if let Some(max) = args.upgrades {
                writeln!(ctx.out, "{:>8}  {:>8}  {:>14}  {:>14}", "roles", "upgrades", "deploy_dyn", "deploy_static")?;
                let s = &ctx.config.costs;
                for &n in &args.roles {
                    let n_roles = NonZeroU64::new(n).ok_or("role counts must be positive")?;
                    for u in 0..=max {
                        let stat = NonZeroU64::new(u).map_or(0, |u| deployment_cost_static(s, n_roles, u));
                        writeln!(ctx.out, "{n:>8}  {u:>8}  {:>14}  {stat:>14}", deployment_cost_dynamic(s, n_roles, u))?;
                    }
                }
            }
            Ok(EXIT_OK)
        }
        Command::Replay { logic, from_snapshot } => {
            let logic = LogicRegistry::default().get(logic)?;
            let (_, events) = read_log(&cli.log_path)?;
            let state = match from_snapshot {
                Some(path) => {
                    let snap = restore(&std::fs::read_to_string(path)?)?;
                    let start = usize::try_from(snap.anchor.sequence)?;
                    let tail = events.get(start..).ok_or("snapshot is ahead of the log")?;
                    restore_and_replay(&snap, tail, logic.as_ref())?
                }
                None => crate::ledger::replay(&events, logic.as_ref())?,
            };
            if cli.json {
                writeln!(ctx.out, "{}", state.canonical_json())?;
            } else {
                let v = logic.version();
                writeln!(
                    ctx.out,
                    "replayed {} events with {} ({}): users={} roles={} functions={} policies={} grants={}",
                    events.len(),
                    v.version_label,
                    v.replay_semantics,
                    state.users.len(),
                    state.roles.len(),
                    state.functions.len(),
                    state.policies.len(),
                    state.user_roles.len()
                )?;
            }
            Ok(EXIT_OK)
        }
        Command::Snapshot { out, at } => {
            let (_, events) = read_log(&cli.log_path)?;
            let logic = crate::ledger::TypedLogic;
            let snap: Snapshot = snapshot_at(&events, at.unwrap_or(events.len() as u64), &logic)?;
            snap.write_to(out)?;
            writeln!(
                ctx.out,
                "snapshot seq={} chain={} digest={}",
                snap.anchor.sequence, snap.anchor.chain_hash, snap.anchor.state_digest
            )?;
            Ok(EXIT_OK)
        }
        Command::Serve { listen } => {
            let mut config = ctx.config.clone();
            config.log_path = cli.log_path.clone();
            if let Some(addr) = listen {
                config.listen = *addr;
            }
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(crate::service::serve(config))?;
            Ok(EXIT_OK)
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let rendered = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(sink, "{rendered}");
            return code;
        }
    };
    let config = match &cli.config {
        Some(path) => match Config::load(path) {
            Ok(c) => c,
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                return EXIT_ERROR;
            }
        },
        None => Config::default(),
    };
    let mut ctx = Ctx { cli: &cli, config, out };
    match execute(&mut ctx) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_ERROR
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_in(dir: &std::path::Path, args: &[&str]) -> (i32, String, String) {
        let log = dir.join("log.jsonl");
        let mut argv = vec!["drbac", "--log-path", log.to_str().unwrap()];
        argv.extend_from_slice(args);
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(argv, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn grant_bind_check_whatif() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        for args in [
            &["role", "add", "auditor"][..],
            &["user", "add", "alice"],
            &["user", "add", "bob"],
            &["fn", "add", "release", "--contract", "Escrow"],
            &["grant", "alice", "auditor"],
            &["bind", "release", "auditor"],
        ] {
            assert_eq!(run_in(d, args).0, EXIT_OK, "{args:?}");
        }
        let (code, out, _) = run_in(d, &["check", "alice", "release"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.starts_with("allow"));
        assert_eq!(run_in(d, &["check", "bob", "release"]).0, EXIT_DENY);
        let (code, out, _) = run_in(d, &["whatif", "bob", "release", "--with-role", "auditor"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.starts_with("allow"));
        assert_eq!(run_in(d, &["check", "bob", "release"]).0, EXIT_DENY);
        assert!(run_in(d, &["audit", "verify"]).1.starts_with("ok events=6"));
    }

    #[test]
    fn errors_exit_two() {
        let dir = tempfile::tempdir().unwrap();
        let (code, _, err) = run_in(dir.path(), &["role", "rm", "ghost"]);
        assert_eq!(code, EXIT_ERROR);
        assert!(err.contains("not found"));
        assert_eq!(run_in(dir.path(), &["frobnicate"]).0, EXIT_ERROR);
        assert_eq!(run_in(dir.path(), &["mode", "f", "mofp:x"]).0, EXIT_ERROR);
        assert_eq!(run_in(dir.path(), &["--help"]).0, EXIT_OK);
    }
}
