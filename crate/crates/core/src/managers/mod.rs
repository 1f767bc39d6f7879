//! The manager layer: role, function, user and policy managers over one
//! [`EngineState`], and the permissions manager that orchestrates a check.
//!
//! Reads are methods on [`EngineState`]. Mutations go through [`Engine`],
//! which checks the caller's [`AdminScope`], validates the mutation against
//! the current state, persists a ledger event, and only then applies it.

mod functions;
mod mutation;
mod permissions;
mod policies;
mod roles;
mod users;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::CostSchedule;
use crate::ledger::{ChainHead, EventStore, LedgerError, MutationEvent};
use crate::model::{FunctionDef, FunctionId, Role, RoleId, User, UserId, UserRoleMapping};
use crate::policy::{Policy, PolicyMode};

pub use mutation::{ImportedUser, Mutation};
pub use permissions::{RecordingTracer, TraceStep, Tracer};

/// One of the four administrable managers. The permissions manager has no
/// mutating surface and therefore no scope entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManagerKind {
    RoleMgr,
    FunctionMgr,
    UserMgr,
    PolicyMgr,
}

impl ManagerKind {
    pub const ALL: [ManagerKind; 4] = [
        ManagerKind::RoleMgr,
        ManagerKind::FunctionMgr,
        ManagerKind::UserMgr,
        ManagerKind::PolicyMgr,
    ];
}

impl fmt::Display for ManagerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ManagerKind::RoleMgr => "role_mgr",
            ManagerKind::FunctionMgr => "function_mgr",
            ManagerKind::UserMgr => "user_mgr",
            ManagerKind::PolicyMgr => "policy_mgr",
        })
    }
}

/// An administrator group and the managers it may mutate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawScope")]
pub struct AdminScope {
    admin_group: String,
    permitted_managers: BTreeSet<ManagerKind>,
}

#[derive(Deserialize)]
struct RawScope {
    admin_group: String,
    permitted_managers: BTreeSet<ManagerKind>,
}

impl TryFrom<RawScope> for AdminScope {
    type Error = String;
    fn try_from(raw: RawScope) -> Result<Self, String> {
        AdminScope::new(raw.admin_group, raw.permitted_managers).ok_or_else(|| "admin scope permits no managers".to_string())
    }
}

impl AdminScope {
    /// `None` when `permitted_managers` is empty.
    pub fn new(admin_group: impl Into<String>, permitted_managers: impl IntoIterator<Item = ManagerKind>) -> Option<Self> {
        let permitted_managers: BTreeSet<_> = permitted_managers.into_iter().collect();
        if permitted_managers.is_empty() {
            return None;
        }
        Some(Self {
            admin_group: admin_group.into(),
            permitted_managers,
        })
    }

    /// A scope over every manager.
    pub fn root(admin_group: impl Into<String>) -> Self {
        Self {
            admin_group: admin_group.into(),
            permitted_managers: ManagerKind::ALL.into_iter().collect(),
        }
    }

    pub fn admin_group(&self) -> &str {
        &self.admin_group
    }

    pub fn permitted_managers(&self) -> &BTreeSet<ManagerKind> {
        &self.permitted_managers
    }

    pub fn permits(&self, manager: ManagerKind) -> bool {
        self.permitted_managers.contains(&manager)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum EngineError {
    #[error("admin group {admin_group:?} may not use {manager}")]
    ScopeViolation { admin_group: String, manager: ManagerKind },
    #[error("role {role} already exists")]
    DuplicateRole { role: RoleId },
    #[error("role {role} not found")]
    RoleNotFound { role: RoleId },
    #[error("role {role} is in use by users {users:?} and functions {functions:?}")]
    RoleInUse {
        role: RoleId,
        users: Vec<UserId>,
        functions: Vec<FunctionId>,
    },
    #[error("function {function} ({target_contract}::{function_name}) already registered")]
    DuplicateFunction {
        function: FunctionId,
        target_contract: String,
        function_name: String,
    },
    #[error("function {function} not found")]
    FunctionNotFound { function: FunctionId },
    #[error("function {function} still has a policy")]
    FunctionInUse { function: FunctionId },
    #[error("user {user} already exists")]
    DuplicateUser { user: UserId },
    #[error("external reference {external_ref:?} already belongs to {user}")]
    DuplicateExternalRef { external_ref: String, user: UserId },
    #[error("user {user} not found")]
    UserNotFound { user: UserId },
    #[error("user {user} still holds roles {roles:?}")]
    UserHasRoles { user: UserId, roles: Vec<RoleId> },
    #[error("user {user} already holds role {role}")]
    DuplicateAssignment { user: UserId, role: RoleId },
    #[error("user {user} does not hold role {role}")]
    AssignmentNotFound { user: UserId, role: RoleId },
    #[error("role {role} already bound to function {function}")]
    DuplicateBinding { function: FunctionId, role: RoleId },
    #[error("role {role} is not bound to function {function}")]
    BindingNotFound { function: FunctionId, role: RoleId },
    #[error("mode {mode} does not fit a policy with {role_count} roles on {function}")]
    ThresholdViolation {
        function: FunctionId,
        mode: PolicyMode,
        role_count: usize,
    },
    #[error("storage failure: {message}")]
    StorageFailure { message: String },
}

impl From<LedgerError> for EngineError {
    fn from(e: LedgerError) -> Self {
        EngineError::StorageFailure { message: e.to_string() }
    }
}

pub type Result<T, E = EngineError> = std::result::Result<T, E>;

/// Everything the managers own. `version` counts applied mutations.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineState {
    pub users: BTreeMap<UserId, User>,
    pub roles: BTreeMap<RoleId, Role>,
    pub functions: BTreeMap<FunctionId, FunctionDef>,
    pub user_roles: UserRoleMapping,
    pub policies: BTreeMap<FunctionId, Policy>,
    pub version: u64,
}

impl EngineState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Deterministic compact JSON of the whole state.
    pub fn canonical_json(&self) -> String {
        crate::ledger::canonical_json(&serde_json::to_value(self).expect("state serializes"))
    }

    /// Applies a mutation after validating it. Bumps `version` on success;
    /// leaves the state untouched on error.
    pub fn apply(&mut self, mutation: &Mutation) -> Result<()> {
        mutation.check(self)?;
        mutation.apply_unchecked(self);
        self.version += 1;
        Ok(())
    }

    /// Full referential-integrity audit. Returns every violation found.
    pub fn audit_integrity(&self) -> std::result::Result<(), Vec<String>> {
        let mut problems = Vec::new();
        for (id, u) in &self.users {
            if &u.id != id {
                problems.push(format!("user key {id} holds id {}", u.id));
            }
        }
        for (id, r) in &self.roles {
            if &r.id != id {
                problems.push(format!("role key {id} holds id {}", r.id));
            }
        }
        for (id, f) in &self.functions {
            if &f.id != id {
                problems.push(format!("function key {id} holds id {}", f.id));
            }
        }
        for (u, r) in self.user_roles.pairs() {
            if !self.users.contains_key(u) {
                problems.push(format!("assignment references missing user {u}"));
            }
            if !self.roles.contains_key(r) {
                problems.push(format!("assignment references missing role {r}"));
            }
        }
        for (fid, p) in &self.policies {
            if &p.function_id != fid {
                problems.push(format!("policy key {fid} holds function {}", p.function_id));
            }
            if !self.functions.contains_key(fid) {
                problems.push(format!("policy references missing function {fid}"));
            }
            for r in &p.required_roles {
                if !self.roles.contains_key(r) {
                    problems.push(format!("policy {fid} references missing role {r}"));
                }
            }
            if !p.is_well_formed() || p.required_roles.is_empty() {
                problems.push(format!("policy {fid} is malformed: {} over {} roles", p.mode, p.required_roles.len()));
            }
        }
        let mut refs = BTreeSet::new();
        for u in self.users.values() {
            if let Some(r) = &u.external_ref {
                if !refs.insert(r) {
                    problems.push(format!("external reference {r:?} is not unique"));
                }
            }
        }
        let mut names = BTreeSet::new();
        for f in self.functions.values() {
            if !names.insert((&f.target_contract, &f.function_name)) {
                problems.push(format!("function name {}::{} is not unique", f.target_contract, f.function_name));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(problems)
        }
    }

    /// The `F_R` relation derived from the policy table.
    pub fn function_role_mapping(&self) -> crate::model::FunctionRoleMapping {
        crate::model::FunctionRoleMapping {
            pairs: self
                .policies
                .values()
                .flat_map(|p| p.required_roles.iter().map(|r| (p.function_id.clone(), r.clone())))
                .collect(),
        }
    }
}

/// Clock for event timestamps, in UTC milliseconds.
pub type Clock = Box<dyn Fn() -> u64 + Send + Sync>;

pub fn system_clock() -> Clock {
    Box::new(|| {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    })
}

/// The single writer over an [`EngineState`].
pub struct Engine {
    state: Arc<EngineState>,
    head: ChainHead,
    store: Box<dyn EventStore>,
    schedule: CostSchedule,
    clock: Clock,
}

impl fmt::Debug for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Engine")
            .field("version", &self.state.version)
            .field("head", &self.head)
            .finish_non_exhaustive()
    }
}

impl Engine {
    /// An engine backed by an in-memory log.
    pub fn in_memory() -> Self {
        Self::with_store(Box::new(crate::ledger::MemoryStore::new()))
            .expect("empty memory store always opens")
    }

    /// Opens an engine over `store`, replaying whatever it already holds.
    pub fn with_store(store: Box<dyn EventStore>) -> std::result::Result<Self, crate::ledger::ReplayError> {
        let events = store.load().map_err(crate::ledger::ReplayError::Storage)?;
        let state = crate::ledger::replay(&events, &crate::ledger::TypedLogic)?;
        let head = events.last().map(ChainHead::of).unwrap_or_default();
        Ok(Self {
            state: Arc::new(state),
            head,
            store,
            schedule: CostSchedule::default(),
            clock: system_clock(),
        })
    }

    pub fn with_schedule(mut self, schedule: CostSchedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn state(&self) -> &EngineState {
        &self.state
    }

    /// A cheap immutable snapshot at the current version.
    pub fn snapshot(&self) -> Arc<EngineState> {
        Arc::clone(&self.state)
    }

    pub fn schedule(&self) -> &CostSchedule {
        &self.schedule
    }

    pub fn head(&self) -> ChainHead {
        self.head
    }

    pub fn store(&self) -> &dyn EventStore {
        self.store.as_ref()
    }

    /// Scope check, validation, persist, apply. Nothing is persisted or
    /// applied unless every earlier step succeeded.
    pub fn commit(&mut self, scope: &AdminScope, mutation: Mutation) -> Result<MutationEvent> {
        let manager = mutation.manager();
        if !scope.permits(manager) {
            return Err(EngineError::ScopeViolation {
                admin_group: scope.admin_group().to_string(),
                manager,
            });
        }
        mutation.check(&self.state)?;
        let event = MutationEvent::seal(self.head, (self.clock)(), scope.admin_group(), &mutation);
        self.store.append(&event)?;
        let state = Arc::make_mut(&mut self.state);
        mutation.apply_unchecked(state);
        state.version += 1;
        self.head = ChainHead::of(&event);
        Ok(event)
    }
}
