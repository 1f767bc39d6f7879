//! Replaceable state-apply logic.
//!
//! The log is the data; an [`ApplyLogic`] is the code that folds it into an
//! [`EngineState`]. New logic can be registered and used to replay the same
//! log without migrating anything.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{MutationEvent, ReplayError};
use crate::managers::{EngineError, EngineState};
use crate::model::{FunctionDef, FunctionId, Metadata, Role, RoleId, RoleSet, User, UserId};
use crate::policy::{Policy, PolicyMode};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogicVersion {
    pub version_label: String,
    /// Identifies the set of apply functions behind the label.
    pub replay_semantics: String,
}

pub trait ApplyLogic: Send + Sync {
    fn version(&self) -> LogicVersion;

    /// Applies one event and bumps `state.version`; on error the state is
    /// left as it was.
    fn apply(&self, state: &mut EngineState, event: &MutationEvent) -> Result<(), ReplayError>;
}

/// The managers' own apply path: decode to a typed mutation, validate,
/// apply.
#[derive(Debug, Clone, Copy, Default)]
pub struct TypedLogic;

impl ApplyLogic for TypedLogic {
    fn version(&self) -> LogicVersion {
        LogicVersion {
            version_label: "v1".into(),
            replay_semantics: "typed-mutation".into(),
        }
    }

    fn apply(&self, state: &mut EngineState, event: &MutationEvent) -> Result<(), ReplayError> {
        let mutation = event.mutation()?;
        state.apply(&mutation).map_err(|source| ReplayError::Rejected {
            sequence: event.sequence,
            source,
        })
    }
}

/// A second, independently written apply path working directly on the
/// JSON payload. It exists to show that logic can be replaced while the
/// stored events stay as they are.
#[derive(Debug, Clone, Copy, Default)]
pub struct StructuralLogic;

type Step = Result<(), EngineError>;

fn field<'a>(seq: u64, payload: &'a Value, name: &str) -> Result<&'a Value, ReplayError> {
    payload.get(name).ok_or_else(|| ReplayError::InvalidPayload {
        sequence: seq,
        message: format!("missing field {name:?}"),
    })
}

fn decode<T: serde::de::DeserializeOwned>(seq: u64, payload: &Value, name: &str) -> Result<T, ReplayError> {
    serde_json::from_value(field(seq, payload, name)?.clone()).map_err(|e| ReplayError::InvalidPayload {
        sequence: seq,
        message: format!("field {name:?}: {e}"),
    })
}

fn need_role(s: &EngineState, r: &RoleId) -> Step {
    s.roles.get(r).map(drop).ok_or(EngineError::RoleNotFound { role: r.clone() })
}

fn need_user(s: &EngineState, u: &UserId) -> Step {
    s.users.get(u).map(drop).ok_or(EngineError::UserNotFound { user: u.clone() })
}

fn need_function(s: &EngineState, f: &FunctionId) -> Step {
    s.functions
        .get(f)
        .map(drop)
        .ok_or(EngineError::FunctionNotFound { function: f.clone() })
}

fn fresh_user(s: &EngineState, user: &User) -> Step {
    if s.users.contains_key(&user.id) {
        return Err(EngineError::DuplicateUser { user: user.id.clone() });
    }
    if let Some(r) = &user.external_ref {
        if let Some(other) = s.users.values().find(|u| u.external_ref.as_ref() == Some(r)) {
            return Err(EngineError::DuplicateExternalRef {
                external_ref: r.clone(),
                user: other.id.clone(),
            });
        }
    }
    Ok(())
}

#[derive(Deserialize)]
struct ImportRow {
    user: User,
    roles: RoleSet,
}

impl StructuralLogic {
    fn step(&self, s: &mut EngineState, seq: u64, op: &str, p: &Value) -> Result<Step, ReplayError> {
        Ok(match op {
            "role_add" => {
                let role: Role = decode(seq, p, "role")?;
                if s.roles.contains_key(&role.id) {
                    Err(EngineError::DuplicateRole { role: role.id })
                } else {
                    s.roles.insert(role.id.clone(), role);
                    Ok(())
                }
            }
            "role_update" => {
                let id: RoleId = decode(seq, p, "role_id")?;
                let description: String = decode(seq, p, "description")?;
                let metadata: Metadata = decode(seq, p, "metadata")?;
                match s.roles.get_mut(&id) {
                    Some(role) => {
                        *role = Role { id, description, metadata };
                        Ok(())
                    }
                    None => Err(EngineError::RoleNotFound { role: id }),
                }
            }
            "role_remove" => {
                let id: RoleId = decode(seq, p, "role_id")?;
                let users: Vec<UserId> = s.user_roles.pairs().filter(|(_, r)| **r == id).map(|(u, _)| u.clone()).collect();
                let functions: Vec<FunctionId> = s
                    .policies
                    .iter()
                    .filter(|(_, pol)| pol.required_roles.contains(&id))
                    .map(|(f, _)| f.clone())
                    .collect();
                if !s.roles.contains_key(&id) {
                    Err(EngineError::RoleNotFound { role: id })
                } else if !users.is_empty() || !functions.is_empty() {
                    Err(EngineError::RoleInUse { role: id, users, functions })
                } else {
                    s.roles.remove(&id);
                    Ok(())
                }
            }
            "function_register" => {
                let f: FunctionDef = decode(seq, p, "function")?;
                let taken = s.functions.contains_key(&f.id)
                    || s
                        .functions
                        .values()
                        .any(|g| (&g.target_contract, &g.function_name) == (&f.target_contract, &f.function_name));
                if taken {
                    Err(EngineError::DuplicateFunction {
                        function: f.id,
                        target_contract: f.target_contract,
                        function_name: f.function_name,
                    })
                } else {
                    s.functions.insert(f.id.clone(), f);
                    Ok(())
                }
            }
            "function_remove" => {
                let id: FunctionId = decode(seq, p, "function_id")?;
                need_function(s, &id).and_then(|()| {
                    if s.policies.contains_key(&id) {
                        Err(EngineError::FunctionInUse { function: id.clone() })
                    } else {
                        s.functions.remove(&id);
                        Ok(())
                    }
                })
            }
            "user_add" => {
                let user: User = decode(seq, p, "user")?;
                fresh_user(s, &user).map(|()| {
                    s.users.insert(user.id.clone(), user);
                })
            }
            "user_remove" => {
                let id: UserId = decode(seq, p, "user_id")?;
                need_user(s, &id).and_then(|()| match s.user_roles.roles_of(&id) {
                    Some(held) => Err(EngineError::UserHasRoles {
                        user: id.clone(),
                        roles: held.iter().cloned().collect(),
                    }),
                    None => {
                        s.users.remove(&id);
                        Ok(())
                    }
                })
            }
            "user_set_active" => {
                let id: UserId = decode(seq, p, "user_id")?;
                let active: bool = decode(seq, p, "active")?;
                match s.users.get_mut(&id) {
                    Some(u) => {
                        u.active = active;
                        Ok(())
                    }
                    None => Err(EngineError::UserNotFound { user: id }),
                }
            }
            "assign_role" | "revoke_role" => {
                let user: UserId = decode(seq, p, "user_id")?;
                let role: RoleId = decode(seq, p, "role_id")?;
                need_user(s, &user).and_then(|()| need_role(s, &role)).and_then(|()| {
                    let held = s.user_roles.contains(&user, &role);
                    match (op, held) {
                        ("assign_role", true) => Err(EngineError::DuplicateAssignment { user, role }),
                        ("assign_role", false) => {
                            s.user_roles.insert(user, role);
                            Ok(())
                        }
                        (_, false) => Err(EngineError::AssignmentNotFound { user, role }),
                        (_, true) => {
                            s.user_roles.remove(&user, &role);
                            Ok(())
                        }
                    }
                })
            }
            "policy_bind" | "policy_unbind" => {
                let function: FunctionId = decode(seq, p, "function_id")?;
                let role: RoleId = decode(seq, p, "role_id")?;
                need_function(s, &function)
                    .and_then(|()| need_role(s, &role))
                    .and_then(|()| self.rebind(s, op == "policy_bind", function, role))
            }
            "policy_set_mode" => {
                let function: FunctionId = decode(seq, p, "function_id")?;
                let mode: PolicyMode = decode(seq, p, "mode")?;
                need_function(s, &function).and_then(|()| {
                    let count = s.policies.get(&function).map_or(0, |pol| pol.required_roles.len());
                    if !Policy::mode_fits(mode, count) {
                        return Err(EngineError::ThresholdViolation {
                            function: function.clone(),
                            mode,
                            role_count: count,
                        });
                    }
                    if let Some(pol) = s.policies.get_mut(&function) {
                        pol.mode = mode;
                    }
                    Ok(())
                })
            }
            "import_users" => {
                let rows: Vec<ImportRow> = decode(seq, p, "users")?;
                let mut staged = s.clone();
                let mut outcome = Ok(());
                for row in rows {
                    if let Err(e) = fresh_user(&staged, &row.user) {
                        outcome = Err(e);
                        break;
                    }
                    if let Some(missing) = row.roles.iter().find(|r| !staged.roles.contains_key(*r)) {
                        outcome = Err(EngineError::RoleNotFound { role: missing.clone() });
                        break;
                    }
                    for r in row.roles {
                        staged.user_roles.insert(row.user.id.clone(), r);
                    }
                    staged.users.insert(row.user.id.clone(), row.user);
                }
                if outcome.is_ok() {
                    *s = staged;
                }
                outcome
            }
            other => {
                return Err(ReplayError::UnknownOperation {
                    sequence: seq,
                    operation: other.to_string(),
                })
            }
        })
    }

    fn rebind(&self, s: &mut EngineState, bind: bool, function: FunctionId, role: RoleId) -> Step {
        let current = s.policies.get(&function).cloned();
        let mut roles = current.as_ref().map(|p| p.required_roles.clone()).unwrap_or_default();
        let mode = current.as_ref().map_or(PolicyMode::AnyOf, |p| p.mode);
        if bind {
            if !roles.insert(role.clone()) {
                return Err(EngineError::DuplicateBinding { function, role });
            }
        } else {
            if !roles.remove(&role) {
                return Err(EngineError::BindingNotFound { function, role });
            }
            if mode != PolicyMode::AnyOf && !Policy::mode_fits(mode, roles.len()) {
                return Err(EngineError::ThresholdViolation {
                    function,
                    mode,
                    role_count: roles.len(),
                });
            }
        }
        if roles.is_empty() {
            s.policies.remove(&function);
        } else {
            s.policies.insert(
                function.clone(),
                Policy {
                    function_id: function,
                    required_roles: roles,
                    mode,
                },
            );
        }
        Ok(())
    }
}

impl ApplyLogic for StructuralLogic {
    fn version(&self) -> LogicVersion {
        LogicVersion {
            version_label: "v2".into(),
            replay_semantics: "structural-json".into(),
        }
    }

    fn apply(&self, state: &mut EngineState, event: &MutationEvent) -> Result<(), ReplayError> {
        // Every branch of `step` validates before it writes.
        match self.step(state, event.sequence, &event.operation, &event.payload)? {
            Ok(()) => {
                state.version += 1;
                Ok(())
            }
            Err(source) => Err(ReplayError::Rejected {
                sequence: event.sequence,
                source,
            }),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("logic version {0:?} is already registered")]
pub struct DuplicateLogicLabel(pub String);

/// Logic versions by label.
#[derive(Clone)]
pub struct LogicRegistry {
    entries: BTreeMap<String, Arc<dyn ApplyLogic>>,
}

impl std::fmt::Debug for LogicRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.entries.keys()).finish()
    }
}

impl Default for LogicRegistry {
    /// `v1` ([`TypedLogic`]) and `v2` ([`StructuralLogic`]).
    fn default() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(TypedLogic)).expect("fresh registry");
        r.register(Arc::new(StructuralLogic)).expect("fresh registry");
        r
    }
}

impl LogicRegistry {
    pub fn empty() -> Self {
        Self { entries: BTreeMap::new() }
    }

    pub fn register(&mut self, logic: Arc<dyn ApplyLogic>) -> Result<(), DuplicateLogicLabel> {
        let label = logic.version().version_label;
        if self.entries.contains_key(&label) {
            return Err(DuplicateLogicLabel(label));
        }
        self.entries.insert(label, logic);
        Ok(())
    }

    pub fn get(&self, label: &str) -> Result<Arc<dyn ApplyLogic>, ReplayError> {
        self.entries
            .get(label)
            .cloned()
            .ok_or_else(|| ReplayError::UnknownLogic(label.to_string()))
    }

    pub fn versions(&self) -> Vec<LogicVersion> {
        self.entries.values().map(|l| l.version()).collect()
    }
}
