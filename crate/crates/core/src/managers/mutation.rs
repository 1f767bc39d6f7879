use serde::{Deserialize, Serialize};

use super::{functions, policies, roles, users, EngineState, ManagerKind, Result};
use crate::model::{FunctionDef, FunctionId, Metadata, Role, RoleId, RoleSet, User, UserId};
use crate::policy::PolicyMode;

/// One user created by a bulk import, with the roles granted to it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportedUser {
    pub user: User,
    pub roles: RoleSet,
}

/// Every state change the managers can make. This is exactly what the
/// ledger persists: `operation` is the variant name, `payload` its fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "operation", content = "payload", rename_all = "snake_case")]
pub enum Mutation {
    RoleAdd { role: Role },
    RoleUpdate { role_id: RoleId, description: String, metadata: Metadata },
    RoleRemove { role_id: RoleId },
    FunctionRegister { function: FunctionDef },
    FunctionRemove { function_id: FunctionId },
    UserAdd { user: User },
    UserRemove { user_id: UserId },
    UserSetActive { user_id: UserId, active: bool },
    AssignRole { user_id: UserId, role_id: RoleId },
    RevokeRole { user_id: UserId, role_id: RoleId },
    PolicyBind { function_id: FunctionId, role_id: RoleId },
    PolicyUnbind { function_id: FunctionId, role_id: RoleId },
    PolicySetMode { function_id: FunctionId, mode: PolicyMode },
    ImportUsers { users: Vec<ImportedUser> },
}

impl Mutation {
    pub const OPERATIONS: [&'static str; 14] = [
        "role_add",
        "role_update",
        "role_remove",
        "function_register",
        "function_remove",
        "user_add",
        "user_remove",
        "user_set_active",
        "assign_role",
        "revoke_role",
        "policy_bind",
        "policy_unbind",
        "policy_set_mode",
        "import_users",
    ];

    pub fn operation(&self) -> &'static str {
        match self {
            Mutation::RoleAdd { .. } => "role_add",
            Mutation::RoleUpdate { .. } => "role_update",
            Mutation::RoleRemove { .. } => "role_remove",
            Mutation::FunctionRegister { .. } => "function_register",
            Mutation::FunctionRemove { .. } => "function_remove",
            Mutation::UserAdd { .. } => "user_add",
            Mutation::UserRemove { .. } => "user_remove",
            Mutation::UserSetActive { .. } => "user_set_active",
            Mutation::AssignRole { .. } => "assign_role",
            Mutation::RevokeRole { .. } => "revoke_role",
            Mutation::PolicyBind { .. } => "policy_bind",
            Mutation::PolicyUnbind { .. } => "policy_unbind",
            Mutation::PolicySetMode { .. } => "policy_set_mode",
            Mutation::ImportUsers { .. } => "import_users",
        }
    }

    /// The manager whose scope entry authorizes this mutation.
    pub fn manager(&self) -> ManagerKind {
        match self {
            Mutation::RoleAdd { .. } | Mutation::RoleUpdate { .. } | Mutation::RoleRemove { .. } => ManagerKind::RoleMgr,
            Mutation::FunctionRegister { .. } | Mutation::FunctionRemove { .. } => ManagerKind::FunctionMgr,
            Mutation::UserAdd { .. }
            | Mutation::UserRemove { .. }
            | Mutation::UserSetActive { .. }
            | Mutation::AssignRole { .. }
            | Mutation::RevokeRole { .. }
            | Mutation::ImportUsers { .. } => ManagerKind::UserMgr,
            Mutation::PolicyBind { .. } | Mutation::PolicyUnbind { .. } | Mutation::PolicySetMode { .. } => {
                ManagerKind::PolicyMgr
            }
        }
    }

    /// The payload object alone.
    pub fn payload(&self) -> serde_json::Value {
        let mut tagged = serde_json::to_value(self).expect("mutations serialize");
        tagged
            .get_mut("payload")
            .map(serde_json::Value::take)
            .unwrap_or_else(|| serde_json::Value::Object(Default::default()))
    }

    /// Rebuilds a mutation from its persisted parts. `None` for an operation
    /// name this build does not know.
    pub fn from_parts(operation: &str, payload: &serde_json::Value) -> Option<serde_json::Result<Self>> {
        if !Self::OPERATIONS.contains(&operation) {
            return None;
        }
        Some(serde_json::from_value(serde_json::json!({
            "operation": operation,
            "payload": payload,
        })))
    }

    pub(crate) fn check(&self, state: &EngineState) -> Result<()> {
        match self {
            Mutation::RoleAdd { role } => roles::check_add(state, role),
            Mutation::RoleUpdate { role_id, .. } => roles::check_update(state, role_id),
            Mutation::RoleRemove { role_id } => roles::check_remove(state, role_id),
            Mutation::FunctionRegister { function } => functions::check_register(state, function),
            Mutation::FunctionRemove { function_id } => functions::check_remove(state, function_id),
            Mutation::UserAdd { user } => users::check_add(state, user),
            Mutation::UserRemove { user_id } => users::check_remove(state, user_id),
            Mutation::UserSetActive { user_id, .. } => users::check_exists(state, user_id),
            Mutation::AssignRole { user_id, role_id } => users::check_assign(state, user_id, role_id),
            Mutation::RevokeRole { user_id, role_id } => users::check_revoke(state, user_id, role_id),
            Mutation::PolicyBind { function_id, role_id } => policies::check_bind(state, function_id, role_id),
            Mutation::PolicyUnbind { function_id, role_id } => policies::check_unbind(state, function_id, role_id),
            Mutation::PolicySetMode { function_id, mode } => policies::check_set_mode(state, function_id, *mode),
            Mutation::ImportUsers { users: batch } => users::check_import(state, batch),
        }
    }

    /// Applies without validation and without touching `version`.
    pub(crate) fn apply_unchecked(&self, state: &mut EngineState) {
        match self.clone() {
            Mutation::RoleAdd { role } => {
                state.roles.insert(role.id.clone(), role);
            }
            Mutation::RoleUpdate {
                role_id,
                description,
                metadata,
            } => {
                if let Some(role) = state.roles.get_mut(&role_id) {
                    role.description = description;
                    role.metadata = metadata;
                }
            }
            Mutation::RoleRemove { role_id } => {
                state.roles.remove(&role_id);
            }
            Mutation::FunctionRegister { function } => {
                state.functions.insert(function.id.clone(), function);
            }
            Mutation::FunctionRemove { function_id } => {
                state.functions.remove(&function_id);
            }
            Mutation::UserAdd { user } => {
                state.users.insert(user.id.clone(), user);
            }
            Mutation::UserRemove { user_id } => {
                state.users.remove(&user_id);
            }
            Mutation::UserSetActive { user_id, active } => {
                if let Some(user) = state.users.get_mut(&user_id) {
                    user.active = active;
                }
            }
            Mutation::AssignRole { user_id, role_id } => {
                state.user_roles.insert(user_id, role_id);
            }
            Mutation::RevokeRole { user_id, role_id } => {
                state.user_roles.remove(&user_id, &role_id);
            }
            Mutation::PolicyBind { function_id, role_id } => policies::apply_bind(state, function_id, role_id),
            Mutation::PolicyUnbind { function_id, role_id } => policies::apply_unbind(state, &function_id, &role_id),
            Mutation::PolicySetMode { function_id, mode } => {
                if let Some(p) = state.policies.get_mut(&function_id) {
                    p.mode = mode;
                }
            }
            Mutation::ImportUsers { users: batch } => {
                for ImportedUser { user, roles } in batch {
                    for role in roles {
                        state.user_roles.insert(user.id.clone(), role);
                    }
                    state.users.insert(user.id.clone(), user);
                }
            }
        }
    }
}
