//! Role manager: the set `R`.

use super::{AdminScope, Engine, EngineError, EngineState, Mutation, Result};
use crate::model::{Metadata, Role, RoleId};

pub(super) fn check_add(state: &EngineState, role: &Role) -> Result<()> {
    if state.roles.contains_key(&role.id) {
        return Err(EngineError::DuplicateRole { role: role.id.clone() });
    }
    Ok(())
}

pub(super) fn check_exists(state: &EngineState, role: &RoleId) -> Result<()> {
    if !state.roles.contains_key(role) {
        return Err(EngineError::RoleNotFound { role: role.clone() });
    }
    Ok(())
}

pub(super) fn check_update(state: &EngineState, role: &RoleId) -> Result<()> {
    check_exists(state, role)
}

/// A role linked to any user or function cannot be disposed of.
pub(super) fn check_remove(state: &EngineState, role: &RoleId) -> Result<()> {
    check_exists(state, role)?;
    let users = state.user_roles.users_with(role);
    let functions: Vec<_> = state
        .policies
        .values()
        .filter(|p| p.required_roles.contains(role))
        .map(|p| p.function_id.clone())
        .collect();
    if !users.is_empty() || !functions.is_empty() {
        return Err(EngineError::RoleInUse {
            role: role.clone(),
            users,
            functions,
        });
    }
    Ok(())
}

impl EngineState {
    pub fn role_exists(&self, role: &RoleId) -> bool {
        self.roles.contains_key(role)
    }

    pub fn role_get(&self, role: &RoleId) -> Result<&Role> {
        self.roles.get(role).ok_or_else(|| EngineError::RoleNotFound { role: role.clone() })
    }

    /// All roles, sorted by id.
    pub fn role_list(&self) -> Vec<&Role> {
        self.roles.values().collect()
    }
}

impl Engine {
    pub fn role_add(&mut self, scope: &AdminScope, role: Role) -> Result<RoleId> {
        let id = role.id.clone();
        self.commit(scope, Mutation::RoleAdd { role })?;
        Ok(id)
    }

    /// Replaces description and metadata. Logged even when nothing changes.
    pub fn role_update(
        &mut self,
        scope: &AdminScope,
        role_id: &RoleId,
        description: impl Into<String>,
        metadata: Metadata,
    ) -> Result<()> {
        self.commit(
            scope,
            Mutation::RoleUpdate {
                role_id: role_id.clone(),
                description: description.into(),
                metadata,
            },
        )
        .map(drop)
    }

    pub fn role_remove(&mut self, scope: &AdminScope, role_id: &RoleId) -> Result<()> {
        self.commit(scope, Mutation::RoleRemove { role_id: role_id.clone() }).map(drop)
    }
}
