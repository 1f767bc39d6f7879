//! User manager: the set `U` and the relation `U_R`.

use std::collections::BTreeSet;

use super::{roles, AdminScope, Engine, EngineError, EngineState, ImportedUser, Mutation, Result};
use crate::model::{RoleId, RoleSet, User, UserId};

fn external_ref_holder<'a>(state: &'a EngineState, external_ref: &str) -> Option<&'a UserId> {
    state
        .users
        .values()
        .find(|u| u.external_ref.as_deref() == Some(external_ref))
        .map(|u| &u.id)
}

pub(super) fn check_add(state: &EngineState, user: &User) -> Result<()> {
    if state.users.contains_key(&user.id) {
        return Err(EngineError::DuplicateUser { user: user.id.clone() });
    }
    if let Some(r) = &user.external_ref {
        if let Some(holder) = external_ref_holder(state, r) {
            return Err(EngineError::DuplicateExternalRef {
                external_ref: r.clone(),
                user: holder.clone(),
            });
        }
    }
    Ok(())
}

pub(super) fn check_exists(state: &EngineState, user: &UserId) -> Result<()> {
    if !state.users.contains_key(user) {
        return Err(EngineError::UserNotFound { user: user.clone() });
    }
    Ok(())
}

pub(super) fn check_remove(state: &EngineState, user: &UserId) -> Result<()> {
    check_exists(state, user)?;
    if let Some(held) = state.user_roles.roles_of(user) {
        return Err(EngineError::UserHasRoles {
            user: user.clone(),
            roles: held.iter().cloned().collect(),
        });
    }
    Ok(())
}

pub(super) fn check_assign(state: &EngineState, user: &UserId, role: &RoleId) -> Result<()> {
    check_exists(state, user)?;
    roles::check_exists(state, role)?;
    if state.user_roles.contains(user, role) {
        return Err(EngineError::DuplicateAssignment {
            user: user.clone(),
            role: role.clone(),
        });
    }
    Ok(())
}

pub(super) fn check_revoke(state: &EngineState, user: &UserId, role: &RoleId) -> Result<()> {
    check_exists(state, user)?;
    roles::check_exists(state, role)?;
    if !state.user_roles.contains(user, role) {
        return Err(EngineError::AssignmentNotFound {
            user: user.clone(),
            role: role.clone(),
        });
    }
    Ok(())
}

/// A batch is valid when each user would be valid on its own and no two
/// users in the batch collide with each other.
pub(super) fn check_import(state: &EngineState, batch: &[ImportedUser]) -> Result<()> {
    let mut ids = BTreeSet::new();
    let mut refs = BTreeSet::new();
    for ImportedUser { user, roles } in batch {
        check_add(state, user)?;
        if !ids.insert(&user.id) {
            return Err(EngineError::DuplicateUser { user: user.id.clone() });
        }
        if let Some(r) = &user.external_ref {
            if !refs.insert(r) {
                return Err(EngineError::DuplicateExternalRef {
                    external_ref: r.clone(),
                    user: user.id.clone(),
                });
            }
        }
        for role in roles {
            roles::check_exists(state, role)?;
        }
    }
    Ok(())
}

impl EngineState {
    pub fn user_exists(&self, user: &UserId) -> bool {
        self.users.contains_key(user)
    }

    pub fn user_get(&self, user: &UserId) -> Result<&User> {
        self.users.get(user).ok_or_else(|| EngineError::UserNotFound { user: user.clone() })
    }

    pub fn user_list(&self) -> Vec<&User> {
        self.users.values().collect()
    }

    /// The range of `user` under `U_R`.
    pub fn get_user_roles(&self, user: &UserId) -> Result<RoleSet> {
        check_exists(self, user)?;
        Ok(self.user_roles.roles_of(user).cloned().unwrap_or_default())
    }
}

impl Engine {
    pub fn user_add(&mut self, scope: &AdminScope, user: User) -> Result<UserId> {
        let id = user.id.clone();
        self.commit(scope, Mutation::UserAdd { user })?;
        Ok(id)
    }

    /// Rejected with `UserHasRoles` until every assignment is revoked.
    pub fn user_remove(&mut self, scope: &AdminScope, user_id: &UserId) -> Result<()> {
        self.commit(scope, Mutation::UserRemove { user_id: user_id.clone() }).map(drop)
    }

    pub fn user_set_active(&mut self, scope: &AdminScope, user_id: &UserId, active: bool) -> Result<()> {
        self.commit(
            scope,
            Mutation::UserSetActive {
                user_id: user_id.clone(),
                active,
            },
        )
        .map(drop)
    }

    pub fn assign_role(&mut self, scope: &AdminScope, user_id: &UserId, role_id: &RoleId) -> Result<()> {
        self.commit(
            scope,
            Mutation::AssignRole {
                user_id: user_id.clone(),
                role_id: role_id.clone(),
            },
        )
        .map(drop)
    }

    pub fn revoke_role(&mut self, scope: &AdminScope, user_id: &UserId, role_id: &RoleId) -> Result<()> {
        self.commit(
            scope,
            Mutation::RevokeRole {
                user_id: user_id.clone(),
                role_id: role_id.clone(),
            },
        )
        .map(drop)
    }

    /// Creates every user and grant in one event, or nothing.
    pub fn import_users(&mut self, scope: &AdminScope, users: Vec<ImportedUser>) -> Result<()> {
        self.commit(scope, Mutation::ImportUsers { users }).map(drop)
    }
}
