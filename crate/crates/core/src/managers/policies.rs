//! Policy manager: the relation `F_R` and each function's evaluation mode.
//!
//! A function without a policy entry is treated as `({}, AnyOf)`, which
//! denies everyone. Unbinding the last role drops the entry.

use super::{functions, roles, AdminScope, Engine, EngineError, EngineState, Mutation, Result};
use crate::model::{FunctionId, RoleId, RoleSet};
use crate::policy::{Policy, PolicyMode};

pub(super) fn check_bind(state: &EngineState, function: &FunctionId, role: &RoleId) -> Result<()> {
    functions::check_exists(state, function)?;
    roles::check_exists(state, role)?;
    if state
        .policies
        .get(function)
        .is_some_and(|p| p.required_roles.contains(role))
    {
        return Err(EngineError::DuplicateBinding {
            function: function.clone(),
            role: role.clone(),
        });
    }
    Ok(())
}

pub(super) fn check_unbind(state: &EngineState, function: &FunctionId, role: &RoleId) -> Result<()> {
    functions::check_exists(state, function)?;
    roles::check_exists(state, role)?;
    let Some(policy) = state.policies.get(function).filter(|p| p.required_roles.contains(role)) else {
        return Err(EngineError::BindingNotFound {
            function: function.clone(),
            role: role.clone(),
        });
    };
    let remaining = policy.required_roles.len() - 1;
    let fits = match policy.mode {
        // Dropping to zero roles removes the policy, which is always allowed.
        PolicyMode::AnyOf => true,
        mode => Policy::mode_fits(mode, remaining),
    };
    if !fits {
        return Err(EngineError::ThresholdViolation {
            function: function.clone(),
            mode: policy.mode,
            role_count: remaining,
        });
    }
    Ok(())
}

pub(super) fn check_set_mode(state: &EngineState, function: &FunctionId, mode: PolicyMode) -> Result<()> {
    functions::check_exists(state, function)?;
    let role_count = state.policies.get(function).map_or(0, |p| p.required_roles.len());
    if !Policy::mode_fits(mode, role_count) {
        return Err(EngineError::ThresholdViolation {
            function: function.clone(),
            mode,
            role_count,
        });
    }
    Ok(())
}

pub(super) fn apply_bind(state: &mut EngineState, function: FunctionId, role: RoleId) {
    state
        .policies
        .entry(function.clone())
        .or_insert_with(|| Policy::new(function))
        .required_roles
        .insert(role);
}

pub(super) fn apply_unbind(state: &mut EngineState, function: &FunctionId, role: &RoleId) {
    if let Some(policy) = state.policies.get_mut(function) {
        policy.required_roles.remove(role);
        if policy.required_roles.is_empty() {
            state.policies.remove(function);
        }
    }
}

impl EngineState {
    /// `r_j` and the evaluation mode for `function`.
    pub fn get_function_roles(&self, function: &FunctionId) -> Result<(RoleSet, PolicyMode)> {
        functions::check_exists(self, function)?;
        Ok(self
            .policies
            .get(function)
            .map(|p| (p.required_roles.clone(), p.mode))
            .unwrap_or_default())
    }

    pub fn policy_get(&self, function: &FunctionId) -> Option<&Policy> {
        self.policies.get(function)
    }
}

impl Engine {
    pub fn policy_bind(&mut self, scope: &AdminScope, function_id: &FunctionId, role_id: &RoleId) -> Result<()> {
        self.commit(
            scope,
            Mutation::PolicyBind {
                function_id: function_id.clone(),
                role_id: role_id.clone(),
            },
        )
        .map(drop)
    }

    /// Rejected with `ThresholdViolation` when an m-of-p policy would be
    /// left with fewer than `m` roles.
    pub fn policy_unbind(&mut self, scope: &AdminScope, function_id: &FunctionId, role_id: &RoleId) -> Result<()> {
        self.commit(
            scope,
            Mutation::PolicyUnbind {
                function_id: function_id.clone(),
                role_id: role_id.clone(),
            },
        )
        .map(drop)
    }

    pub fn policy_set_mode(&mut self, scope: &AdminScope, function_id: &FunctionId, mode: PolicyMode) -> Result<()> {
        self.commit(
            scope,
            Mutation::PolicySetMode {
                function_id: function_id.clone(),
                mode,
            },
        )
        .map(drop)
    }
}
