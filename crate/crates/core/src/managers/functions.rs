//! Function manager: the set `F`.

use super::{AdminScope, Engine, EngineError, EngineState, Mutation, Result};
use crate::model::{FunctionDef, FunctionId};

pub(super) fn check_register(state: &EngineState, function: &FunctionDef) -> Result<()> {
    let clash = state.functions.contains_key(&function.id)
        || state
            .functions
            .values()
            .any(|f| f.target_contract == function.target_contract && f.function_name == function.function_name);
    if clash {
        return Err(EngineError::DuplicateFunction {
            function: function.id.clone(),
            target_contract: function.target_contract.clone(),
            function_name: function.function_name.clone(),
        });
    }
    Ok(())
}

pub(super) fn check_exists(state: &EngineState, function: &FunctionId) -> Result<()> {
    if !state.functions.contains_key(function) {
        return Err(EngineError::FunctionNotFound {
            function: function.clone(),
        });
    }
    Ok(())
}

pub(super) fn check_remove(state: &EngineState, function: &FunctionId) -> Result<()> {
    check_exists(state, function)?;
    if state.policies.contains_key(function) {
        return Err(EngineError::FunctionInUse {
            function: function.clone(),
        });
    }
    Ok(())
}

impl EngineState {
    pub fn function_exists(&self, function: &FunctionId) -> bool {
        self.functions.contains_key(function)
    }

    pub fn function_get(&self, function: &FunctionId) -> Result<&FunctionDef> {
        self.functions.get(function).ok_or_else(|| EngineError::FunctionNotFound {
            function: function.clone(),
        })
    }

    pub fn function_list(&self) -> Vec<&FunctionDef> {
        self.functions.values().collect()
    }
}

impl Engine {
    pub fn function_register(&mut self, scope: &AdminScope, function: FunctionDef) -> Result<FunctionId> {
        let id = function.id.clone();
        self.commit(scope, Mutation::FunctionRegister { function })?;
        Ok(id)
    }

    /// Rejected with `FunctionInUse` while a policy exists for the function.
    pub fn function_remove(&mut self, scope: &AdminScope, function_id: &FunctionId) -> Result<()> {
        self.commit(
            scope,
            Mutation::FunctionRemove {
                function_id: function_id.clone(),
            },
        )
        .map(drop)
    }
}
