//! Simulated target-contract layer.
//!
//! A business function registered here only runs after the permissions
//! manager allows the call. Denied calls surface as [`AuthorizationError`]
//! and never reach the handler. Existence checks (user, function) happen in
//! the dispatcher before the handler; on-chain the target contract would
//! accept the call first and delegate.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{CostReceipt, CostSchedule, CostUnits};
use crate::managers::{EngineState, TraceStep, Tracer};
use crate::model::{DecisionReason, FunctionId, Request, RequestId, UserId};

/// In-process stand-in for a target contract function.
pub trait Handler: Send + Sync {
    fn call(&self, call_args: &[u8]) -> Result<Vec<u8>, String>;
}

impl<F> Handler for F
where
    F: Fn(&[u8]) -> Result<Vec<u8>, String> + Send + Sync,
{
    fn call(&self, call_args: &[u8]) -> Result<Vec<u8>, String> {
        self(call_args)
    }
}

/// Whether a handler may run concurrently with itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HandlerMode {
    #[default]
    Concurrent,
    Serialized,
}

struct TargetRegistration {
    handler: Arc<dyn Handler>,
    metered_cost: CostUnits,
    serial: Option<Mutex<()>>,
    executions: AtomicU64,
}

/// The refused-call outcome. `reason` is never `Matched`.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("request {request_id}: {user_id} may not call {function_id} ({reason})")]
pub struct AuthorizationError {
    pub request_id: RequestId,
    pub reason: DecisionReason,
    pub function_id: FunctionId,
    pub user_id: UserId,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegisterError {
    #[error("function {0} not found")]
    FunctionNotFound(FunctionId),
    #[error("function {0} already has a handler")]
    DuplicateRegistration(FunctionId),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InvokeError {
    #[error(transparent)]
    Authorization(#[from] AuthorizationError),
    /// Authorization passed; the handler itself failed.
    #[error("handler for {function_id} failed on request {request_id}: {message}")]
    HandlerFailure {
        request_id: RequestId,
        function_id: FunctionId,
        message: String,
    },
    #[error("authorized function {function_id} has no registered handler")]
    NoHandler {
        request_id: RequestId,
        function_id: FunctionId,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvocationOutcome {
    Executed,
    Denied,
    HandlerFailed,
    NoHandler,
}

/// One entry of the invocation journal, kept apart from the mutation log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvocationRecord {
    pub request_id: RequestId,
    pub user_id: UserId,
    pub function_id: FunctionId,
    pub state_version: u64,
    pub allowed: bool,
    pub reason: DecisionReason,
    pub outcome: InvocationOutcome,
    pub check_cost: CostReceipt,
    /// Check cost plus the handler's metered cost when it ran.
    pub total_cost: CostUnits,
}

#[derive(Default)]
pub struct Dispatcher {
    targets: RwLock<BTreeMap<FunctionId, Arc<TargetRegistration>>>,
    journal: Mutex<Vec<InvocationRecord>>,
    schedule: CostSchedule,
}

impl fmt::Debug for Dispatcher {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Dispatcher")
            .field("targets", &self.targets.read().keys().collect::<Vec<_>>())
            .field("journal_len", &self.journal.lock().len())
            .finish()
    }
}

impl Dispatcher {
    pub fn new(schedule: CostSchedule) -> Self {
        Self {
            schedule,
            ..Self::default()
        }
    }

    pub fn register_target(
        &self,
        state: &EngineState,
        function_id: &FunctionId,
        handler: Arc<dyn Handler>,
        metered_cost: CostUnits,
        mode: HandlerMode,
    ) -> Result<(), RegisterError> {
        if !state.function_exists(function_id) {
            return Err(RegisterError::FunctionNotFound(function_id.clone()));
        }
        let mut targets = self.targets.write();
        if targets.contains_key(function_id) {
            return Err(RegisterError::DuplicateRegistration(function_id.clone()));
        }
        targets.insert(
            function_id.clone(),
            Arc::new(TargetRegistration {
                handler,
                metered_cost,
                serial: (mode == HandlerMode::Serialized).then(|| Mutex::new(())),
                executions: AtomicU64::new(0),
            }),
        );
        Ok(())
    }

    pub fn is_registered(&self, function_id: &FunctionId) -> bool {
        self.targets.read().contains_key(function_id)
    }

    /// How many times the handler for `function_id` has run.
    pub fn executions(&self, function_id: &FunctionId) -> u64 {
        self.targets
            .read()
            .get(function_id)
            .map_or(0, |t| t.executions.load(Ordering::SeqCst))
    }

    pub fn journal(&self) -> Vec<InvocationRecord> {
        self.journal.lock().clone()
    }

    pub fn invoke(&self, state: &EngineState, req: &Request) -> Result<Vec<u8>, InvokeError> {
        self.invoke_traced(state, req, &mut ())
    }

    /// Checks authorization against `state`, then runs the handler exactly
    /// once on allow. `state` is never modified.
    pub fn invoke_traced(&self, state: &EngineState, req: &Request, tracer: &mut dyn Tracer) -> Result<Vec<u8>, InvokeError> {
        tracer.step(TraceStep::Target {
            function: req.function_id.clone(),
        });
        let decision = state.check_authorization_traced(&req.user_id, &req.function_id, &self.schedule, tracer);
        let mut record = InvocationRecord {
            request_id: req.request_id.clone(),
            user_id: req.user_id.clone(),
            function_id: req.function_id.clone(),
            state_version: state.version,
            allowed: decision.allowed,
            reason: decision.reason,
            outcome: InvocationOutcome::Denied,
            check_cost: decision.cost,
            total_cost: decision.cost.total,
        };

        if !decision.allowed {
            tracer.step(TraceStep::AuthorizationError { reason: decision.reason });
            self.journal.lock().push(record);
            return Err(AuthorizationError {
                request_id: req.request_id.clone(),
                reason: decision.reason,
                function_id: req.function_id.clone(),
                user_id: req.user_id.clone(),
            }
            .into());
        }

        let target = self.targets.read().get(&req.function_id).cloned();
        let Some(target) = target else {
            record.outcome = InvocationOutcome::NoHandler;
            self.journal.lock().push(record);
            return Err(InvokeError::NoHandler {
                request_id: req.request_id.clone(),
                function_id: req.function_id.clone(),
            });
        };

        tracer.step(TraceStep::Handler {
            function: req.function_id.clone(),
        });
        let result = {
            let _guard = target.serial.as_ref().map(|m| m.lock());
            target.executions.fetch_add(1, Ordering::SeqCst);
            target.handler.call(&req.call_args)
        };
        record.total_cost += target.metered_cost;
        match result {
            Ok(bytes) => {
                record.outcome = InvocationOutcome::Executed;
                self.journal.lock().push(record);
                Ok(bytes)
            }
            Err(message) => {
                record.outcome = InvocationOutcome::HandlerFailed;
                self.journal.lock().push(record);
                Err(InvokeError::HandlerFailure {
                    request_id: req.request_id.clone(),
                    function_id: req.function_id.clone(),
                    message,
                })
            }
        }
    }
}

/// Demo handlers for end-to-end use.
pub mod demo {
    use std::sync::atomic::{AtomicU64, Ordering};
    use std::sync::Arc;

    use super::Handler;

    /// Returns its arguments unchanged.
    pub fn echo() -> Arc<dyn Handler> {
        Arc::new(|args: &[u8]| Ok(args.to_vec()))
    }

    /// Increments a shared counter and returns the new value as decimal text.
    pub fn counter() -> (Arc<dyn Handler>, Arc<AtomicU64>) {
        let count = Arc::new(AtomicU64::new(0));
        let c = Arc::clone(&count);
        let handler = Arc::new(move |_: &[u8]| Ok((c.fetch_add(1, Ordering::SeqCst) + 1).to_string().into_bytes()));
        (handler, count)
    }

    /// Always fails.
    pub fn failing(message: &'static str) -> Arc<dyn Handler> {
        Arc::new(move |_: &[u8]| Err(message.to_string()))
    }
}
