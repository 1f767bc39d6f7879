//! Permissions manager: orchestrates user lookup, policy lookup and the
//! policy engine into one [`Decision`].

use serde::Serialize;

use super::{Engine, EngineError, EngineState, Result};
use crate::cost::{CostSchedule, Meter};
use crate::model::{Decision, DecisionReason, FunctionId, RoleSet, UserId};
use crate::policy::{evaluate_metered, EvaluationInput, PolicyMode};

/// One step of the delegation sequence, in the order it happened.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum TraceStep {
    /// The target contract accepted the call.
    Target { function: FunctionId },
    /// The request reached the permissions manager.
    PermissionsManager { user: UserId, function: FunctionId },
    /// The user manager resolved `r_i`.
    UserManagerRoles { user: UserId, roles: RoleSet },
    /// The policy manager matched `r_i` against `r_j`.
    PolicyManagerMatch { function: FunctionId, matched: RoleSet },
    Decision { allowed: bool, reason: DecisionReason },
    Handler { function: FunctionId },
    AuthorizationError { reason: DecisionReason },
}

pub trait Tracer {
    fn step(&mut self, step: TraceStep);
}

/// Discards every step.
impl Tracer for () {
    fn step(&mut self, _: TraceStep) {}
}

#[derive(Debug, Default, Clone)]
pub struct RecordingTracer {
    pub steps: Vec<TraceStep>,
}

impl Tracer for RecordingTracer {
    fn step(&mut self, step: TraceStep) {
        self.steps.push(step);
    }
}

impl EngineState {
    /// Total check: unknown ids produce deny decisions, never errors.
    pub fn check_authorization(&self, user: &UserId, function: &FunctionId, schedule: &CostSchedule) -> Decision {
        self.check_authorization_traced(user, function, schedule, &mut ())
    }

    pub fn check_authorization_traced(
        &self,
        user: &UserId,
        function: &FunctionId,
        schedule: &CostSchedule,
        tracer: &mut dyn Tracer,
    ) -> Decision {
        self.check_with_extra_roles(user, function, &RoleSet::new(), schedule, tracer)
    }

    /// Hypothetical check as if `user` also held `extra_roles`. The state is
    /// not touched.
    pub fn what_if(
        &self,
        user: &UserId,
        function: &FunctionId,
        extra_roles: &RoleSet,
        schedule: &CostSchedule,
    ) -> Result<Decision> {
        for role in extra_roles {
            if !self.role_exists(role) {
                return Err(EngineError::RoleNotFound { role: role.clone() });
            }
        }
        Ok(self.check_with_extra_roles(user, function, extra_roles, schedule, &mut ()))
    }

    fn check_with_extra_roles(
        &self,
        user: &UserId,
        function: &FunctionId,
        extra_roles: &RoleSet,
        schedule: &CostSchedule,
        tracer: &mut dyn Tracer,
    ) -> Decision {
        let mut meter = Meter::default();
        tracer.step(TraceStep::PermissionsManager {
            user: user.clone(),
            function: function.clone(),
        });

        meter.read();
        let user_entry = self.users.get(user);
        meter.read();
        let function_known = self.functions.contains_key(function);

        let mut user_roles = RoleSet::new();
        if let Some(u) = user_entry.filter(|u| u.active) {
            meter.read();
            if let Some(held) = self.user_roles.roles_of(&u.id) {
                user_roles.clone_from(held);
            }
            user_roles.extend(extra_roles.iter().cloned());
            tracer.step(TraceStep::UserManagerRoles {
                user: user.clone(),
                roles: user_roles.clone(),
            });
        }

        let (function_roles, mode) = if function_known && user_entry.is_some_and(|u| u.active) {
            meter.read();
            self.policies
                .get(function)
                .map(|p| (p.required_roles.clone(), p.mode))
                .unwrap_or_default()
        } else {
            (RoleSet::new(), PolicyMode::AnyOf)
        };

        let input = EvaluationInput {
            user_roles,
            function_roles,
            mode,
            user_active: user_entry.is_some_and(|u| u.active),
            user_known: user_entry.is_some(),
            function_known,
        };
        let verdict = evaluate_metered(&input, &mut meter);
        if input.user_known && input.function_known && input.user_active {
            tracer.step(TraceStep::PolicyManagerMatch {
                function: function.clone(),
                matched: verdict.matched_roles.clone(),
            });
        }
        tracer.step(TraceStep::Decision {
            allowed: verdict.allowed,
            reason: verdict.reason,
        });
        verdict.into_decision(&meter, schedule)
    }
}

impl Engine {
    /// [`EngineState::check_authorization`] priced with this engine's schedule.
    pub fn check_authorization(&self, user: &UserId, function: &FunctionId) -> Decision {
        self.state().check_authorization(user, function, self.schedule())
    }

    pub fn what_if(&self, user: &UserId, function: &FunctionId, extra_roles: &RoleSet) -> Result<Decision> {
        self.state().what_if(user, function, extra_roles, self.schedule())
    }
}
