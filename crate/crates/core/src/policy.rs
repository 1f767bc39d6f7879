//! Pure policy evaluation: `r_i ∩ r_j ≠ ∅`, plus the m-of-p threshold mode.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cost::{CostSchedule, Meter};
use crate::model::{Decision, DecisionReason, FunctionId, RoleSet};

/// How a function's role set is evaluated against the caller's roles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyMode {
    /// Any single shared role grants access.
    #[default]
    AnyOf,
    /// At least `m` of the policy's roles must be held.
    #[serde(rename = "m_of_p")]
    MOfP { m: u32 },
}

impl fmt::Display for PolicyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyMode::AnyOf => f.write_str("anyof"),
            PolicyMode::MOfP { m } => write!(f, "mofp:{m}"),
        }
    }
}

impl FromStr for PolicyMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let lower = s.to_ascii_lowercase();
        if lower == "anyof" || lower == "any_of" {
            return Ok(PolicyMode::AnyOf);
        }
        let m = lower
            .strip_prefix("mofp:")
            .ok_or_else(|| format!("unknown mode {s:?}, expected anyof or mofp:<m>"))?;
        let m: u32 = m.parse().map_err(|e| format!("bad threshold in {s:?}: {e}"))?;
        if m == 0 {
            return Err("threshold must be at least 1".into());
        }
        Ok(PolicyMode::MOfP { m })
    }
}

/// Per-function access rule.
///
/// `MOfP { m }` requires `1 <= m <= required_roles.len()`. An empty role set
/// is only valid under `AnyOf` and denies everyone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Policy {
    pub function_id: FunctionId,
    pub required_roles: RoleSet,
    pub mode: PolicyMode,
}

impl Policy {
    pub fn new(function_id: FunctionId) -> Self {
        Self {
            function_id,
            required_roles: RoleSet::new(),
            mode: PolicyMode::AnyOf,
        }
    }

    /// Whether `mode` is admissible for a policy with `role_count` roles.
    pub fn mode_fits(mode: PolicyMode, role_count: usize) -> bool {
        match mode {
            PolicyMode::AnyOf => true,
            PolicyMode::MOfP { m } => m >= 1 && (m as usize) <= role_count,
        }
    }

    pub fn is_well_formed(&self) -> bool {
        Self::mode_fits(self.mode, self.required_roles.len())
    }
}

/// Everything [`evaluate`] needs, already looked up.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvaluationInput {
    /// `r_i`.
    pub user_roles: RoleSet,
    /// `r_j`.
    pub function_roles: RoleSet,
    pub mode: PolicyMode,
    pub user_active: bool,
    pub user_known: bool,
    pub function_known: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Verdict {
    pub allowed: bool,
    pub reason: DecisionReason,
    pub matched_roles: RoleSet,
}

impl Verdict {
    pub(crate) fn into_decision(self, meter: &Meter, schedule: &CostSchedule) -> Decision {
        Decision {
            allowed: self.allowed,
            reason: self.reason,
            matched_roles: self.matched_roles,
            cost: meter.receipt(schedule),
        }
    }
}

/// Intersection by probing `r_i` once per policy role. One compare is
/// charged per probe, so the count depends only on the policy size.
pub(crate) fn matched_roles(user_roles: &RoleSet, function_roles: &RoleSet, meter: &mut Meter) -> RoleSet {
    let mut matched = RoleSet::new();
    for role in function_roles {
        meter.compare();
        if user_roles.contains(role) {
            matched.insert(role.clone());
        }
    }
    matched
}

pub(crate) fn evaluate_metered(input: &EvaluationInput, meter: &mut Meter) -> Verdict {
    let matched = matched_roles(&input.user_roles, &input.function_roles, meter);
    let deny = |reason, matched_roles| Verdict {
        allowed: false,
        reason,
        matched_roles,
    };
    if !input.user_known {
        return deny(DecisionReason::UnknownUser, matched);
    }
    if !input.function_known {
        return deny(DecisionReason::UnknownFunction, matched);
    }
    if !input.user_active {
        return deny(DecisionReason::InactiveUser, matched);
    }
    match input.mode {
        PolicyMode::AnyOf if matched.is_empty() => deny(DecisionReason::NoRoleIntersection, matched),
        PolicyMode::MOfP { m } if matched.len() < m as usize || m == 0 => {
            deny(DecisionReason::ThresholdNotMet, matched)
        }
        _ => Verdict {
            allowed: true,
            reason: DecisionReason::Matched,
            matched_roles: matched,
        },
    }
}

/// Evaluates one request. Deny reasons are checked in the order unknown
/// user, unknown function, inactive user, then the policy itself.
///
/// The attached receipt prices the compares at the default schedule.
pub fn evaluate(input: &EvaluationInput) -> Decision {
    let mut meter = Meter::default();
    evaluate_metered(input, &mut meter).into_decision(&meter, &CostSchedule::default())
}

pub fn evaluate_batch(inputs: &[EvaluationInput]) -> Vec<Decision> {
    inputs.iter().map(evaluate).collect()
}
