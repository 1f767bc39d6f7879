//! Dynamic role-based access control.
//!
//! Users, roles, functions and policies are data managed at runtime, not
//! code. A request `(user, function)` is allowed when the roles the user
//! holds intersect the roles the function's policy names (or, for m-of-p
//! policies, when at least `m` of them are held).
//!
//! - [`model`]: identifiers, entities, role mappings, requests, decisions.
//! - [`policy`]: the pure evaluation rule.
//! - [`managers`]: role, function, user, policy and permissions managers,
//!   driven through the single-writer [`Engine`].
//! - [`ledger`]: the hash-chained event log the engine persists to, replay
//!   under swappable apply logic, and snapshots.
//! - [`dispatcher`]: a guarded call layer that runs business handlers only
//!   after an allow.
//! - [`cost`]: abstract cost metering and the dynamic-vs-static scaling
//!   harness.
//! - [`service`], [`cli`], [`import`], [`config`]: the HTTP and command
//!   line surfaces.

pub mod cli;
pub mod config;
pub mod cost;
pub mod dispatcher;
pub mod import;
pub mod ledger;
pub mod managers;
pub mod model;
pub mod policy;
pub mod service;

pub use cost::{CostReceipt, CostSchedule};
pub use dispatcher::{AuthorizationError, Dispatcher};
pub use managers::{AdminScope, Engine, EngineError, EngineState, ManagerKind, Mutation};
pub use model::{Decision, DecisionReason, FunctionDef, FunctionId, Request, Role, RoleId, RoleSet, User, UserId};
pub use policy::{Policy, PolicyMode};
