//! Fixtures and a brute-force reference decision shared by the integration
//! tests. Nothing here calls into the policy engine.

#![allow(dead_code)]

use std::collections::BTreeSet;

use drbac::managers::ImportedUser;
use drbac::model::Metadata;
use drbac::{AdminScope, DecisionReason, Engine, FunctionDef, FunctionId, Mutation, PolicyMode, Role, RoleId, User, UserId};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rid(s: &str) -> RoleId {
    RoleId::new(s).unwrap()
}
pub fn uid(s: &str) -> UserId {
    UserId::new(s).unwrap()
}
pub fn fid(s: &str) -> FunctionId {
    FunctionId::new(s).unwrap()
}

pub fn root() -> AdminScope {
    AdminScope::root("root")
}

/// Raw relations as flat lists, the way a naive implementation would hold
/// them.
#[derive(Debug, Clone, Default)]
pub struct RawFixture {
    pub users: Vec<String>,
    pub inactive: Vec<String>,
    pub roles: Vec<String>,
    pub functions: Vec<String>,
    pub user_roles: Vec<(String, String)>,
    pub function_roles: Vec<(String, String)>,
    /// `(function, m)`; functions absent here are any-of.
    pub thresholds: Vec<(String, u32)>,
}

/// Fixture `index` of the shared oracle corpus. The first ten use the
/// maximum sizes.
pub fn corpus_fixture(index: u64) -> RawFixture {
    let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0xC1 ^ (index << 8));
    if index < 10 {
        RawFixture::random_sized(&mut rng, 50, 20, 30)
    } else {
        RawFixture::random(&mut rng, 50, 20, 30)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expected {
    pub allowed: bool,
    pub reason: DecisionReason,
    pub matched: Vec<String>,
}

impl RawFixture {
    pub fn random(rng: &mut ChaCha8Rng, max_users: usize, max_roles: usize, max_functions: usize) -> Self {
        let n_u = rng.gen_range(1..=max_users);
        let n_r = rng.gen_range(1..=max_roles);
        let n_f = rng.gen_range(1..=max_functions);
        Self::random_sized(rng, n_u, n_r, n_f)
    }

    pub fn random_sized(rng: &mut ChaCha8Rng, n_u: usize, n_r: usize, n_f: usize) -> Self {
        let users: Vec<String> = (0..n_u).map(|i| format!("u{i}")).collect();
        let roles: Vec<String> = (0..n_r).map(|i| format!("r{i}")).collect();
        let functions: Vec<String> = (0..n_f).map(|i| format!("f{i}")).collect();
        let inactive = users.iter().filter(|_| rng.gen_bool(0.1)).cloned().collect();
        let ur_density = rng.gen_range(0.0..0.4);
        let fr_density = rng.gen_range(0.0..0.3);
        let mut user_roles = Vec::new();
        for u in &users {
            for r in &roles {
                if rng.gen_bool(ur_density) {
                    user_roles.push((u.clone(), r.clone()));
                }
            }
        }
        let mut function_roles = Vec::new();
        let mut thresholds = Vec::new();
        for f in &functions {
            let mut count = 0;
            for r in &roles {
                if rng.gen_bool(fr_density) {
                    function_roles.push((f.clone(), r.clone()));
                    count += 1;
                }
            }
            if count > 0 && rng.gen_bool(0.4) {
                thresholds.push((f.clone(), rng.gen_range(1..=count)));
            }
        }
        user_roles.shuffle(rng);
        function_roles.shuffle(rng);
        Self {
            users,
            inactive,
            roles,
            functions,
            user_roles,
            function_roles,
            thresholds,
        }
    }

    pub fn build(&self) -> Engine {
        let s = root();
        let mut e = Engine::in_memory().with_clock(Box::new(|| 0));
        for r in &self.roles {
            e.role_add(&s, Role::new(rid(r))).unwrap();
        }
        for u in &self.users {
            e.user_add(&s, User::new(uid(u))).unwrap();
        }
        for u in &self.inactive {
            e.user_set_active(&s, &uid(u), false).unwrap();
        }
        for f in &self.functions {
            e.function_register(&s, FunctionDef::new(fid(f), "Contract", f.as_str())).unwrap();
        }
        for (u, r) in &self.user_roles {
            e.assign_role(&s, &uid(u), &rid(r)).unwrap();
        }
        for (f, r) in &self.function_roles {
            e.policy_bind(&s, &fid(f), &rid(r)).unwrap();
        }
        for (f, m) in &self.thresholds {
            e.policy_set_mode(&s, &fid(f), PolicyMode::MOfP { m: *m }).unwrap();
        }
        e
    }

    /// Queried users and functions: every real one plus two unknown each.
    pub fn query_ids(&self) -> (Vec<String>, Vec<String>) {
        let mut users = self.users.clone();
        users.extend(["ghost-a".to_string(), "ghost-b".to_string()]);
        let mut functions = self.functions.clone();
        functions.extend(["nowhere-a".to_string(), "nowhere-b".to_string()]);
        (users, functions)
    }

    /// Linear scans over the raw lists.
    pub fn expected(&self, user: &str, function: &str) -> Expected {
        let deny = |reason| Expected {
            allowed: false,
            reason,
            matched: vec![],
        };
        if !self.users.iter().any(|u| u == user) {
            return deny(DecisionReason::UnknownUser);
        }
        if !self.functions.iter().any(|f| f == function) {
            return deny(DecisionReason::UnknownFunction);
        }
        if self.inactive.iter().any(|u| u == user) {
            return deny(DecisionReason::InactiveUser);
        }
        let mut matched = Vec::new();
        for (f, r) in &self.function_roles {
            if f != function {
                continue;
            }
            let mut held = false;
            for (u, r2) in &self.user_roles {
                if u == user && r2 == r {
                    held = true;
                }
            }
            if held {
                matched.push(r.clone());
            }
        }
        matched.sort();
        let mut threshold = None;
        for (f, m) in &self.thresholds {
            if f == function {
                threshold = Some(*m as usize);
            }
        }
        let (allowed, reason) = match threshold {
            None if matched.is_empty() => (false, DecisionReason::NoRoleIntersection),
            None => (true, DecisionReason::Matched),
            Some(m) if matched.len() >= m => (true, DecisionReason::Matched),
            Some(_) => (false, DecisionReason::ThresholdNotMet),
        };
        Expected { allowed, reason, matched }
    }
}

pub const USER_POOL: usize = 24;
pub const ROLE_POOL: usize = 12;
pub const FUNCTION_POOL: usize = 16;

fn pick_existing<T: Clone>(rng: &mut ChaCha8Rng, existing: Vec<T>, fresh: impl FnOnce(&mut ChaCha8Rng) -> T) -> T {
    if !existing.is_empty() && rng.gen_bool(0.8) {
        existing.choose(rng).unwrap().clone()
    } else {
        fresh(rng)
    }
}

fn any_user(rng: &mut ChaCha8Rng) -> UserId {
    uid(&format!("u{}", rng.gen_range(0..USER_POOL)))
}
fn any_role(rng: &mut ChaCha8Rng) -> RoleId {
    rid(&format!("r{}", rng.gen_range(0..ROLE_POOL)))
}
fn any_function(rng: &mut ChaCha8Rng) -> FunctionId {
    fid(&format!("f{}", rng.gen_range(0..FUNCTION_POOL)))
}

fn metadata(rng: &mut ChaCha8Rng) -> Metadata {
    let mut m = Metadata::new();
    if rng.gen_bool(0.3) {
        m.insert("org".into(), format!("org-{}", rng.gen_range(0..3)));
    }
    m
}

/// A mutation that is often valid against `state` and sometimes not.
pub fn random_mutation(state: &drbac::EngineState, rng: &mut ChaCha8Rng) -> Mutation {
    let users: Vec<UserId> = state.users.keys().cloned().collect();
    let roles: Vec<RoleId> = state.roles.keys().cloned().collect();
    let functions: Vec<FunctionId> = state.functions.keys().cloned().collect();
    let user = |rng: &mut ChaCha8Rng| pick_existing(rng, users.clone(), any_user);
    let role = |rng: &mut ChaCha8Rng| pick_existing(rng, roles.clone(), any_role);
    let function = |rng: &mut ChaCha8Rng| pick_existing(rng, functions.clone(), any_function);
    match rng.gen_range(0..100) {
        0..=9 => Mutation::RoleAdd {
            role: Role {
                id: any_role(rng),
                description: String::new(),
                metadata: metadata(rng),
            },
        },
        10..=12 => Mutation::RoleUpdate {
            role_id: role(rng),
            description: format!("rev {}", rng.gen_range(0..5)),
            metadata: metadata(rng),
        },
        13..=16 => Mutation::RoleRemove { role_id: role(rng) },
        17..=24 => {
            let id = any_function(rng);
            let name = if rng.gen_bool(0.1) {
                format!("f{}", rng.gen_range(0..FUNCTION_POOL))
            } else {
                id.to_string()
            };
            Mutation::FunctionRegister {
                function: FunctionDef::new(id, "Contract", name),
            }
        }
        25..=27 => Mutation::FunctionRemove { function_id: function(rng) },
        28..=37 => {
            let mut u = User::new(any_user(rng));
            if rng.gen_bool(0.3) {
                u.external_ref = Some(format!("idp|{}", rng.gen_range(0..8)));
            }
            u.metadata = metadata(rng);
            Mutation::UserAdd { user: u }
        }
        38..=40 => Mutation::UserRemove { user_id: user(rng) },
        41..=44 => Mutation::UserSetActive {
            user_id: user(rng),
            active: rng.gen_bool(0.6),
        },
        45..=62 => Mutation::AssignRole {
            user_id: user(rng),
            role_id: role(rng),
        },
        63..=69 => {
            let held: Vec<(UserId, RoleId)> = state
                .user_roles
                .pairs()
                .map(|(u, r)| (u.clone(), r.clone()))
                .collect();
            let (user_id, role_id) = pick_existing(rng, held, |rng| (any_user(rng), any_role(rng)));
            Mutation::RevokeRole { user_id, role_id }
        }
        70..=83 => Mutation::PolicyBind {
            function_id: function(rng),
            role_id: role(rng),
        },
        84..=89 => {
            let bound: Vec<(FunctionId, RoleId)> = state
                .policies
                .values()
                .flat_map(|p| p.required_roles.iter().map(|r| (p.function_id.clone(), r.clone())))
                .collect();
            let (function_id, role_id) = pick_existing(rng, bound, |rng| (any_function(rng), any_role(rng)));
            Mutation::PolicyUnbind { function_id, role_id }
        }
        90..=95 => Mutation::PolicySetMode {
            function_id: function(rng),
            mode: if rng.gen_bool(0.3) {
                PolicyMode::AnyOf
            } else {
                PolicyMode::MOfP { m: rng.gen_range(0..4) }
            },
        },
        _ => {
            let n = rng.gen_range(1..=3);
            let users = (0..n)
                .map(|_| ImportedUser {
                    user: User::new(any_user(rng)),
                    roles: (0..rng.gen_range(0..3)).map(|_| role(rng)).collect::<BTreeSet<_>>(),
                })
                .collect();
            Mutation::ImportUsers { users }
        }
    }
}

/// Commits random mutations until `events` have been appended. Calls
/// `after` with the engine after every attempt.
pub fn drive(engine: &mut Engine, rng: &mut ChaCha8Rng, events: u64, mut after: impl FnMut(&Engine, &Mutation, bool)) {
    let target = engine.head().sequence + events;
    while engine.head().sequence < target {
        let m = random_mutation(engine.state(), rng);
        let ok = engine.commit(&root(), m.clone()).is_ok();
        after(engine, &m, ok);
    }
}
