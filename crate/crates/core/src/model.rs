//! Value types shared by every other module: identifiers, entities, the two
//! role mappings, requests and decisions.
//!
//! Identifiers are split into three newtypes ([`UserId`], [`RoleId`],
//! [`FunctionId`]) so ids of different kinds cannot be confused. The
//! kind-erased [`EntityId`] exists for input validation and display.
//!
//! All sets are `BTreeSet`s and all maps are `BTreeMap`s, so serde
//! serialization is deterministic and sorted byte-lexicographically.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::CostReceipt;

/// Longest identifier accepted, in bytes.
pub const MAX_ID_LEN: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    User,
    Role,
    Function,
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntityKind::User => "user",
            EntityKind::Role => "role",
            EntityKind::Function => "function",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IdError {
    #[error("{kind} id is empty")]
    EmptyId { kind: EntityKind },
    #[error("{kind} id contains illegal character {ch:?} at byte {at}")]
    IllegalCharacter { kind: EntityKind, ch: char, at: usize },
    #[error("{kind} id is {len} bytes, limit is {MAX_ID_LEN}")]
    TooLong { kind: EntityKind, len: usize },
}

fn check_raw(kind: EntityKind, raw: &str) -> Result<(), IdError> {
    if raw.is_empty() {
        return Err(IdError::EmptyId { kind });
    }
    if raw.len() > MAX_ID_LEN {
        return Err(IdError::TooLong { kind, len: raw.len() });
    }
    if let Some((at, ch)) = raw
        .char_indices()
        .find(|(_, c)| c.is_whitespace() || c.is_control())
    {
        return Err(IdError::IllegalCharacter { kind, ch, at });
    }
    Ok(())
}

macro_rules! entity_id {
    ($(#[$meta:meta])* $name:ident, $kind:expr) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(try_from = "String", into = "String")]
        pub struct $name(String);

        impl $name {
            pub const KIND: EntityKind = $kind;

            pub fn new(raw: impl Into<String>) -> Result<Self, IdError> {
                let raw = raw.into();
                check_raw($kind, &raw)?;
                Ok(Self(raw))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl TryFrom<String> for $name {
            type Error = IdError;
            fn try_from(raw: String) -> Result<Self, IdError> {
                Self::new(raw)
            }
        }

        impl TryFrom<&str> for $name {
            type Error = IdError;
            fn try_from(raw: &str) -> Result<Self, IdError> {
                Self::new(raw)
            }
        }

        impl std::str::FromStr for $name {
            type Err = IdError;
            fn from_str(raw: &str) -> Result<Self, IdError> {
                Self::new(raw)
            }
        }

        impl From<$name> for String {
            fn from(id: $name) -> String {
                id.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }
    };
}

entity_id!(
    /// Identifier of a user (`u_i`).
    UserId,
    EntityKind::User
);
entity_id!(
    /// Identifier of a role (`r_p`).
    RoleId,
    EntityKind::Role
);
entity_id!(
    /// Identifier of a guarded function (`f_q`).
    FunctionId,
    EntityKind::Function
);

/// Kind-tagged identifier. Two ids of different kinds never compare equal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EntityId {
    User(UserId),
    Role(RoleId),
    Function(FunctionId),
}

impl EntityId {
    pub fn kind(&self) -> EntityKind {
        match self {
            EntityId::User(_) => EntityKind::User,
            EntityId::Role(_) => EntityKind::Role,
            EntityId::Function(_) => EntityKind::Function,
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            EntityId::User(id) => id.as_str(),
            EntityId::Role(id) => id.as_str(),
            EntityId::Function(id) => id.as_str(),
        }
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind(), self.as_str())
    }
}

/// Validates `raw` as an identifier of the given kind. Never touches state.
pub fn validate_id(kind: EntityKind, raw: &str) -> Result<EntityId, IdError> {
    Ok(match kind {
        EntityKind::User => EntityId::User(UserId::new(raw)?),
        EntityKind::Role => EntityId::Role(RoleId::new(raw)?),
        EntityKind::Function => EntityId::Function(FunctionId::new(raw)?),
    })
}

pub type RoleSet = BTreeSet<RoleId>;
pub type Metadata = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct User {
    pub id: UserId,
    /// Subject identifier in an external identity provider.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external_ref: Option<String>,
    #[serde(default)]
    pub metadata: Metadata,
    #[serde(default = "default_true")]
    pub active: bool,
}

fn default_true() -> bool {
    true
}

impl User {
    pub fn new(id: UserId) -> Self {
        Self {
            id,
            external_ref: None,
            metadata: Metadata::new(),
            active: true,
        }
    }

    pub fn with_external_ref(mut self, external_ref: impl Into<String>) -> Self {
        self.external_ref = Some(external_ref.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Role {
    pub id: RoleId,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub metadata: Metadata,
}

impl Role {
    pub fn new(id: RoleId) -> Self {
        Self {
            id,
            description: String::new(),
            metadata: Metadata::new(),
        }
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = description.into();
        self
    }
}

/// A guarded function on some target contract. `(target_contract,
/// function_name)` is unique across the engine.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionDef {
    pub id: FunctionId,
    pub target_contract: String,
    pub function_name: String,
    /// Opaque selector bytes, hex encoded on the wire.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_hex")]
    pub selector: Option<Vec<u8>>,
}

impl FunctionDef {
    pub fn new(id: FunctionId, target_contract: impl Into<String>, function_name: impl Into<String>) -> Self {
        Self {
            id,
            target_contract: target_contract.into(),
            function_name: function_name.into(),
            selector: None,
        }
    }

    /// Mints the id `"{contract}.{name}"` for a contract-qualified function.
    pub fn qualified(target_contract: &str, function_name: &str) -> Result<Self, IdError> {
        let id = FunctionId::new(format!("{target_contract}.{function_name}"))?;
        Ok(Self::new(id, target_contract, function_name))
    }
}

mod opt_hex {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &Option<Vec<u8>>, s: S) -> Result<S::Ok, S::Error> {
        match bytes {
            Some(b) => s.serialize_some(&hex::encode(b)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<u8>>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|h| hex::decode(h).map_err(serde::de::Error::custom))
            .transpose()
    }
}

/// The user-role relation `U_R`. Serialized as a sorted list of
/// `[user, role]` pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UserRoleMapping {
    // Users appear only with a non-empty role set.
    by_user: BTreeMap<UserId, RoleSet>,
}

impl UserRoleMapping {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns false if the pair was already present.
    pub fn insert(&mut self, user: UserId, role: RoleId) -> bool {
        self.by_user.entry(user).or_default().insert(role)
    }

    /// Returns false if the pair was absent.
    pub fn remove(&mut self, user: &UserId, role: &RoleId) -> bool {
        let Some(roles) = self.by_user.get_mut(user) else {
            return false;
        };
        let removed = roles.remove(role);
        if roles.is_empty() {
            self.by_user.remove(user);
        }
        removed
    }

    pub fn contains(&self, user: &UserId, role: &RoleId) -> bool {
        self.by_user.get(user).is_some_and(|r| r.contains(role))
    }

    pub fn roles_of(&self, user: &UserId) -> Option<&RoleSet> {
        self.by_user.get(user)
    }

    pub fn users_with(&self, role: &RoleId) -> Vec<UserId> {
        self.by_user
            .iter()
            .filter(|(_, roles)| roles.contains(role))
            .map(|(u, _)| u.clone())
            .collect()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&UserId, &RoleId)> {
        self.by_user
            .iter()
            .flat_map(|(u, roles)| roles.iter().map(move |r| (u, r)))
    }

    pub fn len(&self) -> usize {
        self.by_user.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.by_user.is_empty()
    }
}

impl FromIterator<(UserId, RoleId)> for UserRoleMapping {
    fn from_iter<I: IntoIterator<Item = (UserId, RoleId)>>(iter: I) -> Self {
        let mut m = Self::new();
        for (u, r) in iter {
            m.insert(u, r);
        }
        m
    }
}

impl Serialize for UserRoleMapping {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.pairs())
    }
}

impl<'de> Deserialize<'de> for UserRoleMapping {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let pairs = Vec::<(UserId, RoleId)>::deserialize(d)?;
        Ok(pairs.into_iter().collect())
    }
}

/// The function-role relation `F_R`, as a flat set of pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionRoleMapping {
    pub pairs: BTreeSet<(FunctionId, RoleId)>,
}

impl FunctionRoleMapping {
    pub fn roles_of(&self, function: &FunctionId) -> RoleSet {
        self.pairs
            .iter()
            .filter(|(f, _)| f == function)
            .map(|(_, r)| r.clone())
            .collect()
    }
}

/// Correlation token carried by a [`Request`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RequestId(pub String);

impl RequestId {
    pub fn fresh() -> Self {
        Self(uuid::Uuid::new_v4().to_string())
    }
}

impl fmt::Display for RequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// `Req = (u_i, f_j)` plus the call arguments forwarded to the handler.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Request {
    pub user_id: UserId,
    pub function_id: FunctionId,
    #[serde(default, with = "hex_bytes")]
    pub call_args: Vec<u8>,
    #[serde(default = "RequestId::fresh")]
    pub request_id: RequestId,
}

impl Request {
    pub fn new(user_id: UserId, function_id: FunctionId, call_args: impl Into<Vec<u8>>) -> Self {
        Self {
            user_id,
            function_id,
            call_args: call_args.into(),
            request_id: RequestId::fresh(),
        }
    }
}

pub(crate) mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionReason {
    Matched,
    NoRoleIntersection,
    ThresholdNotMet,
    UnknownUser,
    UnknownFunction,
    InactiveUser,
}

impl fmt::Display for DecisionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecisionReason::Matched => "matched",
            DecisionReason::NoRoleIntersection => "no_role_intersection",
            DecisionReason::ThresholdNotMet => "threshold_not_met",
            DecisionReason::UnknownUser => "unknown_user",
            DecisionReason::UnknownFunction => "unknown_function",
            DecisionReason::InactiveUser => "inactive_user",
        })
    }
}

/// Outcome of an authorization check.
///
/// `allowed` implies `reason == Matched` and a non-empty `matched_roles`;
/// a deny still reports the intersection that was computed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub allowed: bool,
    pub reason: DecisionReason,
    pub matched_roles: RoleSet,
    pub cost: CostReceipt,
}

/// `a ∩ b`.
pub fn role_intersection(a: &RoleSet, b: &RoleSet) -> RoleSet {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    small.iter().filter(|r| large.contains(*r)).cloned().collect()
}
