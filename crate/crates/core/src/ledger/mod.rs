//! Append-only, hash-chained mutation log.
//!
//! State is never persisted directly. Each applied mutation becomes a
//! [`MutationEvent`] whose hash covers the previous event's hash, so the log
//! is tamper-evident and the state can be rebuilt by [`replay`] under any
//! registered [`ApplyLogic`]. Swapping the logic leaves the data untouched.
//!
//! Hash preimage, all integers big-endian:
//!
//! ```text
//! prev_hash (32) ‖ sequence (u64) ‖ len(actor) (u32) ‖ actor
//!   ‖ len(operation) (u32) ‖ operation ‖ canonical_json(payload)
//! ```
//!
//! Timestamps are informational and excluded from the hash.

mod file;
mod logic;
mod snapshot;

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::managers::{EngineError, EngineState, Mutation};

pub use file::{read_log, verify_log_file, FileStore, LogHeader, FORMAT_VERSION, LOG_MAGIC};
pub use logic::{ApplyLogic, LogicRegistry, LogicVersion, StructuralLogic, TypedLogic};
pub use snapshot::{restore, restore_and_replay, snapshot_at, Snapshot, SnapshotAnchor};

/// A 32-byte digest, hex encoded (lowercase only) on the wire.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const GENESIS: Digest = Digest([0; 32]);

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// Strict parse: exactly 64 lowercase hex characters.
    pub fn from_hex(s: &str) -> Result<Self, String> {
        if s.len() != 64 || !s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
            return Err(format!("digest must be 64 lowercase hex characters, got {s:?}"));
        }
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).map_err(|e| e.to_string())?;
        Ok(Digest(out))
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Digest {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Digest::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// Compact JSON with object keys sorted by byte order, independent of how
/// serde_json was built.
pub fn canonical_json(value: &serde_json::Value) -> String {
    let mut out = String::new();
    write_canonical(value, &mut out);
    out
}

fn write_canonical(value: &serde_json::Value, out: &mut String) {
    use serde_json::Value;
    match value {
        Value::Object(map) => {
            let mut entries: Vec<_> = map.iter().collect();
            entries.sort_by(|a, b| a.0.as_bytes().cmp(b.0.as_bytes()));
            out.push('{');
            for (i, (k, v)) in entries.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k).expect("string serializes"));
                out.push(':');
                write_canonical(v, out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, v) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(v, out);
            }
            out.push(']');
        }
        scalar => out.push_str(&serde_json::to_string(scalar).expect("scalar serializes")),
    }
}

/// One persisted mutation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MutationEvent {
    pub sequence: u64,
    /// UTC milliseconds. Not covered by the hash.
    pub timestamp: u64,
    pub actor: String,
    pub operation: String,
    pub payload: serde_json::Value,
    pub prev_hash: Digest,
    pub this_hash: Digest,
}

pub fn event_hash(prev_hash: &Digest, sequence: u64, actor: &str, operation: &str, payload: &serde_json::Value) -> Digest {
    let mut h = Sha256::new();
    h.update(prev_hash.0);
    h.update(sequence.to_be_bytes());
    h.update((actor.len() as u32).to_be_bytes());
    h.update(actor.as_bytes());
    h.update((operation.len() as u32).to_be_bytes());
    h.update(operation.as_bytes());
    h.update(canonical_json(payload).as_bytes());
    Digest(h.finalize().into())
}

impl MutationEvent {
    /// Builds the event that follows `head`.
    pub fn seal(head: ChainHead, timestamp: u64, actor: &str, mutation: &Mutation) -> Self {
        let sequence = head.sequence + 1;
        let operation = mutation.operation().to_string();
        let payload = mutation.payload();
        let this_hash = event_hash(&head.hash, sequence, actor, &operation, &payload);
        Self {
            sequence,
            timestamp,
            actor: actor.to_string(),
            operation,
            payload,
            prev_hash: head.hash,
            this_hash,
        }
    }

    pub fn recompute_hash(&self) -> Digest {
        event_hash(&self.prev_hash, self.sequence, &self.actor, &self.operation, &self.payload)
    }

    /// Canonical single-line JSON, as written to the log file.
    pub fn to_line(&self) -> String {
        canonical_json(&serde_json::to_value(self).expect("event serializes"))
    }

    pub fn mutation(&self) -> Result<Mutation, ReplayError> {
        match Mutation::from_parts(&self.operation, &self.payload) {
            None => Err(ReplayError::UnknownOperation {
                sequence: self.sequence,
                operation: self.operation.clone(),
            }),
            Some(Err(e)) => Err(ReplayError::InvalidPayload {
                sequence: self.sequence,
                message: e.to_string(),
            }),
            Some(Ok(m)) => Ok(m),
        }
    }
}

/// Sequence and hash of the newest event; the genesis head is `(0, 0^32)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ChainHead {
    pub sequence: u64,
    pub hash: Digest,
}

impl ChainHead {
    pub fn of(event: &MutationEvent) -> Self {
        Self {
            sequence: event.sequence,
            hash: event.this_hash,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BreakCause {
    Unparseable,
    SequenceGap { found: u64 },
    PrevHashMismatch,
    HashMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize)]
#[error("hash chain broken at sequence {sequence}: {cause:?}")]
pub struct ChainBroken {
    pub sequence: u64,
    pub cause: BreakCause,
}

/// Recomputes every link starting from `start` and reports the first break.
///
/// Truncating the tail is not detectable here; compare the returned head
/// against an externally held anchor for that.
pub fn verify_chain_from(start: ChainHead, events: &[MutationEvent]) -> Result<ChainHead, ChainBroken> {
    let mut head = start;
    for event in events {
        let expected = head.sequence + 1;
        let broken = |cause| ChainBroken { sequence: expected, cause };
        if event.sequence != expected {
            return Err(broken(BreakCause::SequenceGap { found: event.sequence }));
        }
        if event.prev_hash != head.hash {
            return Err(broken(BreakCause::PrevHashMismatch));
        }
        if event.recompute_hash() != event.this_hash {
            return Err(broken(BreakCause::HashMismatch));
        }
        head = ChainHead::of(event);
    }
    Ok(head)
}

pub fn verify_chain(events: &[MutationEvent]) -> Result<ChainHead, ChainBroken> {
    verify_chain_from(ChainHead::default(), events)
}

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad log header: {0}")]
    BadHeader(String),
    #[error("unparseable event on line {line}: {message}")]
    BadEvent { line: usize, message: String },
    #[error("injected storage failure")]
    Injected,
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error(transparent)]
    ChainBroken(#[from] ChainBroken),
    #[error("unknown operation {operation:?} at sequence {sequence}")]
    UnknownOperation { sequence: u64, operation: String },
    #[error("invalid payload at sequence {sequence}: {message}")]
    InvalidPayload { sequence: u64, message: String },
    #[error("event {sequence} does not apply: {source}")]
    Rejected {
        sequence: u64,
        #[source]
        source: EngineError,
    },
    #[error("unknown logic version {0:?}")]
    UnknownLogic(String),
    #[error(transparent)]
    Storage(#[from] LedgerError),
    #[error("snapshot corrupt: {0}")]
    SnapshotCorrupt(String),
}

/// Folds `events` from the empty state through `logic`. The chain is
/// verified first.
pub fn replay(events: &[MutationEvent], logic: &dyn ApplyLogic) -> Result<EngineState, ReplayError> {
    replay_onto(EngineState::new(), ChainHead::default(), events, logic)
}

/// Continues a replay from `state`, whose last applied event is `start`.
pub fn replay_onto(
    mut state: EngineState,
    start: ChainHead,
    events: &[MutationEvent],
    logic: &dyn ApplyLogic,
) -> Result<EngineState, ReplayError> {
    verify_chain_from(start, events)?;
    for event in events {
        logic.apply(&mut state, event)?;
    }
    Ok(state)
}

/// Where an [`crate::managers::Engine`] persists events.
///
/// `append` must make the event durable before returning `Ok`; the engine
/// applies the mutation only afterwards.
pub trait EventStore: Send {
    fn append(&mut self, event: &MutationEvent) -> Result<(), LedgerError>;
    fn load(&self) -> Result<Vec<MutationEvent>, LedgerError>;

    /// Verifies the stored chain. The outer error is an I/O or format
    /// failure, the inner one a broken link.
    fn verify(&self) -> Result<Result<ChainHead, ChainBroken>, LedgerError> {
        Ok(verify_chain(&self.load()?))
    }
}

/// Event store held in memory.
#[derive(Debug, Default, Clone)]
pub struct MemoryStore {
    events: Vec<MutationEvent>,
    fail_next: bool,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_events(events: Vec<MutationEvent>) -> Self {
        Self { events, fail_next: false }
    }

    /// The next append fails with [`LedgerError::Injected`].
    pub fn fail_next_append(&mut self) {
        self.fail_next = true;
    }

    pub fn events(&self) -> &[MutationEvent] {
        &self.events
    }
}

impl EventStore for MemoryStore {
    fn append(&mut self, event: &MutationEvent) -> Result<(), LedgerError> {
        if std::mem::take(&mut self.fail_next) {
            return Err(LedgerError::Injected);
        }
        self.events.push(event.clone());
        Ok(())
    }

    fn load(&self) -> Result<Vec<MutationEvent>, LedgerError> {
        Ok(self.events.clone())
    }
}

#[cfg(test)]
mod tests;
