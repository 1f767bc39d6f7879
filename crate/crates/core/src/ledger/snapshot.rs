//! State snapshots: header line, canonical state line, anchor line.
//!
//! The anchor binds the snapshot to the chain (`sequence`, `chain_hash` of
//! the last included event) and to its own content (`state_digest`, the
//! SHA-256 of the state line).

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use super::{replay, replay_onto, ApplyLogic, ChainHead, Digest, LogHeader, MutationEvent, ReplayError};
use crate::managers::EngineState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotAnchor {
    pub sequence: u64,
    pub chain_hash: Digest,
    pub state_digest: Digest,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    pub state: EngineState,
    pub anchor: SnapshotAnchor,
}

fn digest_of(line: &str) -> Digest {
    Digest(Sha256::digest(line.as_bytes()).into())
}

impl Snapshot {
    /// `head` must be the chain head at `state.version`.
    pub fn capture(state: &EngineState, head: ChainHead) -> Self {
        assert_eq!(state.version, head.sequence, "snapshot head must match state version");
        Self {
            state: state.clone(),
            anchor: SnapshotAnchor {
                sequence: head.sequence,
                chain_hash: head.hash,
                state_digest: digest_of(&state.canonical_json()),
            },
        }
    }

    pub fn head(&self) -> ChainHead {
        ChainHead {
            sequence: self.anchor.sequence,
            hash: self.anchor.chain_hash,
        }
    }

    pub fn to_file_contents(&self) -> String {
        format!(
            "{}\n{}\n{}\n",
            LogHeader::default().to_line(),
            self.state.canonical_json(),
            super::canonical_json(&serde_json::to_value(self.anchor).expect("anchor serializes"))
        )
    }

    pub fn write_to(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, self.to_file_contents())
    }
}

/// Snapshot of the state after the first `up_to_sequence` events.
pub fn snapshot_at(events: &[MutationEvent], up_to_sequence: u64, logic: &dyn ApplyLogic) -> Result<Snapshot, ReplayError> {
    let k = usize::try_from(up_to_sequence).unwrap_or(usize::MAX);
    if k > events.len() {
        return Err(ReplayError::SnapshotCorrupt(format!(
            "sequence {up_to_sequence} is past the end of a {}-event log",
            events.len()
        )));
    }
    let prefix = &events[..k];
    let state = replay(prefix, logic)?;
    let head = prefix.last().map(ChainHead::of).unwrap_or_default();
    Ok(Snapshot::capture(&state, head))
}

/// Parses and checks a snapshot file's contents.
pub fn restore(contents: &str) -> Result<Snapshot, ReplayError> {
    let corrupt = |m: String| ReplayError::SnapshotCorrupt(m);
    let lines: Vec<&str> = contents.split('\n').collect();
    if lines.len() != 4 || !lines[3].is_empty() {
        return Err(corrupt(format!("expected 3 newline-terminated lines, found {}", lines.len().saturating_sub(1))));
    }
    LogHeader::parse(lines[0]).map_err(|e| corrupt(e.to_string()))?;
    let anchor: SnapshotAnchor = serde_json::from_str(lines[2]).map_err(|e| corrupt(format!("anchor: {e}")))?;
    if digest_of(lines[1]) != anchor.state_digest {
        return Err(corrupt("state digest mismatch".into()));
    }
    let state: EngineState = serde_json::from_str(lines[1]).map_err(|e| corrupt(format!("state: {e}")))?;
    if state.version != anchor.sequence {
        return Err(corrupt(format!(
            "state version {} does not match anchor sequence {}",
            state.version, anchor.sequence
        )));
    }
    Ok(Snapshot { state, anchor })
}

/// Restores `snapshot` and replays the events that follow it. `tail` must
/// start at `anchor.sequence + 1`.
pub fn restore_and_replay(snapshot: &Snapshot, tail: &[MutationEvent], logic: &dyn ApplyLogic) -> Result<EngineState, ReplayError> {
    replay_onto(snapshot.state.clone(), snapshot.head(), tail, logic)
}
