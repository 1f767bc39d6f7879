//! Bulk user import.
//!
//! The file is JSON Lines. The first line is a header, each following
//! non-blank line is one user:
//!
//! ```text
//! {"format_version":1}
//! {"id":"alice","external_ref":"idp|1001","metadata":{"dept":"audit"},"roles":["auditor"]}
//! {"external_ref":"bob","roles":[]}
//! ```
//!
//! `id` may be omitted, in which case `external_ref` is used as the user id
//! and must itself be a valid identifier. An import is all or nothing.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::managers::{AdminScope, Engine, EngineError, EngineState, ImportedUser};
use crate::model::{Metadata, RoleId, User, UserId};

pub const IMPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ImportHeader {
    format_version: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImportRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub external_ref: String,
    #[serde(default)]
    pub metadata: Metadata,
    #[serde(default)]
    pub roles: Vec<String>,
}

/// A parsed import file. `line` is 1-based and counts the header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BulkImportFile {
    pub format_version: u32,
    pub users: Vec<(usize, ImportRecord)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportSummary {
    pub created: usize,
    pub granted: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum ImportError {
    #[error("line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("line {line}: unknown role {role}")]
    UnknownRoleInImport { role: String, line: usize },
    #[error("line {line}: user {user} already exists")]
    DuplicateUserInImport { user: String, line: usize },
    #[error(transparent)]
    Engine(EngineError),
}

impl BulkImportFile {
    pub fn parse(text: &str) -> Result<Self, ImportError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l)).filter(|(_, l)| !l.trim().is_empty());
        let Some((line, header)) = lines.next() else {
            return Err(ImportError::ParseError {
                line: 1,
                message: "missing header".into(),
            });
        };
        let header: ImportHeader = serde_json::from_str(header).map_err(|e| ImportError::ParseError {
            line,
            message: format!("header: {e}"),
        })?;
        if header.format_version != IMPORT_FORMAT_VERSION {
            return Err(ImportError::ParseError {
                line,
                message: format!("unsupported format version {}", header.format_version),
            });
        }
        let users = lines
            .map(|(line, l)| {
                serde_json::from_str(l)
                    .map(|r| (line, r))
                    .map_err(|e| ImportError::ParseError { line, message: e.to_string() })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            format_version: header.format_version,
            users,
        })
    }

    /// Builds a file from records as if they had been written one per line
    /// after the header.
    pub fn from_records(format_version: u32, records: Vec<ImportRecord>) -> Result<Self, ImportError> {
        if format_version != IMPORT_FORMAT_VERSION {
            return Err(ImportError::ParseError {
                line: 1,
                message: format!("unsupported format version {format_version}"),
            });
        }
        Ok(Self {
            format_version,
            users: records.into_iter().enumerate().map(|(i, r)| (i + 2, r)).collect(),
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = serde_json::to_string(&ImportHeader {
            format_version: self.format_version,
        })
        .expect("header serializes");
        out.push('\n');
        for (_, r) in &self.users {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    /// Resolves every record against `state`, reporting the first problem
    /// with its line number.
    pub fn resolve(&self, state: &EngineState) -> Result<Vec<ImportedUser>, ImportError> {
        let mut seen = BTreeSet::new();
        let mut refs = BTreeSet::new();
        let mut out = Vec::with_capacity(self.users.len());
        for (line, record) in &self.users {
            let line = *line;
            let raw_id = record.id.as_deref().unwrap_or(&record.external_ref);
            let id = UserId::new(raw_id).map_err(|e| ImportError::ParseError {
                line,
                message: e.to_string(),
            })?;
            if state.users.contains_key(&id) || !seen.insert(id.clone()) {
                return Err(ImportError::DuplicateUserInImport {
                    user: id.to_string(),
                    line,
                });
            }
            let taken = state.users.values().any(|u| u.external_ref.as_deref() == Some(&record.external_ref));
            if taken || !refs.insert(record.external_ref.clone()) {
                return Err(ImportError::DuplicateUserInImport {
                    user: record.external_ref.clone(),
                    line,
                });
            }
            let mut roles = BTreeSet::new();
            for name in &record.roles {
                let role = RoleId::new(name.as_str())
                    .ok()
                    .filter(|r| state.roles.contains_key(r))
                    .ok_or_else(|| ImportError::UnknownRoleInImport {
                        role: name.clone(),
                        line,
                    })?;
                roles.insert(role);
            }
            let mut user = User::new(id).with_external_ref(record.external_ref.clone());
            user.metadata = record.metadata.clone();
            out.push(ImportedUser { user, roles });
        }
        Ok(out)
    }
}

/// Imports `file` as one ledger event.
pub fn import_users(engine: &mut Engine, scope: &AdminScope, file: &BulkImportFile) -> Result<ImportSummary, ImportError> {
    if !scope.permits(crate::managers::ManagerKind::UserMgr) {
        return Err(ImportError::Engine(EngineError::ScopeViolation {
            admin_group: scope.admin_group().into(),
            manager: crate::managers::ManagerKind::UserMgr,
        }));
    }
    let users = file.resolve(engine.state())?;
    let summary = ImportSummary {
        created: users.len(),
        granted: users.iter().map(|u| u.roles.len()).sum(),
    };
    if users.is_empty() {
        return Ok(summary);
    }
    engine.import_users(scope, users).map_err(ImportError::Engine)?;
    Ok(summary)
}
