//! Service configuration, read from TOML:
//!
//! ```toml
//! listen = "127.0.0.1:7400"
//! log_path = "drbac.log"
//!
//! [costs]
//! read_cost = 100
//!
//! [[scopes]]
//! group = "security-team"
//! token = "change-me"
//! managers = ["role_mgr", "policy_mgr"]
//! ```
//!
//! `DRBAC_ADDR` and `DRBAC_LOG` override `listen` and `log_path`.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::CostSchedule;
use crate::managers::{AdminScope, ManagerKind};

pub const ENV_ADDR: &str = "DRBAC_ADDR";
pub const ENV_LOG: &str = "DRBAC_LOG";

fn default_listen() -> SocketAddr {
    SocketAddr::from(([127, 0, 0, 1], 7400))
}

fn default_log_path() -> PathBuf {
    PathBuf::from("drbac.log")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScopeEntry {
    pub group: String,
    pub token: String,
    pub managers: Vec<ManagerKind>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_listen")]
    pub listen: SocketAddr,
    #[serde(default = "default_log_path")]
    pub log_path: PathBuf,
    #[serde(default)]
    pub costs: CostSchedule,
    #[serde(default)]
    pub scopes: Vec<ScopeEntry>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            listen: default_listen(),
            log_path: default_log_path(),
            costs: CostSchedule::default(),
            scopes: Vec::new(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{0}")]
    Invalid(String),
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: Config = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let mut groups = std::collections::BTreeSet::new();
        for s in &self.scopes {
            if s.managers.is_empty() {
                return Err(ConfigError::Invalid(format!("scope {:?} lists no managers", s.group)));
            }
            if s.token.is_empty() {
                return Err(ConfigError::Invalid(format!("scope {:?} has an empty token", s.group)));
            }
            if !groups.insert(&s.group) {
                return Err(ConfigError::Invalid(format!("scope {:?} defined twice", s.group)));
            }
        }
        Ok(())
    }

    /// Applies overrides from `lookup`, normally [`std::env::var`].
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(addr) = lookup(ENV_ADDR) {
            self.listen = addr
                .parse()
                .map_err(|e| ConfigError::Invalid(format!("{ENV_ADDR}={addr:?}: {e}")))?;
        }
        if let Some(log) = lookup(ENV_LOG) {
            self.log_path = PathBuf::from(log);
        }
        Ok(())
    }

    /// The scope for `group` if `token` matches its configured token.
    pub fn authenticate(&self, group: &str, token: &str) -> Option<AdminScope> {
        self.scopes
            .iter()
            .find(|s| s.group == group && s.token == token)
            .and_then(|s| AdminScope::new(s.group.clone(), s.managers.iter().copied()))
    }
}
