//! Node configuration: one TOML file, then `NSTORE_<SECTION>_<KEY>` overrides.
//!
//! Every key has a default. Unknown keys and ill-typed values are collected
//! and reported together.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::{Table, Value};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("reading {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
}

impl ConfigError {
    pub fn code(&self) -> &'static str {
        "ConfigInvalid"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    All,
    Broker,
    Persist,
    StorePrimary,
    StoreReplica,
    Query,
}

impl Role {
    pub const ALL: [Role; 6] = [
        Role::All,
        Role::Broker,
        Role::Persist,
        Role::StorePrimary,
        Role::StoreReplica,
        Role::Query,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Role::All => "all",
            Role::Broker => "broker",
            Role::Persist => "persist",
            Role::StorePrimary => "store-primary",
            Role::StoreReplica => "store-replica",
            Role::Query => "query",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Role::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown role {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NodeConfig {
    pub role: Role,
    pub data_dir: PathBuf,
    /// Log filter, e.g. `info` or `nstore=debug`.
    pub log: String,
}

impl Default for NodeConfig {
    fn default() -> Self {
        NodeConfig {
            role: Role::All,
            data_dir: PathBuf::from("nstore-data"),
            log: "info".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BrokerConfig {
    pub partitions: u16,
    pub segment_bytes: u64,
    pub disk_budget_bytes: u64,
    pub fsync_interval_ms: u64,
    pub fsync_bytes: u64,
    /// Producer ingest port.
    pub listen: String,
    /// Fetch/commit port used by remote persist workers and the harness.
    pub admin_listen: String,
}

impl Default for BrokerConfig {
    fn default() -> Self {
        BrokerConfig {
            partitions: 8,
            segment_bytes: 128 * 1024 * 1024,
            disk_budget_bytes: 8 * 1024 * 1024 * 1024,
            fsync_interval_ms: 50,
            fsync_bytes: 8 * 1024 * 1024,
            listen: "127.0.0.1:7070".into(),
            admin_listen: "127.0.0.1:7071".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PersistConfig {
    pub workers: usize,
    pub reorder_window: usize,
    /// Signal logs, quarantine and BDF output. Empty means `node.data_dir`.
    pub data_dir: PathBuf,
    /// Broker admin address, for a persist-only node.
    pub broker_admin: String,
    /// Primary store write address, for a persist-only node.
    pub store_write: String,
    pub dangling_timeout_ms: u64,
    pub export_on_finalize: bool,
}

impl Default for PersistConfig {
    fn default() -> Self {
        PersistConfig {
            workers: 4,
            reorder_window: 64,
            data_dir: PathBuf::new(),
            broker_admin: "127.0.0.1:7071".into(),
            store_write: "127.0.0.1:7072".into(),
            dangling_timeout_ms: 30_000,
            export_on_finalize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoreConfig {
    pub snapshot_every_n_entries: u64,
    /// Entity write port of the primary.
    pub write_listen: String,
    /// Replication feed served by a primary or replica.
    pub replica_listen: String,
    /// Upstream replication feed followed by replicas and query-only nodes.
    pub primary: String,
    pub read_from_replica: bool,
}

impl Default for StoreConfig {
    fn default() -> Self {
        StoreConfig {
            snapshot_every_n_entries: 10_000,
            write_listen: "127.0.0.1:7072".into(),
            replica_listen: "127.0.0.1:7073".into(),
            primary: "127.0.0.1:7073".into(),
            read_from_replica: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QueryConfig {
    pub listen: String,
    pub timeout_ms: u64,
    pub max_inflight: usize,
}

impl Default for QueryConfig {
    fn default() -> Self {
        QueryConfig {
            listen: "127.0.0.1:8080".into(),
            timeout_ms: 30_000,
            max_inflight: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BdfConfig {
    pub pad_last_record: bool,
}

impl Default for BdfConfig {
    fn default() -> Self {
        BdfConfig { pad_last_record: true }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub node: NodeConfig,
    pub broker: BrokerConfig,
    pub persist: PersistConfig,
    pub store: StoreConfig,
    pub query: QueryConfig,
    pub bdf: BdfConfig,
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::String(_) => "string",
        Value::Integer(_) => "integer",
        Value::Float(_) => "float",
        Value::Boolean(_) => "boolean",
        Value::Datetime(_) => "datetime",
        Value::Array(_) => "array",
        Value::Table(_) => "table",
    }
}

/// Parses an environment value as the type of the default it replaces.
fn env_value(raw: &str, like: &Value) -> Result<Value, String> {
    match like {
        Value::Integer(_) => raw
            .trim()
            .parse()
            .map(Value::Integer)
            .map_err(|_| "expected integer".into()),
        Value::Float(_) => raw
            .trim()
            .parse()
            .map(Value::Float)
            .map_err(|_| "expected float".into()),
        Value::Boolean(_) => raw
            .trim()
            .parse()
            .map(Value::Boolean)
            .map_err(|_| "expected true or false".into()),
        _ => Ok(Value::String(raw.to_string())),
    }
}

impl Config {
    /// Loads `path` (if given) and applies overrides from `env`.
    pub fn load(path: Option<&Path>, env: impl IntoIterator<Item = (String, String)>) -> Result<Config, ConfigError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                path: p.to_path_buf(),
                source,
            })?,
            None => String::new(),
        };
        Self::from_toml_str(&text, env)
    }

    pub fn from_toml_str(text: &str, env: impl IntoIterator<Item = (String, String)>) -> Result<Config, ConfigError> {
        let defaults = Table::try_from(Config::default()).expect("defaults serialize");
        let mut problems = Vec::new();
        let file: Table = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigError::Invalid(vec![e.to_string()]))?;
        let mut merged = defaults.clone();
        for (section, value) in file {
            let Some(Value::Table(known)) = defaults.get(&section) else {
                problems.push(format!("unknown key {section}"));
                continue;
            };
            let Value::Table(entries) = value else {
                problems.push(format!("{section}: expected a table"));
                continue;
            };
            let target = merged.get_mut(&section).and_then(Value::as_table_mut).unwrap();
            for (key, v) in entries {
                match known.get(&key) {
                    None => problems.push(format!("unknown key {section}.{key}")),
                    Some(d) if type_name(d) != type_name(&v) => problems.push(format!(
                        "{section}.{key}: expected {}, found {}",
                        type_name(d),
                        type_name(&v)
                    )),
                    Some(_) => {
                        target.insert(key, v);
                    }
                }
            }
        }
        let mut env: Vec<(String, String)> = env.into_iter().filter(|(k, _)| k.starts_with("NSTORE_")).collect();
        env.sort();
        for (name, raw) in env {
            let rest = name["NSTORE_".len()..].to_ascii_lowercase();
            let found = defaults.iter().find_map(|(section, table)| {
                let key = rest.strip_prefix(section.as_str())?.strip_prefix('_')?;
                let like = table.as_table()?.get(key)?;
                Some((section.clone(), key.to_string(), like.clone()))
            });
            let Some((section, key, like)) = found else {
                let dotted = rest.replacen('_', ".", 1);
                problems.push(format!("{dotted}: unknown key (from {name})"));
                continue;
            };
            match env_value(&raw, &like) {
                Ok(v) => {
                    merged
                        .get_mut(&section)
                        .and_then(Value::as_table_mut)
                        .unwrap()
                        .insert(key, v);
                }
                Err(e) => problems.push(format!("{section}.{key}: {e} (from {name})")),
            }
        }
        let config: Option<Config> = match Value::Table(merged).try_into() {
            Ok(c) => Some(c),
            Err(e) => {
                problems.push(e.to_string().trim().to_string());
                None
            }
        };
        if let Some(c) = &config {
            problems.extend(c.check());
        }
        match config {
            Some(c) if problems.is_empty() => Ok(c),
            _ => Err(ConfigError::Invalid(problems)),
        }
    }

    fn check(&self) -> Vec<String> {
        let mut p = Vec::new();
        if self.broker.partitions == 0 {
            p.push("broker.partitions: must be at least 1".into());
        }
        if self.persist.workers == 0 || self.persist.workers > self.broker.partitions as usize {
            p.push(format!(
                "persist.workers: must be between 1 and broker.partitions ({})",
                self.broker.partitions
            ));
        }
        if self.persist.reorder_window == 0 {
            p.push("persist.reorder_window: must be at least 1".into());
        }
        if self.query.max_inflight == 0 {
            p.push("query.max_inflight: must be at least 1".into());
        }
        if self.query.timeout_ms == 0 {
            p.push("query.timeout_ms: must be at least 1".into());
        }
        if self.broker.fsync_interval_ms == 0 {
            p.push("broker.fsync_interval_ms: must be at least 1".into());
        }
        if self.store.snapshot_every_n_entries == 0 {
            p.push("store.snapshot_every_n_entries: must be at least 1".into());
        }
        p
    }

    pub fn persist_dir(&self) -> PathBuf {
        if self.persist.data_dir.as_os_str().is_empty() {
            self.node.data_dir.clone()
        } else {
            self.persist.data_dir.clone()
        }
    }

    pub fn broker_dir(&self) -> PathBuf {
        self.node.data_dir.join("broker")
    }

    pub fn broker_options(&self) -> nstore_core::broker::BrokerOptions {
        nstore_core::broker::BrokerOptions {
            partitions: self.broker.partitions,
            segment_bytes: self.broker.segment_bytes,
            disk_budget_bytes: self.broker.disk_budget_bytes,
            fsync_interval: Duration::from_millis(self.broker.fsync_interval_ms),
            fsync_bytes: self.broker.fsync_bytes,
        }
    }

    pub fn persist_options(&self) -> nstore_core::persist::PersistOptions {
        nstore_core::persist::PersistOptions {
            workers: self.persist.workers,
            reorder_window: self.persist.reorder_window,
            pad_last_record: self.bdf.pad_last_record,
            export_on_finalize: self.persist.export_on_finalize,
            dangling_timeout: Duration::from_millis(self.persist.dangling_timeout_ms),
            ..nstore_core::persist::PersistOptions::new(self.persist_dir())
        }
    }

    pub fn store_options(&self) -> nstore_core::store::StoreOptions {
        nstore_core::store::StoreOptions {
            snapshot_every_n_entries: self.store.snapshot_every_n_entries,
        }
    }

    /// The documented key list with defaults, as TOML.
    pub fn defaults_toml() -> String {
        toml::to_string(&Config::default()).expect("defaults serialize")
    }
}
