//! Storage driver contract, the two reference engines and logical
//! dump/restore.
//!
//! [`MemStore`] updates in place and has no history. [`LogStore`] appends
//! every write to segment files and only reclaims space on compaction, so
//! its physical layout depends on how the logical state was reached.

mod dump;
mod log;
mod mem;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

pub use dump::{dump, load_dump, restore, DumpManifest, DumpPaths, DUMP_FORMAT_VERSION};
pub use log::{LogStore, LogStoreOptions};
pub use mem::MemStore;

use crate::model::ExperimentConfig;
use crate::{Error, Result};

/// Field values of one record, in field order.
pub type Record = Vec<Vec<u8>>;

/// Operations every engine under test provides.
///
/// All methods take `&self`: read-only calls may arrive from several worker
/// threads at once, mutations are serialized by the engine.
pub trait StorageDriver: Send + Sync {
    fn name(&self) -> &str;

    fn read(&self, key: &str) -> Result<Option<Record>>;

    fn read_field(&self, key: &str, field: usize) -> Result<Option<Vec<u8>>>;

    /// Replaces one field. Returns `false` if the record does not exist.
    fn update_field(&self, key: &str, field: usize, value: &[u8]) -> Result<bool>;

    /// Inserts a record, replacing any existing one with the same key.
    fn insert(&self, key: &str, record: Record) -> Result<()>;

    /// Returns `false` if the record did not exist.
    fn delete(&self, key: &str) -> Result<bool>;

    /// Up to `count` records with keys `>= start_key`, in key order.
    fn scan(&self, start_key: &str, count: usize) -> Result<Vec<(String, Record)>>;

    fn record_count(&self) -> usize;

    fn flush(&self) -> Result<()>;

    fn stats(&self) -> BackendStats;

    /// Reclaims space held by superseded versions. Engines without garbage
    /// return zeros.
    fn compact(&self) -> Result<CompactionStats> {
        Ok(CompactionStats::default())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompactionStats {
    pub reclaimed_bytes: u64,
    pub reclaimed_entries: u64,
}

/// Flat counter map exported into every epoch report.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BackendStats(pub BTreeMap<String, u64>);

impl BackendStats {
    pub const BYTES_WRITTEN: &'static str = "bytes_written";
    pub const BYTES_READ_PHYSICAL: &'static str = "bytes_read_physical";
    pub const ENTRIES_LIVE: &'static str = "entries_live";
    pub const ENTRIES_DEAD: &'static str = "entries_dead";
    pub const COMPACTIONS: &'static str = "compactions";

    pub fn get(&self, name: &str) -> u64 {
        self.0.get(name).copied().unwrap_or(0)
    }

    pub(crate) fn from_counters(
        bytes_written: u64,
        bytes_read_physical: u64,
        entries_live: u64,
        entries_dead: u64,
        compactions: u64,
    ) -> Self {
        let mut m = BTreeMap::new();
        m.insert(Self::BYTES_WRITTEN.to_string(), bytes_written);
        m.insert(Self::BYTES_READ_PHYSICAL.to_string(), bytes_read_physical);
        m.insert(Self::ENTRIES_LIVE.to_string(), entries_live);
        m.insert(Self::ENTRIES_DEAD.to_string(), entries_dead);
        m.insert(Self::COMPACTIONS.to_string(), compactions);
        BackendStats(m)
    }
}

/// Which engine to instantiate.
#[derive(Clone, Debug, PartialEq)]
pub enum BackendKind {
    MemStore,
    LogStore(LogStoreOptions),
}

impl BackendKind {
    /// Resolves `backend_id` from the configuration. External database
    /// adapters plug in by implementing [`StorageDriver`]; they are not
    /// built in.
    pub fn from_config(config: &ExperimentConfig) -> Result<Self> {
        match config.backend_id.to_ascii_lowercase().as_str() {
            "memstore" | "mem" => Ok(BackendKind::MemStore),
            "logstore" | "log" => Ok(BackendKind::LogStore(LogStoreOptions {
                compaction_threshold: config.compaction_threshold,
                ..LogStoreOptions::default()
            })),
            other => Err(Error::InvalidConfig(format!(
                "unsupported backend {other:?} (built in: memstore, logstore)"
            ))),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            BackendKind::MemStore => "memstore",
            BackendKind::LogStore(_) => "logstore",
        }
    }
}

/// Creates fresh, empty driver instances. LogStore instances live in
/// numbered directories under `scratch_dir` and delete them on drop.
#[derive(Debug)]
pub struct DriverFactory {
    kind: BackendKind,
    scratch_dir: PathBuf,
    counter: AtomicU64,
}

impl DriverFactory {
    pub fn new(kind: BackendKind, scratch_dir: impl Into<PathBuf>) -> Self {
        DriverFactory {
            kind,
            scratch_dir: scratch_dir.into(),
            counter: AtomicU64::new(0),
        }
    }

    pub fn kind(&self) -> &BackendKind {
        &self.kind
    }

    pub fn scratch_dir(&self) -> &Path {
        &self.scratch_dir
    }

    pub fn create(&self) -> Result<Box<dyn StorageDriver>> {
        match &self.kind {
            BackendKind::MemStore => Ok(Box::new(MemStore::new())),
            BackendKind::LogStore(opts) => {
                let n = self.counter.fetch_add(1, Ordering::Relaxed);
                let dir = self
                    .scratch_dir
                    .join(format!("logstore-{}-{n:04}", std::process::id()));
                Ok(Box::new(LogStore::create_temporary(&dir, opts.clone())?))
            }
        }
    }
}
