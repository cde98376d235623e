use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::BaselineSpec;
use crate::backend::BackendStats;
use crate::metrics::{HistogramExport, LatencySummary};
use crate::model::{Mode, ValueSizeHistogram};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtendSummary {
    pub attempted: u64,
    pub applied: u64,
    pub skipped: u64,
    /// Attempts that picked a record deleted by an earlier run phase.
    pub missing: u64,
    pub trace_hash: u64,
    pub latency: Option<LatencySummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub operations: u64,
    pub wall_time_secs: f64,
    pub throughput: f64,
    pub op_counts: BTreeMap<String, u64>,
    pub latency: BTreeMap<String, LatencySummary>,
    /// Reads, updates and deletes that addressed a missing record.
    pub not_found: u64,
    pub trace_hash: u64,
    /// Relative change of the mean field length over the phase.
    pub mean_length_drift: f64,
    /// Earth mover's distance between the start and end size histograms.
    pub histogram_emd_bytes: f64,
    /// Physical bytes the backend read during the phase.
    pub bytes_read_physical: u64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub histograms: BTreeMap<String, HistogramExport>,
}

/// Bin-indexed size distribution at the end of an epoch.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeSnapshot {
    pub bin_width: u64,
    /// `(bin, count)` pairs for occupied bins.
    pub bins: Vec<(u64, u64)>,
}

impl From<&ValueSizeHistogram> for SizeSnapshot {
    fn from(h: &ValueSizeHistogram) -> Self {
        SizeSnapshot {
            bin_width: h.bin_width(),
            bins: h.bins().collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DumpInfo {
    pub path: String,
    pub checksum: u64,
    pub volume: u64,
}

/// One line of a per-trial report file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: u32,
    pub mode: Mode,
    pub trial: u32,
    pub backend: String,
    pub config_hash: u64,
    pub record_count: u64,
    pub volume_bytes: u64,
    pub extend: Option<ExtendSummary>,
    pub run: RunSummary,
    pub max_field_length: u32,
    pub mean_field_length: f64,
    pub saturated_records: u64,
    pub size_histogram: SizeSnapshot,
    pub backend_stats: BackendStats,
    pub dump: Option<DumpInfo>,
    pub baseline: Option<BaselineSpec>,
    /// Digest of the full logical state before the run phase.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_digest: Option<u64>,
}

impl EpochReport {
    /// Scalar metrics aggregated across trials.
    pub fn metrics(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        m.insert("throughput".to_string(), self.run.throughput);
        m.insert("volume_bytes".to_string(), self.volume_bytes as f64);
        m.insert("max_field_length".to_string(), self.max_field_length as f64);
        m.insert("mean_field_length".to_string(), self.mean_field_length);
        m.insert("saturated_records".to_string(), self.saturated_records as f64);
        m.insert(
            "bytes_read_physical".to_string(),
            self.run.bytes_read_physical as f64,
        );
        if let Some(e) = &self.extend {
            m.insert("extend_applied".to_string(), e.applied as f64);
            m.insert("extend_skipped".to_string(), e.skipped as f64);
        }
        for (op, s) in &self.run.latency {
            let op = op.to_ascii_lowercase();
            m.insert(format!("{op}_mean_us"), s.mean_us);
            m.insert(format!("{op}_p95_us"), s.p95_us);
            m.insert(format!("{op}_p99_us"), s.p99_us);
        }
        m
    }
}
