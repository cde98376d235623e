use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_ZIPFIAN_THETA: f64 = 0.99;

/// Shape of every record: a fixed number of string fields that start at one
/// length and grow in fixed steps up to a cap.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordSchema {
    pub field_count: usize,
    pub initial_field_length: u32,
    pub extend_delta: u32,
    pub max_field_length: u32,
}

impl Default for RecordSchema {
    fn default() -> Self {
        RecordSchema {
            field_count: 10,
            initial_field_length: 100,
            extend_delta: 100,
            max_field_length: 1_600_000,
        }
    }
}

impl RecordSchema {
    pub fn validate(&self) -> Result<()> {
        if self.field_count == 0 || self.field_count > 256 {
            return Err(Error::InvalidConfig(format!(
                "field count must be in 1..=256, got {}",
                self.field_count
            )));
        }
        if self.extend_delta == 0 {
            return Err(Error::InvalidConfig("extend delta must be positive".into()));
        }
        if self.initial_field_length > self.max_field_length {
            return Err(Error::InvalidConfig(format!(
                "initial field length {} exceeds max field length {}",
                self.initial_field_length, self.max_field_length
            )));
        }
        Ok(())
    }

    /// Bytes in a freshly loaded record.
    pub fn initial_record_size(&self) -> u64 {
        self.field_count as u64 * self.initial_field_length as u64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KeyDistribution {
    Uniform,
    Zipfian { theta: f64 },
}

impl KeyDistribution {
    pub fn zipfian() -> Self {
        KeyDistribution::Zipfian {
            theta: DEFAULT_ZIPFIAN_THETA,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    MainRun,
    CleanRun,
    SpreadBaseline,
    AverageBaseline,
}

impl Mode {
    pub const ALL: [Mode; 4] = [
        Mode::MainRun,
        Mode::CleanRun,
        Mode::SpreadBaseline,
        Mode::AverageBaseline,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::MainRun => "main-run",
            Mode::CleanRun => "clean-run",
            Mode::SpreadBaseline => "spread-baseline",
            Mode::AverageBaseline => "average-baseline",
        }
    }

    pub fn is_baseline(self) -> bool {
        matches!(self, Mode::SpreadBaseline | Mode::AverageBaseline)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == norm || m.as_str().replace('-', "") == norm)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown mode {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum OpType {
    Read,
    Update,
    Insert,
    Scan,
    Delete,
}

impl OpType {
    pub const ALL: [OpType; 5] = [
        OpType::Read,
        OpType::Update,
        OpType::Insert,
        OpType::Scan,
        OpType::Delete,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OpType::Read => "READ",
            OpType::Update => "UPDATE",
            OpType::Insert => "INSERT",
            OpType::Scan => "SCAN",
            OpType::Delete => "DELETE",
        }
    }

    pub(crate) fn code(self) -> u64 {
        self as u64 + 1
    }
}

impl fmt::Display for OpType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Proportions of each operation type in a run phase.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadMix {
    pub read: f64,
    pub update: f64,
    pub insert: f64,
    pub scan: f64,
    pub delete: f64,
}

impl WorkloadMix {
    /// 100% reads.
    pub fn workload_c() -> Self {
        WorkloadMix {
            read: 1.0,
            ..Self::zero()
        }
    }

    /// 50% reads, 50% updates.
    pub fn workload_a() -> Self {
        WorkloadMix {
            read: 0.5,
            update: 0.5,
            ..Self::zero()
        }
    }

    pub fn zero() -> Self {
        WorkloadMix {
            read: 0.0,
            update: 0.0,
            insert: 0.0,
            scan: 0.0,
            delete: 0.0,
        }
    }

    pub fn get(&self, op: OpType) -> f64 {
        match op {
            OpType::Read => self.read,
            OpType::Update => self.update,
            OpType::Insert => self.insert,
            OpType::Scan => self.scan,
            OpType::Delete => self.delete,
        }
    }

    pub fn set(&mut self, op: OpType, p: f64) {
        match op {
            OpType::Read => self.read = p,
            OpType::Update => self.update = p,
            OpType::Insert => self.insert = p,
            OpType::Scan => self.scan = p,
            OpType::Delete => self.delete = p,
        }
    }

    pub fn sum(&self) -> f64 {
        OpType::ALL.iter().map(|&op| self.get(op)).sum()
    }

    pub fn is_read_only(&self) -> bool {
        OpType::ALL
            .iter()
            .all(|&op| matches!(op, OpType::Read | OpType::Scan) || self.get(op) == 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        for op in OpType::ALL {
            let p = self.get(op);
            if !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "{op} proportion must be non-negative, got {p}"
                )));
            }
        }
        let sum = self.sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "operation proportions sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }
}

impl Default for WorkloadMix {
    fn default() -> Self {
        Self::workload_c()
    }
}

/// How run-phase inserts and updates choose field lengths.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldLengthDistribution {
    /// Always the initial field length.
    Constant,
    /// Drawn from the value-size histogram frozen at run-phase start.
    Histogram,
}

/// Every knob of an experiment. `Default` is the standard configuration:
/// 10,000 records of 10 fields at 100 B, 100,000 extends of 100 B and
/// 100,000 run operations per epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub record_count: u64,
    pub schema: RecordSchema,
    pub extend_ops_per_epoch: u64,
    pub run_ops_per_epoch: u64,
    pub epochs: u32,
    pub extend_key_distribution: KeyDistribution,
    pub run_key_distribution: KeyDistribution,
    pub scramble: bool,
    pub workload_mix: WorkloadMix,
    pub field_length_distribution: FieldLengthDistribution,
    pub histogram_bin_width: u64,
    pub mode: Mode,
    pub trials: u32,
    pub seed: u64,
    pub backend_id: String,
    pub max_scan_length: u64,
    pub workers: usize,
    /// LogStore garbage ratio that triggers compaction; `None` disables it.
    pub compaction_threshold: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            record_count: 10_000,
            schema: RecordSchema::default(),
            extend_ops_per_epoch: 100_000,
            run_ops_per_epoch: 100_000,
            epochs: 100,
            extend_key_distribution: KeyDistribution::Uniform,
            run_key_distribution: KeyDistribution::Uniform,
            scramble: true,
            workload_mix: WorkloadMix::default(),
            field_length_distribution: FieldLengthDistribution::Histogram,
            histogram_bin_width: 100,
            mode: Mode::MainRun,
            trials: 5,
            seed: 0,
            backend_id: "memstore".into(),
            max_scan_length: 1000,
            workers: 1,
            compaction_threshold: None,
        }
    }
}

impl ExperimentConfig {
    /// The reduced-scale variant: 1000 records, 10,000 extends and 10,000
    /// run operations per epoch.
    pub fn lightweight() -> Self {
        ExperimentConfig {
            record_count: 1000,
            extend_ops_per_epoch: 10_000,
            run_ops_per_epoch: 10_000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.schema.validate()?;
        self.workload_mix.validate()?;
        if self.record_count == 0 {
            return Err(Error::InvalidConfig("record count must be positive".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be positive".into()));
        }
        if self.workers == 0 {
            return Err(Error::InvalidConfig("workers must be positive".into()));
        }
        if self.max_scan_length == 0 {
            return Err(Error::InvalidConfig("max scan length must be positive".into()));
        }
        if self.histogram_bin_width == 0 {
            return Err(Error::InvalidConfig("histogram bin width must be positive".into()));
        }
        for dist in [self.extend_key_distribution, self.run_key_distribution] {
            if let KeyDistribution::Zipfian { theta } = dist {
                if !(theta > 0.0 && theta < 1.0) {
                    return Err(Error::InvalidConfig(format!(
                        "zipfian theta must be in (0, 1), got {theta}"
                    )));
                }
            }
        }
        if let Some(t) = self.compaction_threshold {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "compaction threshold must be in (0, 1), got {t}"
                )));
            }
        }
        Ok(())
    }

    /// Volume right after the initial load.
    pub fn initial_volume(&self) -> u64 {
        self.record_count * self.schema.initial_record_size()
    }

    /// Volume after `epoch` extend phases assuming no extend was skipped.
    pub fn analytic_volume(&self, epoch: u32) -> u64 {
        self.initial_volume()
            + epoch as u64 * self.extend_ops_per_epoch * self.schema.extend_delta as u64
    }

    /// Hash identifying the experiment independent of mode, trial count and
    /// run-phase worker count, so reports from different modes can be
    /// matched to each other.
    pub fn experiment_hash(&self) -> u64 {
        let mut canonical = self.clone();
        canonical.mode = Mode::MainRun;
        canonical.trials = 1;
        canonical.workers = 1;
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        crate::hash::fnv64(&json)
    }
}
