use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::Rng;

use super::report::{ExtendSummary, RunSummary};
use crate::backend::{BackendStats, Record, StorageDriver};
use crate::genkit::{
    GenRng, HistogramLengthSampler, KeyChooser, OperationMixSampler, Stream, StreamSeed,
    ValueGenerator,
};
use crate::hash::TraceHasher;
use crate::metrics::{throughput, LatencyHistogram};
use crate::model::{
    ExperimentConfig, ExtendOutcome, FieldLengthDistribution, LengthLedger, OpType, RecordKey,
};
use crate::{Error, Result};

const SCAN_BATCH: usize = 512;

/// Payload generator shared by every phase of a trial, so a field's bytes
/// depend only on `(trial seed, key, field, length)`.
pub fn value_generator(seed: StreamSeed) -> ValueGenerator {
    ValueGenerator::new(seed.sub_seed(Stream::Values, 0, 0))
}

/// Inserts `config.record_count` records with every field at the initial
/// length.
pub fn load_initial(
    driver: &dyn StorageDriver,
    config: &ExperimentConfig,
    seed: StreamSeed,
) -> Result<LengthLedger> {
    load_uniform(
        driver,
        config,
        config.record_count,
        config.schema.initial_field_length,
        seed,
    )
}

/// Inserts records `0..record_count` with every field `field_length` bytes
/// long into an empty driver.
pub fn load_uniform(
    driver: &dyn StorageDriver,
    config: &ExperimentConfig,
    record_count: u64,
    field_length: u32,
    seed: StreamSeed,
) -> Result<LengthLedger> {
    if record_count == 0 {
        return Err(Error::InvalidConfig("record count must be positive".into()));
    }
    let n = driver.record_count();
    if n != 0 {
        return Err(Error::NotEmpty(n));
    }
    let fields = config.schema.field_count;
    let values = value_generator(seed);
    let mut ledger = LengthLedger::new(fields, config.histogram_bin_width)?;
    let lengths = vec![field_length; fields];
    for i in 0..record_count {
        let key = RecordKey::new(i);
        driver.insert(&key.render(), values.record(key, &lengths))?;
        ledger.insert(key, lengths.clone())?;
    }
    driver.flush()?;
    Ok(ledger)
}

#[derive(Clone, Debug, Default)]
pub struct ExtendPhaseStats {
    pub attempted: u64,
    pub applied: u64,
    pub skipped: u64,
    pub missing: u64,
    pub latency: LatencyHistogram,
    pub trace_hash: u64,
}

impl ExtendPhaseStats {
    pub fn summary(&self) -> ExtendSummary {
        ExtendSummary {
            attempted: self.attempted,
            applied: self.applied,
            skipped: self.skipped,
            missing: self.missing,
            trace_hash: self.trace_hash,
            latency: self.latency.summary().ok(),
        }
    }
}

/// Issues `config.extend_ops_per_epoch` extend attempts. Each picks a key
/// by the extend distribution over the initial records and a field
/// uniformly, then writes the full value at `old + delta` unless that
/// exceeds the field cap.
pub fn run_extend_phase(
    driver: &dyn StorageDriver,
    ledger: &mut LengthLedger,
    config: &ExperimentConfig,
    seed: StreamSeed,
    epoch: u32,
) -> Result<ExtendPhaseStats> {
    let schema = &config.schema;
    let mut keys = KeyChooser::new(
        config.extend_key_distribution,
        config.record_count,
        config.scramble,
        seed.sub_seed(Stream::ExtendKey, epoch, 0),
    )?;
    let mut fields = seed.rng(Stream::ExtendField, epoch, 0);
    let values = value_generator(seed);
    let mut stats = ExtendPhaseStats::default();
    let mut trace = TraceHasher::default();
    let mut buf = Vec::new();
    for _ in 0..config.extend_ops_per_epoch {
        let key = keys.next_key();
        let field = fields.random_range(0..schema.field_count);
        stats.attempted += 1;
        trace.word(key.index());
        trace.word(field as u64);
        if !ledger.contains(key) {
            stats.missing += 1;
            trace.word(u64::MAX);
            continue;
        }
        match ledger.apply_extend(key, field, schema.extend_delta, schema.max_field_length)? {
            ExtendOutcome::Skipped => {
                stats.skipped += 1;
                trace.word(0);
            }
            ExtendOutcome::Applied(len) => {
                buf.resize(len as usize, 0);
                values.fill(key, field, &mut buf);
                let rendered = key.render();
                let t = Instant::now();
                let found = driver.update_field(&rendered, field, &buf)?;
                stats.latency.record(t.elapsed());
                if !found {
                    return Err(Error::Verification(format!(
                        "extend of {rendered}: record missing from {}",
                        driver.name()
                    )));
                }
                stats.applied += 1;
                trace.word(len as u64);
            }
        }
    }
    driver.flush()?;
    stats.trace_hash = trace.finish();
    Ok(stats)
}

#[derive(Clone, Debug)]
pub struct RunPhaseStats {
    pub operations: u64,
    pub wall_time: Duration,
    pub op_counts: BTreeMap<OpType, u64>,
    pub latency: BTreeMap<OpType, LatencyHistogram>,
    pub not_found: u64,
    pub trace_hash: u64,
    pub mean_length_drift: f64,
    pub histogram_emd_bytes: f64,
    pub bytes_read_physical: u64,
}

impl RunPhaseStats {
    pub fn summary(&self, export_histograms: bool) -> Result<RunSummary> {
        let tput = if self.operations == 0 {
            0.0
        } else {
            throughput(self.operations, self.wall_time)?
        };
        let mut latency = BTreeMap::new();
        let mut histograms = BTreeMap::new();
        for (op, h) in &self.latency {
            if h.is_empty() {
                continue;
            }
            latency.insert(op.as_str().to_string(), h.summary()?);
            if export_histograms {
                histograms.insert(op.as_str().to_string(), h.export());
            }
        }
        Ok(RunSummary {
            operations: self.operations,
            wall_time_secs: self.wall_time.as_secs_f64(),
            throughput: tput,
            op_counts: self
                .op_counts
                .iter()
                .map(|(op, &n)| (op.as_str().to_string(), n))
                .collect(),
            latency,
            not_found: self.not_found,
            trace_hash: self.trace_hash,
            mean_length_drift: self.mean_length_drift,
            histogram_emd_bytes: self.histogram_emd_bytes,
            bytes_read_physical: self.bytes_read_physical,
            histograms,
        })
    }
}

struct Worker {
    keys: KeyChooser,
    ops: OperationMixSampler,
    fields: GenRng,
    scans: GenRng,
    lengths: Option<HistogramLengthSampler>,
    latency: [LatencyHistogram; 5],
    counts: [u64; 5],
    not_found: u64,
    trace: TraceHasher,
}

struct Shared<'a> {
    driver: &'a dyn StorageDriver,
    ledger: Mutex<&'a mut LengthLedger>,
    config: &'a ExperimentConfig,
    values: ValueGenerator,
}

impl Worker {
    fn new_length(&mut self, config: &ExperimentConfig) -> u32 {
        match &mut self.lengths {
            Some(s) => s.sample_length() as u32,
            None => config.schema.initial_field_length,
        }
    }

    fn step(&mut self, sh: &Shared<'_>) -> Result<()> {
        let op = self.ops.next_operation();
        let key = self.keys.next_key();
        let slot = op as usize;
        self.counts[slot] += 1;
        self.trace.word(op.code());
        self.trace.word(key.index());
        let driver = sh.driver;
        let elapsed;
        let outcome: u64;
        match op {
            OpType::Read => {
                let rendered = key.render();
                let t = Instant::now();
                let r = driver.read(&rendered)?;
                elapsed = t.elapsed();
                outcome = r.map_or(u64::MAX, |r| r.iter().map(|v| v.len() as u64).sum());
            }
            OpType::Scan => {
                let count = self.scans.random_range(1..=sh.config.max_scan_length) as usize;
                let rendered = key.render();
                let t = Instant::now();
                let r = driver.scan(&rendered, count)?;
                elapsed = t.elapsed();
                outcome = r.len() as u64;
            }
            OpType::Update => {
                let field = self.fields.random_range(0..sh.config.schema.field_count);
                let len = self.new_length(sh.config);
                let value = sh.values.generate(key, field, len as usize);
                let rendered = key.render();
                let mut ledger = sh.ledger.lock().unwrap();
                let t = Instant::now();
                let found = driver.update_field(&rendered, field, &value)?;
                elapsed = t.elapsed();
                if found != ledger.contains(key) {
                    return Err(mismatch(driver, &rendered, "update"));
                }
                if found {
                    ledger.set_field(key, field, len)?;
                }
                outcome = if found { len as u64 } else { u64::MAX };
            }
            OpType::Insert => {
                let lengths: Vec<u32> = (0..sh.config.schema.field_count)
                    .map(|_| self.new_length(sh.config))
                    .collect();
                let mut ledger = sh.ledger.lock().unwrap();
                let fresh = RecordKey::new(ledger.next_index());
                let record: Record = sh.values.record(fresh, &lengths);
                let rendered = fresh.render();
                let t = Instant::now();
                driver.insert(&rendered, record)?;
                elapsed = t.elapsed();
                outcome = fresh.index();
                ledger.insert(fresh, lengths)?;
            }
            OpType::Delete => {
                let rendered = key.render();
                let mut ledger = sh.ledger.lock().unwrap();
                let t = Instant::now();
                let found = driver.delete(&rendered)?;
                elapsed = t.elapsed();
                if found != ledger.contains(key) {
                    return Err(mismatch(driver, &rendered, "delete"));
                }
                ledger.remove(key);
                outcome = found as u64;
            }
        }
        if outcome == u64::MAX {
            self.not_found += 1;
        }
        self.trace.word(outcome);
        self.latency[slot].record(elapsed);
        Ok(())
    }
}

fn mismatch(driver: &dyn StorageDriver, key: &str, op: &str) -> Error {
    Error::Verification(format!(
        "{op} of {key}: {} and the length ledger disagree on existence",
        driver.name()
    ))
}

/// Issues `config.run_ops_per_epoch` operations drawn from the workload mix
/// with keys over `[0, keyspace)`, split across `config.workers` threads.
/// Inserted and updated lengths come from the size histogram frozen at
/// phase start, so the distribution is preserved.
pub fn run_run_phase(
    driver: &dyn StorageDriver,
    ledger: &mut LengthLedger,
    config: &ExperimentConfig,
    seed: StreamSeed,
    epoch: u32,
    keyspace: u64,
) -> Result<RunPhaseStats> {
    let frozen = ledger.live_histogram().clone();
    let mean_before = ledger.mean_field_length();
    let read_before = driver.stats().get(BackendStats::BYTES_READ_PHYSICAL);
    let workers = config.workers.max(1);

    let mut plan = Vec::with_capacity(workers);
    for w in 0..workers {
        let share = config.run_ops_per_epoch / workers as u64
            + u64::from((w as u64) < config.run_ops_per_epoch % workers as u64);
        let lengths = match config.field_length_distribution {
            FieldLengthDistribution::Histogram if !frozen.is_empty() => {
                Some(HistogramLengthSampler::new(
                    &frozen,
                    config.schema.max_field_length as u64,
                    seed.sub_seed(Stream::RunLength, epoch, w),
                )?)
            }
            _ => None,
        };
        let worker = Worker {
            keys: KeyChooser::new(
                config.run_key_distribution,
                keyspace,
                config.scramble,
                seed.sub_seed(Stream::RunKey, epoch, w),
            )?,
            ops: OperationMixSampler::new(
                &config.workload_mix,
                seed.sub_seed(Stream::RunOp, epoch, w),
            )?,
            fields: seed.rng(Stream::RunField, epoch, w),
            scans: seed.rng(Stream::ScanLength, epoch, w),
            lengths,
            latency: Default::default(),
            counts: [0; 5],
            not_found: 0,
            trace: TraceHasher::default(),
        };
        plan.push((worker, share));
    }

    let shared = Shared {
        driver,
        ledger: Mutex::new(ledger),
        config,
        values: value_generator(seed),
    };
    let start = Instant::now();
    let finished: Vec<Result<Worker>> = if workers == 1 {
        plan.into_iter()
            .map(|(mut w, n)| {
                for _ in 0..n {
                    w.step(&shared)?;
                }
                Ok(w)
            })
            .collect()
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = plan
                .into_iter()
                .map(|(mut w, n)| {
                    let shared = &shared;
                    s.spawn(move || -> Result<Worker> {
                        for _ in 0..n {
                            w.step(shared)?;
                        }
                        Ok(w)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("run-phase worker panicked"))
                .collect()
        })
    };
    let wall_time = start.elapsed();
    driver.flush()?;
    let ledger = shared.ledger.into_inner().unwrap();

    let mut latency: BTreeMap<OpType, LatencyHistogram> = BTreeMap::new();
    let mut op_counts = BTreeMap::new();
    let mut not_found = 0;
    let mut trace = TraceHasher::default();
    for w in finished {
        let w = w?;
        for op in OpType::ALL {
            let i = op as usize;
            if w.counts[i] > 0 {
                *op_counts.entry(op).or_insert(0) += w.counts[i];
                latency.entry(op).or_default().merge(&w.latency[i]);
            }
        }
        not_found += w.not_found;
        trace.word(w.trace.finish());
    }
    let operations = op_counts.values().sum();

    let mean_length_drift = match (mean_before, ledger.mean_field_length()) {
        (Some(b), Some(a)) if b > 0.0 => (a - b).abs() / b,
        _ => 0.0,
    };
    let histogram_emd_bytes = if frozen.is_empty() || ledger.live_histogram().is_empty() {
        0.0
    } else {
        frozen.earth_movers_distance(ledger.live_histogram())?
    };
    let read_after = driver.stats().get(BackendStats::BYTES_READ_PHYSICAL);
    Ok(RunPhaseStats {
        operations,
        wall_time,
        op_counts,
        latency,
        not_found,
        trace_hash: trace.finish(),
        mean_length_drift,
        histogram_emd_bytes,
        bytes_read_physical: read_after.saturating_sub(read_before),
    })
}

/// Checks that the driver holds as many records as the ledger and that
/// `samples` randomly chosen records have the ledger's field lengths.
pub fn check_consistency(
    driver: &dyn StorageDriver,
    ledger: &LengthLedger,
    samples: usize,
    seed: u64,
) -> Result<()> {
    if driver.record_count() != ledger.len() {
        return Err(Error::Verification(format!(
            "{} holds {} records, ledger has {}",
            driver.name(),
            driver.record_count(),
            ledger.len()
        )));
    }
    if samples == 0 || ledger.is_empty() {
        return Ok(());
    }
    let keys: Vec<RecordKey> = ledger.iter().map(|(k, _)| k).collect();
    let mut rng = <GenRng as rand::SeedableRng>::seed_from_u64(seed);
    for i in rand::seq::index::sample(&mut rng, keys.len(), samples.min(keys.len())) {
        let key = keys[i];
        let expected = ledger.get(key).unwrap();
        let rendered = key.render();
        let record = driver
            .read(&rendered)?
            .ok_or_else(|| Error::Verification(format!("{rendered} missing from driver")))?;
        let actual: Vec<u32> = record.iter().map(|v| v.len() as u32).collect();
        if actual != expected {
            return Err(Error::Verification(format!(
                "{rendered}: driver lengths {actual:?}, ledger {expected:?}"
            )));
        }
    }
    Ok(())
}

/// Full logical scan in key order.
pub fn logical_scan(driver: &dyn StorageDriver) -> Result<Vec<(String, Record)>> {
    let mut out = Vec::with_capacity(driver.record_count());
    for_each_record(driver, |k, r| {
        out.push((k, r));
        Ok(())
    })?;
    Ok(out)
}

/// Digest of the full logical state: every key and field value in order.
pub fn logical_digest(driver: &dyn StorageDriver) -> Result<u64> {
    let mut h = TraceHasher::default();
    for_each_record(driver, |k, r| {
        h.bytes(k.as_bytes());
        h.word(r.len() as u64);
        for v in &r {
            h.bytes(v);
        }
        Ok(())
    })?;
    Ok(h.finish())
}

fn for_each_record(
    driver: &dyn StorageDriver,
    mut each: impl FnMut(String, Record) -> Result<()>,
) -> Result<()> {
    let mut start = String::new();
    loop {
        let batch = driver.scan(&start, SCAN_BATCH)?;
        let done = batch.len() < SCAN_BATCH;
        if let Some((last, _)) = batch.last() {
            start = format!("{last}\0");
        }
        for (k, r) in batch {
            each(k, r)?;
        }
        if done {
            return Ok(());
        }
    }
}
